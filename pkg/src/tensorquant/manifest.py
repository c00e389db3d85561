"""JSON manifests: validation and construction of the objects a run needs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .expr import DEFAULT_SEED, HBAR, EquivConfig, Expr, ExprError, free_symbols, parse
from .expmap import FDConfig, IntegratorConfig
from .geometry import (
    CONTRAVARIANT,
    COVARIANT,
    Chart,
    Connection,
    GeometryError,
    Metric,
    SymTensor,
)
from .quantizer import DiffOperator

SCHEMA_VERSION = 1

TASK_ARGS: dict[str, dict[str, str]] = {
    # arg -> kind of reference; "?" suffix marks optional args
    "christoffel": {},
    "quantize": {"tensor": "tensors"},
    "dequantize": {"operator": "operators"},
    "symbol": {"operator": "operators", "order": "int?"},
    "poisson": {"F": "fields", "G": "fields"},
    "sode-test": {"hamiltonian": "fields?", "operator": "operators?", "expect": "bool?"},
    "hj": {"S": "fields", "U": "fields?", "E": "number", "expect": "bool?"},
    "broglie": {"S": "fields", "U": "fields?"},
    "expmap-verify": {"f": "fields", "point": "point", "order": "int", "tol": "number?"},
    "scale-check": {"tensor": "tensors", "f": "fields", "point": "point", "s": "number", "tol": "number?"},
}


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str

    def as_dict(self) -> dict:
        return {"path": self.path, "message": self.message}

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class ManifestError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(map(str, diagnostics)))
        self.diagnostics = diagnostics


def load(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _bound(value) -> float:
    return float(value) if value is not None else math.nan


def validate(doc: Any) -> list[Diagnostic]:
    """Every resolution, parse and shape problem in the manifest, without running tasks."""
    diags: list[Diagnostic] = []

    def err(path: str, message: str) -> None:
        diags.append(Diagnostic(path, message))

    if not isinstance(doc, dict):
        return [Diagnostic("$", "manifest must be a JSON object")]
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        err("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")

    chart_doc = doc.get("chart")
    coords: list[str] = []
    if not isinstance(chart_doc, dict):
        err("chart", "missing chart object")
    else:
        coords = chart_doc.get("coordinates")
        if not isinstance(coords, list) or not coords or not all(isinstance(c, str) for c in coords):
            err("chart.coordinates", "expected a nonempty list of names")
            coords = []
        else:
            try:
                _chart(chart_doc)
            except (GeometryError, TypeError, ValueError) as exc:
                err("chart", str(exc))
    n = len(coords)
    base = set(coords)
    fiber = {f"d{c}" for c in coords} | {f"p_{c}" for c in coords}

    def check_expr(path: str, source: Any, allowed: set[str]) -> None:
        if isinstance(source, (int, float)) and not isinstance(source, bool):
            return
        if not isinstance(source, str):
            err(path, "expected an expression string")
            return
        try:
            e = parse(source)
        except ExprError as exc:
            err(path, str(exc))
            return
        extra = sorted(free_symbols(e) - allowed - {HBAR})
        if extra:
            err(path, f"unknown symbol {extra[0]!r}")

    metric = doc.get("metric")
    if not isinstance(metric, list) or len(metric) != n:
        err("metric", f"expected {n} upper-triangle rows")
    else:
        for j, row in enumerate(metric):
            if not isinstance(row, list) or len(row) != n - j:
                err(f"metric[{j}]", f"expected {n - j} entries (upper triangle), got "
                    f"{len(row) if isinstance(row, list) else type(row).__name__}")
                continue
            for k, value in enumerate(row):
                check_expr(f"metric[{j}][{k}]", value, base)

    conn = doc.get("connection")
    if conn is not None:
        if not isinstance(conn, dict):
            err("connection", "expected an object keyed by upper index")
        else:
            for upper, lowers in conn.items():
                if upper not in base:
                    err(f"connection.{upper}", "unknown coordinate")
                if not isinstance(lowers, dict):
                    err(f"connection.{upper}", "expected an object keyed by lower index pairs")
                    continue
                for key, value in lowers.items():
                    names = key.split()
                    if len(names) != 2 or not set(names) <= base:
                        err(f"connection.{upper}.{key}", "expected two coordinate names")
                    check_expr(f"connection.{upper}.{key}", value, base)

    names: dict[str, set[str]] = {"fields": set(), "tensors": set(), "operators": set()}
    fields = doc.get("fields", {})
    if not isinstance(fields, dict):
        err("fields", "expected an object")
    else:
        for name, value in fields.items():
            check_expr(f"fields.{name}", value, base | fiber)
            names["fields"].add(name)
    tensors = doc.get("tensors", {})
    if not isinstance(tensors, dict):
        err("tensors", "expected an object")
    else:
        for name, t in tensors.items():
            path = f"tensors.{name}"
            names["tensors"].add(name)
            if not isinstance(t, dict):
                err(path, "expected an object")
                continue
            if t.get("variance") not in (COVARIANT, CONTRAVARIANT):
                err(f"{path}.variance", "expected 'covariant' or 'contravariant'")
            order = t.get("order")
            if not isinstance(order, int) or isinstance(order, bool) or order < 0:
                err(f"{path}.order", "expected a nonnegative integer")
                order = None
            comps = t.get("components", {})
            if not isinstance(comps, dict):
                err(f"{path}.components", "expected an object")
                continue
            seen = set()
            for key, value in comps.items():
                idx = key.split()
                if not set(idx) <= base:
                    err(f"{path}.components.{key}", "unknown coordinate in index")
                elif order is not None and len(idx) != order:
                    err(f"{path}.components.{key}", f"expected {order} indices")
                sk = tuple(sorted(idx))
                if sk in seen:
                    err(f"{path}.components.{key}", "duplicate symmetric component")
                seen.add(sk)
                check_expr(f"{path}.components.{key}", value, base)
    operators = doc.get("operators", {})
    if not isinstance(operators, dict):
        err("operators", "expected an object")
    else:
        for name, op in operators.items():
            path = f"operators.{name}"
            names["operators"].add(name)
            coeffs = op.get("coefficients") if isinstance(op, dict) else None
            if not isinstance(coeffs, dict):
                err(f"{path}.coefficients", "expected an object")
                continue
            seen = set()
            for key, value in coeffs.items():
                idx = key.split()
                if not set(idx) <= base:
                    err(f"{path}.coefficients.{key}", "unknown coordinate in multi-index")
                sk = tuple(sorted(idx))
                if sk in seen:
                    err(f"{path}.coefficients.{key}", "duplicate multi-index")
                seen.add(sk)
                check_expr(f"{path}.coefficients.{key}", value, base)

    config = doc.get("config", {})
    if not isinstance(config, dict):
        err("config", "expected an object")
    else:
        try:
            _configs(config)
        except (TypeError, ValueError) as exc:
            err("config", str(exc))

    tasks = doc.get("tasks", [])
    if not isinstance(tasks, list):
        err("tasks", "expected a list")
        tasks = []
    for k, task in enumerate(tasks):
        path = f"tasks[{k}]"
        if not isinstance(task, dict):
            err(path, "expected an object")
            continue
        kind = task.get("kind")
        if kind not in TASK_ARGS:
            err(f"{path}.kind", f"unknown task kind {kind!r}")
            continue
        args = task.get("args", {})
        if not isinstance(args, dict):
            err(f"{path}.args", "expected an object")
            continue
        expected_args = TASK_ARGS[kind]
        for arg in args:
            if arg not in expected_args:
                err(f"{path}.args.{arg}", f"unexpected argument for {kind}")
        for arg, ref in expected_args.items():
            optional = ref.endswith("?")
            ref = ref.rstrip("?")
            apath = f"{path}.args.{arg}"
            if arg not in args:
                if not optional:
                    err(apath, "missing argument")
                continue
            value = args[arg]
            if ref in names:
                refs = value if (ref == "tensors" and kind == "quantize" and isinstance(value, list)) else [value]
                for v in refs:
                    if v not in names[ref]:
                        err(apath, f"unknown {ref[:-1]} {v!r}")
            elif ref == "int" and (not isinstance(value, int) or isinstance(value, bool) or value < 0):
                err(apath, "expected a nonnegative integer")
            elif ref == "bool" and not isinstance(value, bool):
                err(apath, "expected true or false")
            elif ref == "number" and (not isinstance(value, (int, float)) or isinstance(value, bool)):
                err(apath, "expected a number")
            elif ref == "point" and (not isinstance(value, list) or len(value) != n
                                     or not all(isinstance(v, (int, float)) for v in value)):
                err(apath, f"expected a list of {n} numbers")
        if kind == "sode-test" and ("hamiltonian" in args) == ("operator" in args):
            err(f"{path}.args", "give exactly one of 'hamiltonian' or 'operator'")
    return diags


def _chart(doc: dict) -> Chart:
    coords = tuple(doc["coordinates"])
    domain = doc.get("domain")
    if domain is not None:
        domain = tuple((-math.inf if lo is None else float(lo), math.inf if hi is None else float(hi))
                       for lo, hi in domain)
    sample = doc.get("sample_box")
    if sample is not None:
        sample = tuple((float(lo), float(hi)) for lo, hi in sample)
    return Chart(coords, domain, sample)


@dataclass(frozen=True)
class RunConfig:
    equiv: EquivConfig
    integrator: IntegratorConfig
    fd: FDConfig

    @property
    def hbar(self) -> float:
        return self.equiv.hbar

    @property
    def seed(self) -> int:
        return self.equiv.seed


def _configs(doc: dict, seed: int | None = None, hbar: float | None = None) -> RunConfig:
    eq = EquivConfig(
        n=int(doc.get("equiv_points", 20)),
        tol=float(doc.get("tol", 1e-9)),
        seed=int(seed if seed is not None else doc.get("seed", DEFAULT_SEED)),
        hbar=float(hbar if hbar is not None else doc.get("hbar", 1.0)),
    )
    if eq.n < 1:
        raise ValueError("equiv_points must be at least 1")
    integ = IntegratorConfig(**doc.get("integrator", {}))
    fd = FDConfig(**doc.get("fd", {}))
    return RunConfig(eq, integ, fd)


@dataclass
class Context:
    """Objects built from a validated manifest."""

    name: str
    chart: Chart
    metric: Metric
    connection: Connection
    fields: dict[str, Expr]
    tensors: dict[str, SymTensor]
    operators: dict[str, DiffOperator]
    config: RunConfig
    tasks: list[dict] = field(default_factory=list)


def build(doc: dict, seed: int | None = None, hbar: float | None = None) -> Context:
    diags = validate(doc)
    if diags:
        raise ManifestError(diags)
    config = _configs(doc.get("config", {}), seed, hbar)
    chart = _chart(doc["chart"])
    metric = Metric.from_upper(chart, doc["metric"], config.equiv)
    if doc.get("connection") is not None:
        n = chart.dim
        gamma = [[["0"] * n for _ in range(n)] for _ in range(n)]
        for upper, lowers in doc["connection"].items():
            j = chart.index(upper)
            for key, value in lowers.items():
                k, l = (chart.index(s) for s in key.split())
                gamma[j][k][l] = gamma[j][l][k] = value
        connection = Connection(chart, [[[parse(str(c)) for c in row] for row in plane] for plane in gamma],
                                config.equiv)
    else:
        connection = metric.connection
    fields = {name: parse(str(v)) for name, v in doc.get("fields", {}).items()}
    tensors = {
        name: SymTensor.from_names(chart, t["variance"], t["order"],
                                   {k: parse(str(v)) for k, v in t.get("components", {}).items()})
        for name, t in doc.get("tensors", {}).items()
    }
    operators = {
        name: DiffOperator.from_names(chart, {k: parse(str(v)) for k, v in op["coefficients"].items()},
                                      config.equiv)
        for name, op in doc.get("operators", {}).items()
    }
    return Context(doc.get("name", ""), chart, metric, connection, fields, tensors, operators, config,
                   list(doc.get("tasks", [])))
