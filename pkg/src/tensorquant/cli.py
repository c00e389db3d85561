"""Command-line front end: run manifest tasks and emit a JSON report."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import manifest as mf
from .expr import Expr, discrepancy, is_zero, to_string
from .expmap import scaled_quantization_check, verify_equivalence
from .geometry import InhomTensor, SymTensor
from .manifest import Context, Diagnostic, ManifestError
from .quantizer import dequantize, quantize, symbol
from .symplectic import (
    PolyHamiltonian,
    broglie_identity_check,
    hamilton_jacobi_residual,
    is_second_order,
    poisson,
    schrodinger_abc,
    tensor_to_hamiltonian,
)

EXIT_PASS, EXIT_FAIL, EXIT_INVALID, EXIT_ERROR = 0, 1, 2, 3
TIMING_KEYS = frozenset({"timing_s", "total_timing_s"})
SIGNIFICANT_DIGITS = 17


# ---------------------------------------------------------------------------
# JSON output


def _number(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = format(x, f".{SIGNIFICANT_DIGITS}g")
    return text if any(c in text for c in ".en") else text + ".0"


def to_json(value: Any, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON with 17 significant digits; complex numbers become ``{"re", "im"}``."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, np.generic):
        value = value.item()
    if value is None or isinstance(value, bool):
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _number(value)
    if isinstance(value, complex):
        return to_json({"re": value.real, "im": value.imag}, indent, _level)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, Expr):
        return json.dumps(to_string(value), ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {to_json(v, indent, _level + 1)}"
                 for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [pad + to_json(v, indent, _level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def strip_timings(report: Any) -> Any:
    if isinstance(report, dict):
        return {k: strip_timings(v) for k, v in report.items() if k not in TIMING_KEYS}
    if isinstance(report, list):
        return [strip_timings(v) for v in report]
    return report


def _real_or_complex(z: complex) -> float | complex:
    z = complex(z)
    return z.real if z.imag == 0 else z


def _array(a: np.ndarray) -> list:
    a = np.asarray(a)
    if np.iscomplexobj(a) and not np.any(a.imag):
        a = a.real
    if np.iscomplexobj(a):
        return [_array(x) for x in a] if a.ndim > 1 else [complex(x) for x in a]
    return a.tolist()


# ---------------------------------------------------------------------------
# tasks


def _tensor_names(t: SymTensor) -> dict[str, str]:
    return {t.names(key): to_string(v) for key, v in sorted(t.components.items())}


def _expr_map(d: dict[str, Expr]) -> dict[str, str]:
    return {k: to_string(v) for k, v in sorted(d.items())}


def _christoffel(ctx: Context, args: dict) -> dict:
    coords = ctx.chart.coords
    gamma = {f"{coords[j]} {coords[k]} {coords[l]}": to_string(e)
             for (j, k, l), e in sorted(ctx.connection.nonzero().items())}
    return {"outputs": {"gamma": gamma}}


def _quantize(ctx: Context, args: dict) -> dict:
    names = args["tensor"] if isinstance(args["tensor"], list) else [args["tensor"]]
    phi = InhomTensor.of(*(ctx.tensors[n] for n in names))
    P = quantize(phi, ctx.connection, cfg=ctx.config.equiv)
    return {"outputs": {"order": P.order, "coefficients": _expr_map(P.named_coeffs())}}


def _dequantize(ctx: Context, args: dict) -> dict:
    phi = dequantize(ctx.operators[args["operator"]], ctx.connection, cfg=ctx.config.equiv)
    parts = {str(r): _tensor_names(t) for r, t in sorted(phi.parts.items())}
    return {"outputs": {"parts": parts}}


def _symbol(ctx: Context, args: dict) -> dict:
    P = ctx.operators[args["operator"]]
    sigma = symbol(P, args.get("order"))
    return {"outputs": {"order": sigma.order, "components": _tensor_names(sigma)}}


def _poisson(ctx: Context, args: dict) -> dict:
    F = PolyHamiltonian(ctx.chart, ctx.fields[args["F"]])
    G = PolyHamiltonian(ctx.chart, ctx.fields[args["G"]])
    return {"outputs": {"bracket": to_string(poisson(F, G).expr)}}


def _sode(ctx: Context, args: dict) -> dict:
    if "operator" in args:
        phi = dequantize(ctx.operators[args["operator"]], ctx.connection, cfg=ctx.config.equiv)
        H = tensor_to_hamiltonian(phi)
    else:
        H = PolyHamiltonian(ctx.chart, ctx.fields[args["hamiltonian"]])
    rep = is_second_order(H, ctx.metric, ctx.config.equiv)
    coords = ctx.chart.coords
    out = {
        "hamiltonian": to_string(H.expr),
        "holds": rep.holds,
        "failing": [coords[j] for j in rep.failing],
        "defects": {coords[j]: to_string(d) for j, d in enumerate(rep.defects)},
        "potential": to_string(rep.potential) if rep.potential is not None else None,
    }
    return _with_expectation(out, "holds", args)


def _with_expectation(out: dict, key: str, args: dict) -> dict:
    result = {"outputs": out}
    if "expect" in args:
        result["verdict"] = {"pass": out[key] == args["expect"], "expected": args["expect"], "observed": out[key]}
    return result


def _hj(ctx: Context, args: dict) -> dict:
    s = ctx.fields[args["S"]]
    u = ctx.fields[args["U"]] if "U" in args else 0
    energy = args["E"]
    residual = hamilton_jacobi_residual(s, u, energy, ctx.metric)
    box = ctx.chart.box()
    a, b, c = schrodinger_abc(s, u, energy, ctx.metric, ctx.config.equiv)
    out = {
        "residual": to_string(residual),
        "is_solution": is_zero(residual, box, ctx.config.equiv),
        "conditions": {"hamilton_jacobi": a, "harmonic": b, "schrodinger": c},
    }
    return _with_expectation(out, "is_solution", args)


def _broglie(ctx: Context, args: dict) -> dict:
    s = ctx.fields[args["S"]]
    u = ctx.fields[args["U"]] if "U" in args else 0
    lhs, rhs = broglie_identity_check(s, u, ctx.metric)
    cfg = ctx.config.equiv
    err = discrepancy(lhs, rhs, ctx.chart.box(), cfg)
    passed = err <= cfg.tol
    return {
        "outputs": {"lhs": to_string(lhs), "rhs": to_string(rhs)},
        "verdict": {"pass": passed, "max_scaled_error": err, "tol": cfg.tol},
    }


def _expmap_verify(ctx: Context, args: dict) -> dict:
    rep = verify_equivalence(ctx.fields[args["f"]], args["point"], args["order"], ctx.connection,
                             tol=args.get("tol"), cfg=ctx.config.integrator, fd=ctx.config.fd,
                             hbar=ctx.config.hbar)
    return {
        "outputs": {"numeric": _array(rep.numeric), "symbolic": _array(rep.symbolic)},
        "verdict": {"pass": rep.passed, "max_rel_err": rep.rel_err, "max_abs_err": rep.max_abs_err,
                    "tol": rep.tol},
    }


def _scale_check(ctx: Context, args: dict) -> dict:
    rep = scaled_quantization_check(ctx.tensors[args["tensor"]], ctx.fields[args["f"]], args["point"],
                                    args["s"], ctx.metric, ctx.connection, ctx.config.integrator,
                                    ctx.config.fd, tol=args.get("tol", 1e-5), hbar=ctx.config.hbar)
    return {
        "outputs": {"value_s": _real_or_complex(rep.value_s), "value_1": _real_or_complex(rep.value_1),
                    "expected": _real_or_complex(rep.expected)},
        "verdict": {"pass": rep.passed, "rel_err": rep.error, "tol": rep.tol},
    }


TASKS: dict[str, Callable[[Context, dict], dict]] = {
    "christoffel": _christoffel,
    "quantize": _quantize,
    "dequantize": _dequantize,
    "symbol": _symbol,
    "poisson": _poisson,
    "sode-test": _sode,
    "hj": _hj,
    "broglie": _broglie,
    "expmap-verify": _expmap_verify,
    "scale-check": _scale_check,
}
assert set(TASKS) == set(mf.TASK_ARGS)


# ---------------------------------------------------------------------------
# run


def _error_entry(exc: BaseException, task: int | None) -> dict:
    return {"task": task, "type": type(exc).__name__, "message": str(exc)}


def run(doc: dict, seed: int | None = None, hbar: float | None = None) -> tuple[dict, int]:
    """Execute every task in order; returns ``(report, exit_code)``."""
    start = time.perf_counter()
    report: dict[str, Any] = {"schema_version": mf.SCHEMA_VERSION, "name": doc.get("name", "")
                              if isinstance(doc, dict) else ""}
    diags = mf.validate(doc)
    if diags:
        report.update(status="invalid", exit_code=EXIT_INVALID,
                      diagnostics=[d.as_dict() for d in diags], tasks=[])
        return report, EXIT_INVALID
    try:
        ctx = mf.build(doc, seed, hbar)
    except Exception as exc:  # noqa: BLE001 - any construction failure is a runtime error
        report.update(status="error", exit_code=EXIT_ERROR, error=_error_entry(exc, None), tasks=[])
        return report, EXIT_ERROR
    cfg = ctx.config
    report["seed"] = cfg.seed
    report["hbar"] = cfg.hbar
    report["config"] = {
        "equiv_points": cfg.equiv.n,
        "tol": cfg.equiv.tol,
        "integrator": {"step": cfg.integrator.step, "method": cfg.integrator.method},
        "fd": {"h0": cfg.fd.h0, "levels": cfg.fd.levels},
    }
    entries = []
    code = EXIT_PASS
    error = None
    for k, task in enumerate(ctx.tasks):
        t0 = time.perf_counter()
        entry: dict[str, Any] = {"index": k, "kind": task["kind"], "args": task.get("args", {})}
        try:
            result = TASKS[task["kind"]](ctx, task.get("args", {}))
        except Exception as exc:  # noqa: BLE001 - abort on the first hard error
            error = _error_entry(exc, k)
            entry["error"] = error
            entry["timing_s"] = time.perf_counter() - t0
            entries.append(entry)
            code = EXIT_ERROR
            break
        entry["outputs"] = result["outputs"]
        entry["verdict"] = result.get("verdict")
        if entry["verdict"] is not None and not entry["verdict"]["pass"]:
            code = EXIT_FAIL
        entry["timing_s"] = time.perf_counter() - t0
        entries.append(entry)
    report["status"] = {EXIT_PASS: "pass", EXIT_FAIL: "fail", EXIT_ERROR: "error"}[code]
    report["exit_code"] = code
    if error is not None:
        report["error"] = error
    report["tasks"] = entries
    report["total_timing_s"] = time.perf_counter() - start
    return report, code


# ---------------------------------------------------------------------------
# shipped manifests and entry point


def shipped_manifests() -> list[str]:
    root = resources.files("tensorquant") / "manifests"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def shipped_manifest(name: str) -> dict:
    text = (resources.files("tensorquant") / "manifests" / f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def _load(path: str) -> dict:
    if not Path(path).exists() and path in shipped_manifests():
        return shipped_manifest(path)
    return mf.load(path)


def _summary_line(entry: dict) -> str:
    verdict = entry.get("verdict")
    state = "error" if "error" in entry else ("-" if verdict is None else ("PASS" if verdict["pass"] else "FAIL"))
    return f"[{entry['index']}] {entry['kind']:<14} {state:<5} {entry['timing_s']:.3f}s"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tensorquant", description="Run or validate quantization manifests.")
    sub_ = parser.add_subparsers(dest="command", required=True)
    p_run = sub_.add_parser("run", help="execute the tasks of a manifest")
    p_run.add_argument("manifest", help="manifest path or the name of a shipped manifest")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--hbar", type=float)
    p_run.add_argument("--out", help="write the report here instead of stdout")
    p_val = sub_.add_parser("validate", help="check a manifest without running it")
    p_val.add_argument("manifest")
    args = parser.parse_args(argv)

    try:
        doc = _load(args.manifest)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot load {args.manifest}: {exc}", file=sys.stderr)
        return EXIT_INVALID

    if args.command == "validate":
        diags = mf.validate(doc)
        for d in diags:
            print(d)
        if not diags:
            print("ok")
        return EXIT_INVALID if diags else EXIT_PASS

    report, code = run(doc, args.seed, args.hbar)
    text = to_json(report) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        for d in report.get("diagnostics", []):
            print(f"{d['path']}: {d['message']}")
        for entry in report["tasks"]:
            print(_summary_line(entry))
        if "error" in report:
            print(f"error: {report['error']['type']}: {report['error']['message']}")
        print(report["status"])
    else:
        sys.stdout.write(text)
    return code


__all__ = ["Diagnostic", "ManifestError", "main", "run", "shipped_manifest", "shipped_manifests",
           "strip_timings", "to_json"]
