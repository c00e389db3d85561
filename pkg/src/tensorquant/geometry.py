"""Chart-local Riemannian and affine calculus.

Charts carry coordinate names and a domain box.  Metrics, connections and
symmetric tensors store :class:`~tensorquant.expr.Expr` components.  Index
tuples are 0-based; symmetric tensors are keyed by nondecreasing tuples.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, TypeVar

import numpy as np

from .expr import (
    DEFAULT_EQUIV,
    ONE,
    RESERVED,
    ZERO,
    Const,
    EquivConfig,
    Expr,
    Sym,
    add,
    as_expr,
    compile_exprs,
    diff,
    div,
    equiv,
    mul,
    neg,
    sample_values,
    simplify,
    sub,
    substitute,
)

COVARIANT = "covariant"
CONTRAVARIANT = "contravariant"
FIBER_RANGE = 2.0
COND_LIMIT = 1e12


class GeometryError(Exception):
    pass


class SingularMetricError(GeometryError):
    pass


@dataclass(frozen=True)
class Chart:
    """A single coordinate system with an open domain box.

    ``domain`` bounds may be infinite; ``sample`` is the finite box used for
    randomized equality checks (defaults to the domain with infinite ends cut).
    """

    coords: tuple[str, ...]
    domain: tuple[tuple[float, float], ...] | None = None
    sample: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        coords = tuple(self.coords)
        object.__setattr__(self, "coords", coords)
        if not coords:
            raise GeometryError("chart needs at least one coordinate")
        if len(set(coords)) != len(coords):
            raise GeometryError(f"coordinate names not distinct: {coords}")
        for c in coords:
            if c in RESERVED or not c.isidentifier():
                raise GeometryError(f"invalid coordinate name {c!r}")
        fiber = set(self.velocities) | set(self.momenta)
        if fiber & set(coords):
            raise GeometryError("coordinate names clash with fiber coordinate names")
        domain = self.domain or tuple((-math.inf, math.inf) for _ in coords)
        domain = tuple((float(lo), float(hi)) for lo, hi in domain)
        if len(domain) != len(coords):
            raise GeometryError("domain box has wrong dimension")
        for lo, hi in domain:
            if not lo < hi:
                raise GeometryError(f"empty domain interval ({lo}, {hi})")
        object.__setattr__(self, "domain", domain)
        if self.sample is None:
            sample = tuple(_finite_interval(lo, hi) for lo, hi in domain)
        else:
            sample = tuple((float(lo), float(hi)) for lo, hi in self.sample)
        if len(sample) != len(coords) or any(not (math.isfinite(lo) and math.isfinite(hi) and lo < hi)
                                              for lo, hi in sample):
            raise GeometryError("sample box must be finite and nonempty in every coordinate")
        object.__setattr__(self, "sample", sample)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def velocities(self) -> tuple[str, ...]:
        return tuple(f"d{c}" for c in self.coords)

    @property
    def momenta(self) -> tuple[str, ...]:
        return tuple(f"p_{c}" for c in self.coords)

    def symbols(self) -> list[Sym]:
        return [Sym(c) for c in self.coords]

    def index(self, name: str) -> int:
        return self.coords.index(name)

    def box(self, fiber: str | None = None) -> dict[str, tuple[float, float]]:
        """Sampling box over the coordinates, optionally with velocities or momenta."""
        out = dict(zip(self.coords, self.sample))
        if fiber in ("velocity", "both"):
            out.update({v: (-FIBER_RANGE, FIBER_RANGE) for v in self.velocities})
        if fiber in ("momentum", "both"):
            out.update({p: (-FIBER_RANGE, FIBER_RANGE) for p in self.momenta})
        return out

    def contains(self, point: Sequence[float]) -> bool:
        return all(lo < x < hi for x, (lo, hi) in zip(point, self.domain))


def _finite_interval(lo: float, hi: float) -> tuple[float, float]:
    if math.isfinite(lo) and math.isfinite(hi):
        return lo, hi
    if math.isfinite(lo):
        return lo, lo + 2.0
    if math.isfinite(hi):
        return hi - 2.0, hi
    return -1.0, 1.0


def index_tuples(n: int, r: int) -> Iterable[tuple[int, ...]]:
    return itertools.product(range(n), repeat=r)


def sorted_tuples(n: int, r: int) -> Iterable[tuple[int, ...]]:
    return itertools.combinations_with_replacement(range(n), r)


def multiplicity(key: Sequence[int]) -> int:
    """Number of distinct orderings of an index tuple, ``r!/alpha!``."""
    out = math.factorial(len(key))
    for c in Counter(key).values():
        out //= math.factorial(c)
    return out


def multi_index(key: Sequence[int], n: int) -> tuple[int, ...]:
    alpha = [0] * n
    for j in key:
        alpha[j] += 1
    return tuple(alpha)


def key_of(alpha: Sequence[int]) -> tuple[int, ...]:
    return tuple(j for j, a in enumerate(alpha) for _ in range(a))


# ---------------------------------------------------------------------------
# tensors


@dataclass(frozen=True)
class SymTensor:
    """Totally symmetric tensor; ``components`` maps sorted index tuples to values.

    Missing keys are zero.  The full array is recovered by symmetry.
    """

    chart: Chart
    variance: str
    order: int
    components: Mapping[tuple[int, ...], Expr] = field(default_factory=dict)

    def __post_init__(self):
        if self.variance not in (COVARIANT, CONTRAVARIANT):
            raise GeometryError(f"unknown variance {self.variance!r}")
        if self.order < 0:
            raise GeometryError("negative tensor order")
        comps = {}
        for key, value in self.components.items():
            key = tuple(key)
            if len(key) != self.order or any(not 0 <= j < self.chart.dim for j in key):
                raise GeometryError(f"bad index tuple {key} for order {self.order}")
            if list(key) != sorted(key):
                raise GeometryError(f"index tuple {key} is not nondecreasing")
            value = as_expr(value)
            if value != ZERO:
                comps[key] = value
        object.__setattr__(self, "components", comps)

    @classmethod
    def scalar(cls, chart: Chart, value, variance: str = CONTRAVARIANT) -> "SymTensor":
        return cls(chart, variance, 0, {(): as_expr(value)})

    @classmethod
    def from_names(cls, chart: Chart, variance: str, order: int,
                   components: Mapping[str, object]) -> "SymTensor":
        """Build from keys such as ``"th ph"`` (any order of names; ``""`` for order 0)."""
        comps: dict[tuple[int, ...], Expr] = {}
        for names, value in components.items():
            key = tuple(sorted(chart.index(s) for s in names.split()))
            if key in comps:
                raise GeometryError(f"duplicate component {names!r}")
            comps[key] = as_expr(value)
        return cls(chart, variance, order, comps)

    def __getitem__(self, key: Sequence[int]) -> Expr:
        return self.components.get(tuple(sorted(key)), ZERO)

    def full(self) -> dict[tuple[int, ...], Expr]:
        return {k: self[k] for k in index_tuples(self.chart.dim, self.order)}

    def map(self, fn: Callable[[Expr], Expr]) -> "SymTensor":
        return SymTensor(self.chart, self.variance, self.order,
                         {k: fn(v) for k, v in self.components.items()})

    def scale(self, factor) -> "SymTensor":
        factor = as_expr(factor)
        return self.map(lambda v: mul(factor, v))

    def at(self, point: Mapping[str, complex]) -> np.ndarray:
        """Full numeric component array at a point."""
        from .expr import evaluate

        n, r = self.chart.dim, self.order
        out = np.zeros((n,) * r, dtype=complex)
        for key, value in self.components.items():
            v = evaluate(value, point)
            for perm in set(itertools.permutations(key)):
                out[perm] = v
        return out

    def names(self, key: Sequence[int]) -> str:
        return " ".join(self.chart.coords[j] for j in key)

    def equiv(self, other: "SymTensor", cfg: EquivConfig = DEFAULT_EQUIV, fiber: str | None = None) -> bool:
        if (self.order, self.variance) != (other.order, other.variance):
            return False
        box = self.chart.box(fiber or "both")
        keys = set(self.components) | set(other.components)
        return all(equiv(self[k], other[k], box, cfg=cfg) for k in sorted(keys))


@dataclass(frozen=True)
class InhomTensor:
    """Sum of symmetric tensors of distinct orders, all with the same variance."""

    parts: Mapping[int, SymTensor]

    def __post_init__(self):
        parts = dict(sorted(self.parts.items()))
        if not parts:
            raise GeometryError("empty inhomogeneous tensor")
        variances = {p.variance for p in parts.values()}
        if len(variances) != 1:
            raise GeometryError("mixed variances in inhomogeneous tensor")
        for k, p in parts.items():
            if p.order != k:
                raise GeometryError(f"part keyed {k} has order {p.order}")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def of(cls, *tensors: SymTensor) -> "InhomTensor":
        parts: dict[int, SymTensor] = {}
        for t in tensors:
            if t.order in parts:
                raise GeometryError(f"two components of order {t.order}")
            parts[t.order] = t
        return cls(parts)

    @property
    def chart(self) -> Chart:
        return next(iter(self.parts.values())).chart

    @property
    def variance(self) -> str:
        return next(iter(self.parts.values())).variance

    @property
    def order(self) -> int:
        nonzero = [k for k, p in self.parts.items() if p.components]
        return max(nonzero) if nonzero else 0

    def part(self, r: int) -> SymTensor:
        return self.parts.get(r, SymTensor(self.chart, self.variance, r))

    def equiv(self, other: "InhomTensor", cfg: EquivConfig = DEFAULT_EQUIV) -> bool:
        orders = set(self.parts) | set(other.parts)
        return all(self.part(r).equiv(other.part(r), cfg) for r in sorted(orders))


def as_inhom(t: SymTensor | InhomTensor) -> InhomTensor:
    return t if isinstance(t, InhomTensor) else InhomTensor.of(t)


# ---------------------------------------------------------------------------
# metric and connection


def _det(m: list[list[Expr]]) -> Expr:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return sub(mul(m[0][0], m[1][1]), mul(m[0][1], m[1][0]))
    out: Expr = ZERO
    for j in range(n):
        if m[0][j] == ZERO:
            continue
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = mul(m[0][j], _det(minor))
        out = add(out, term) if j % 2 == 0 else sub(out, term)
    return out


def _cofactor_inverse(m: list[list[Expr]], det: Expr) -> list[list[Expr]]:
    n = len(m)
    if n == 1:
        return [[div(ONE, det)]]
    inv = [[ZERO] * n for _ in range(n)]
    for j in range(n):
        for k in range(n):
            minor = [row[:k] + row[k + 1:] for i, row in enumerate(m) if i != j]
            c = _det(minor)
            if (j + k) % 2:
                c = neg(c)
            inv[k][j] = simplify(div(c, det))
    return inv


class Metric:
    """Symmetric metric components ``g[j][k]`` with cached inverse and Levi-Civita connection.

    The symbolic inverse is formed by cofactors for ``dim <= 4``; larger charts
    only support :meth:`inverse_at`.
    """

    def __init__(self, chart: Chart, components: Sequence[Sequence[Expr | str | float]],
                 cfg: EquivConfig = DEFAULT_EQUIV):
        n = chart.dim
        g = [[as_expr(c) for c in row] for row in components]
        if len(g) != n or any(len(row) != n for row in g):
            raise GeometryError(f"metric must be {n}x{n}")
        for j in range(n):
            for k in range(j + 1, n):
                if g[j][k] != g[k][j]:
                    raise GeometryError(f"metric not symmetric at ({j},{k})")
        self.chart = chart
        self.g = g
        self.det = simplify(_det(g))
        self._check_invertible(cfg)
        self.inverse = _cofactor_inverse(g, self.det) if n <= 4 else None
        self.connection = christoffel(self) if self.inverse is not None else None

    @classmethod
    def from_upper(cls, chart: Chart, rows: Sequence[Sequence], cfg: EquivConfig = DEFAULT_EQUIV) -> "Metric":
        """Build from upper-triangle rows: row ``j`` lists ``g[j][j:]``."""
        n = chart.dim
        if len(rows) != n or any(len(row) != n - j for j, row in enumerate(rows)):
            raise GeometryError("upper-triangle metric rows have the wrong shape")
        full = [[ZERO] * n for _ in range(n)]
        for j, row in enumerate(rows):
            for off, value in enumerate(row):
                full[j][j + off] = full[j + off][j] = as_expr(value)
        return cls(chart, full, cfg)

    @classmethod
    def diagonal(cls, chart: Chart, diag: Sequence) -> "Metric":
        n = chart.dim
        return cls(chart, [[as_expr(diag[j]) if j == k else ZERO for k in range(n)] for j in range(n)])

    def _check_invertible(self, cfg: EquivConfig) -> None:
        entries = [self.g[j][k] for j in range(self.chart.dim) for k in range(self.chart.dim)]
        points, values = sample_values(entries + [self.det], self.chart.box(), cfg)
        n = self.chart.dim
        mats = np.stack(values[:-1], axis=-1).reshape(-1, n, n)
        for m in mats:
            if np.linalg.cond(m) > COND_LIMIT:
                raise SingularMetricError("metric is singular or ill-conditioned at a sample point")

    def inverse_at(self, point: Sequence[float]) -> np.ndarray:
        env = dict(zip(self.chart.coords, point))
        from .expr import evaluate

        m = np.array([[evaluate(c, env) for c in row] for row in self.g])
        if np.linalg.cond(m) > COND_LIMIT:
            raise SingularMetricError(f"metric singular at {tuple(point)}")
        return np.linalg.inv(m)

    def require_inverse(self) -> list[list[Expr]]:
        if self.inverse is None:
            raise GeometryError("symbolic inverse metric only available for dim <= 4")
        return self.inverse

    def tensor(self) -> SymTensor:
        n = self.chart.dim
        return SymTensor(self.chart, COVARIANT, 2, {(j, k): self.g[j][k] for j, k in sorted_tuples(n, 2)})

    def inverse_tensor(self) -> SymTensor:
        inv = self.require_inverse()
        n = self.chart.dim
        return SymTensor(self.chart, CONTRAVARIANT, 2, {(j, k): inv[j][k] for j, k in sorted_tuples(n, 2)})


class Connection:
    """Torsionless connection; ``gamma[j][k][l]`` is the symbol with upper index ``j``."""

    def __init__(self, chart: Chart, gamma: Sequence[Sequence[Sequence[Expr]]],
                 cfg: EquivConfig | None = DEFAULT_EQUIV):
        n = chart.dim
        gam = tuple(tuple(tuple(as_expr(c) for c in row) for row in plane) for plane in gamma)
        if len(gam) != n or any(len(p) != n or any(len(r) != n for r in p) for p in gam):
            raise GeometryError(f"connection must be {n}x{n}x{n}")
        if cfg is not None:
            box = chart.box()
            for j in range(n):
                for k in range(n):
                    for l in range(k + 1, n):
                        a, b = gam[j][k][l], gam[j][l][k]
                        if a != b and not equiv(a, b, box, cfg=cfg):
                            raise GeometryError(f"connection not symmetric in lower indices at ({j},{k},{l})")
        self.chart = chart
        self.gamma = gam
        self._cache: dict = {}

    @classmethod
    def flat(cls, chart: Chart) -> "Connection":
        n = chart.dim
        return cls(chart, [[[ZERO] * n for _ in range(n)] for _ in range(n)], cfg=None)

    @property
    def is_flat(self) -> bool:
        return all(c == ZERO for p in self.gamma for r in p for c in r)

    def nonzero(self) -> dict[tuple[int, int, int], Expr]:
        n = self.chart.dim
        return {(j, k, l): self.gamma[j][k][l]
                for j in range(n) for k in range(n) for l in range(k, n) if self.gamma[j][k][l] != ZERO}

    def numeric(self) -> Callable[[np.ndarray], np.ndarray]:
        """Vectorized evaluator: coordinates of shape ``(n, m)`` to symbols of shape ``(n, n, n, m)``."""
        if "numeric" not in self._cache:
            n = self.chart.dim
            keys = list(self.nonzero().items())
            fn = compile_exprs([e for _, e in keys], self.chart.coords) if keys else None

            def gamma_at(x: np.ndarray) -> np.ndarray:
                m = x.shape[1]
                out = np.zeros((n, n, n, m))
                if fn is None:
                    return out
                values = fn(*x)
                for ((j, k, l), _), v in zip(keys, values):
                    out[j, k, l] = out[j, l, k] = v.real
                return out

            self._cache["numeric"] = gamma_at
        return self._cache["numeric"]


def christoffel(g: Metric) -> Connection:
    """Levi-Civita symbols ``1/2 g^{jm} (d_k g_ml + d_l g_mk - d_m g_kl)``."""
    chart = g.chart
    n = chart.dim
    inv = g.require_inverse()
    x = chart.coords
    dg = [[[diff(g.g[a][b], x[c]) for c in range(n)] for b in range(n)] for a in range(n)]
    gamma = [[[ZERO] * n for _ in range(n)] for _ in range(n)]
    half = Const(0.5)
    for k in range(n):
        for l in range(k, n):
            lowered = [mul(half, add(dg[m][l][k], sub(dg[m][k][l], dg[k][l][m]))) for m in range(n)]
            for j in range(n):
                total: Expr = ZERO
                for m in range(n):
                    total = add(total, mul(inv[j][m], lowered[m]))
                total = simplify(total)
                gamma[j][k][l] = gamma[j][l][k] = total
    return Connection(chart, gamma, cfg=None)


# ---------------------------------------------------------------------------
# covariant differentials

T = TypeVar("T")


@dataclass(frozen=True)
class _Algebra:
    """Component operations for the covariant differential (scalars or operator coefficients)."""

    zero: Callable[[], object]
    deriv: Callable[[object, int], object]
    axpy: Callable[[object, Expr, object], object]  # acc + coef * value
    is_zero: Callable[[object], bool]


def _expr_algebra(chart: Chart) -> _Algebra:
    return _Algebra(
        zero=lambda: ZERO,
        deriv=lambda e, k: diff(e, chart.coords[k]),
        axpy=lambda acc, c, v: add(acc, mul(c, v)),
        is_zero=lambda e: e == ZERO,
    )


def _covariant_step(full: Mapping[tuple[int, ...], object], r: int, gamma: Connection,
                    alg: _Algebra) -> dict[tuple[int, ...], object]:
    """``(nabla T)_{k j1..jr} = d_k T_{j1..jr} - sum_m Gamma^l_{k j_m} T_{j1..l..jr}``."""
    n = gamma.chart.dim
    out = {}
    for k in range(n):
        for idx in index_tuples(n, r):
            acc = alg.deriv(full[idx], k)
            for m in range(r):
                for l in range(n):
                    g = gamma.gamma[l][k][idx[m]]
                    if g == ZERO:
                        continue
                    other = full[idx[:m] + (l,) + idx[m + 1:]]
                    if alg.is_zero(other):
                        continue
                    acc = alg.axpy(acc, neg(g), other)
            out[(k,) + idx] = acc
    return out


def covariant_differential(t: SymTensor | Mapping[tuple[int, ...], Expr], gamma: Connection,
                           order: int | None = None) -> dict[tuple[int, ...], Expr]:
    """Full (non-symmetrized) component array of the covariant differential.

    ``t`` is a covariant :class:`SymTensor` or a full component dict of the given order.
    The new index comes first.
    """
    if isinstance(t, SymTensor):
        if t.variance != COVARIANT:
            raise GeometryError("covariant differential needs a covariant tensor")
        order, full = t.order, t.full()
    else:
        full = dict(t)
        if order is None:
            order = len(next(iter(full)))
    out = _covariant_step(full, order, gamma, _expr_algebra(gamma.chart))
    return {k: simplify(v) for k, v in out.items()}


def symmetrize(full: Mapping[tuple[int, ...], T], n: int, r: int,
               average: Callable[[list[T]], T]) -> dict[tuple[int, ...], T]:
    return {key: average([full[p] for p in itertools.permutations(key)]) for key in sorted_tuples(n, r)}


def _average_exprs(values: list[Expr]) -> Expr:
    total: Expr = ZERO
    for v in values:
        total = add(total, v)
    return simplify(mul(Const(1 / len(values)), total))


def iterated_differential(f: Expr, gamma: Connection, r: int) -> dict[tuple[int, ...], Expr]:
    """Full array of the ``r``-fold iterated covariant differential of a scalar."""
    if r < 0:
        raise GeometryError("negative order")
    full: dict[tuple[int, ...], Expr] = {(): as_expr(f)}
    alg = _expr_algebra(gamma.chart)
    for k in range(r):
        full = {key: simplify(v) for key, v in _covariant_step(full, k, gamma, alg).items()}
    return full


def sym_iterated_differential(f: Expr, gamma: Connection, r: int) -> SymTensor:
    """Symmetrization (average over index permutations) of the iterated covariant differential."""
    full = iterated_differential(f, gamma, r)
    comps = symmetrize(full, gamma.chart.dim, r, _average_exprs)
    return SymTensor(gamma.chart, COVARIANT, r, comps)


def contract(phi: SymTensor, a: SymTensor) -> Expr:
    """Full contraction ``sum_J phi^J a_J`` over all index tuples (no factorial weights)."""
    if phi.order != a.order:
        raise GeometryError(f"order mismatch in contraction: {phi.order} vs {a.order}")
    if phi.variance == a.variance:
        raise GeometryError("contraction needs one contravariant and one covariant tensor")
    total: Expr = ZERO
    for key, value in phi.components.items():
        other = a[key]
        if other == ZERO:
            continue
        total = add(total, mul(Const(multiplicity(key)), mul(value, other)))
    return simplify(total)


def laplacian(f: Expr, g: Metric) -> Expr:
    """``<g^{-1}, nabla^2_sym f>`` for the Levi-Civita connection of ``g``."""
    return contract(g.inverse_tensor(), sym_iterated_differential(as_expr(f), g.connection, 2))


# ---------------------------------------------------------------------------
# TM <-> T*M


@dataclass(frozen=True)
class MetricTransport:
    """Substitutions ``p_j := g_jk dx^k`` and ``dx^j := g^jk p_k``."""

    chart: Chart
    momentum_of_velocity: Mapping[str, Expr]
    velocity_of_momentum: Mapping[str, Expr]

    def to_velocity(self, e: Expr) -> Expr:
        return simplify(substitute(e, self.momentum_of_velocity))

    def to_momentum(self, e: Expr) -> Expr:
        return simplify(substitute(e, self.velocity_of_momentum))


def metric_transport(g: Metric) -> MetricTransport:
    chart = g.chart
    n = chart.dim
    inv = g.require_inverse()
    v = [Sym(s) for s in chart.velocities]
    p = [Sym(s) for s in chart.momenta]
    p_of_v = {}
    v_of_p = {}
    for j in range(n):
        pj: Expr = ZERO
        vj: Expr = ZERO
        for k in range(n):
            pj = add(pj, mul(g.g[j][k], v[k]))
            vj = add(vj, mul(inv[j][k], p[k]))
        p_of_v[chart.momenta[j]] = simplify(pj)
        v_of_p[chart.velocities[j]] = simplify(vj)
    return MetricTransport(chart, p_of_v, v_of_p)
