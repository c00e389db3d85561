"""Differential operators, quantization of symmetric tensors, symbols and dequantization.

An operator is stored as multi-index -> coefficient, acting by
``P f = sum_alpha c_alpha d^alpha f``.  Quantization sends a contravariant
tensor of order r to ``f -> (-i hbar)^r <Phi, nabla^r_sym f>``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping

from .expr import (
    DEFAULT_EQUIV,
    HBAR,
    ONE,
    ZERO,
    Const,
    EquivConfig,
    Expr,
    Sym,
    add,
    as_expr,
    diff,
    diff_multi,
    div,
    equiv,
    is_zero,
    mul,
    power,
    simplify,
    sub,
)
from .geometry import (
    CONTRAVARIANT,
    Chart,
    Connection,
    InhomTensor,
    Metric,
    SymTensor,
    _Algebra,
    _covariant_step,
    as_inhom,
    key_of,
    multi_index,
    multiplicity,
    symmetrize,
)

ORDER_CAP = 4

MultiIndex = tuple[int, ...]


class OperatorError(Exception):
    pass


def hbar_factor(r: int) -> Expr:
    """``(-i hbar)^r`` (``r`` may be negative)."""
    return mul(Const((-1j) ** r), power(Sym(HBAR), Const(r)))


@dataclass(frozen=True)
class DiffOperator:
    """Linear differential operator on a chart.

    Coefficients that vanish under sampling are dropped at construction, so
    ``order`` is the true order.
    """

    chart: Chart
    coeffs: Mapping[MultiIndex, Expr] = field(default_factory=dict)
    cfg: EquivConfig = field(default=DEFAULT_EQUIV, compare=False, repr=False)

    def __post_init__(self):
        n = self.chart.dim
        box = self.chart.box()
        kept = {}
        for alpha, c in sorted(self.coeffs.items()):
            alpha = tuple(alpha)
            if len(alpha) != n or any(a < 0 for a in alpha):
                raise OperatorError(f"bad multi-index {alpha}")
            c = as_expr(c)
            if not is_zero(c, box, self.cfg):
                kept[alpha] = c
        object.__setattr__(self, "coeffs", kept)

    @classmethod
    def multiplication(cls, chart: Chart, u, cfg: EquivConfig = DEFAULT_EQUIV) -> "DiffOperator":
        return cls(chart, {(0,) * chart.dim: as_expr(u)}, cfg)

    @classmethod
    def partial(cls, chart: Chart, *names: str, coeff=ONE, cfg: EquivConfig = DEFAULT_EQUIV) -> "DiffOperator":
        alpha = multi_index([chart.index(s) for s in names], chart.dim)
        return cls(chart, {alpha: as_expr(coeff)}, cfg)

    @classmethod
    def from_names(cls, chart: Chart, coeffs: Mapping[str, object],
                   cfg: EquivConfig = DEFAULT_EQUIV) -> "DiffOperator":
        """Keys list the differentiation variables, e.g. ``"th th"``; ``""`` is order 0."""
        out: dict[MultiIndex, Expr] = {}
        for names, value in coeffs.items():
            alpha = multi_index([chart.index(s) for s in names.split()], chart.dim)
            if alpha in out:
                raise OperatorError(f"duplicate coefficient {names!r}")
            out[alpha] = as_expr(value)
        return cls(chart, out, cfg)

    @property
    def order(self) -> int:
        return max((sum(a) for a in self.coeffs), default=0)

    def coeff(self, alpha: MultiIndex) -> Expr:
        return self.coeffs.get(tuple(alpha), ZERO)

    def __call__(self, f) -> Expr:
        return apply(self, f)

    def _combine(self, other: "DiffOperator", sign: int) -> "DiffOperator":
        if other.chart != self.chart:
            raise OperatorError("operators live on different charts")
        out = dict(self.coeffs)
        for alpha, c in other.coeffs.items():
            out[alpha] = simplify(add(out.get(alpha, ZERO), c) if sign > 0 else sub(out.get(alpha, ZERO), c))
        return DiffOperator(self.chart, out, self.cfg)

    def __add__(self, other: "DiffOperator") -> "DiffOperator":
        return self._combine(other, 1)

    def __sub__(self, other: "DiffOperator") -> "DiffOperator":
        return self._combine(other, -1)

    def scale(self, factor) -> "DiffOperator":
        factor = as_expr(factor)
        return DiffOperator(self.chart, {a: simplify(mul(factor, c)) for a, c in self.coeffs.items()}, self.cfg)

    def __matmul__(self, other: "DiffOperator") -> "DiffOperator":
        return compose(self, other)

    def equiv(self, other: "DiffOperator", cfg: EquivConfig | None = None, fiber: str | None = None) -> bool:
        cfg = cfg or self.cfg
        box = self.chart.box(fiber)
        keys = sorted(set(self.coeffs) | set(other.coeffs))
        return all(equiv(self.coeff(a), other.coeff(a), box, cfg=cfg) for a in keys)

    def named_coeffs(self) -> dict[str, Expr]:
        return {" ".join(self.chart.coords[j] for j in key_of(a)): c for a, c in self.coeffs.items()}


def apply(P: DiffOperator, f) -> Expr:
    """``sum_alpha c_alpha d^alpha f``, simplified."""
    f = as_expr(f)
    total: Expr = ZERO
    for alpha, c in P.coeffs.items():
        names = [P.chart.coords[j] for j in key_of(alpha)]
        total = add(total, mul(c, diff_multi(f, names)))
    return simplify(total)


# ---------------------------------------------------------------------------
# operator-valued covariant differentials


def _op_add(a: Mapping[MultiIndex, Expr], b: Mapping[MultiIndex, Expr], coef: Expr) -> dict:
    out = dict(a)
    for alpha, c in b.items():
        out[alpha] = add(out.get(alpha, ZERO), mul(coef, c))
    return out


def _op_algebra(chart: Chart) -> _Algebra:
    def deriv(op: Mapping[MultiIndex, Expr], k: int) -> dict:
        out: dict[MultiIndex, Expr] = {}
        for alpha, c in op.items():
            dc = diff(c, chart.coords[k])
            if dc != ZERO:
                out[alpha] = add(out.get(alpha, ZERO), dc)
            shifted = tuple(a + (j == k) for j, a in enumerate(alpha))
            out[shifted] = add(out.get(shifted, ZERO), c)
        return out

    return _Algebra(zero=dict, deriv=deriv, axpy=lambda acc, c, v: _op_add(acc, v, c), is_zero=lambda op: not op)


def _average_ops(values: list[Mapping[MultiIndex, Expr]]) -> dict:
    out: dict[MultiIndex, Expr] = {}
    w = Const(1 / len(values))
    for v in values:
        out = _op_add(out, v, w)
    return {a: simplify(c) for a, c in out.items()}


def symmetrized_differential_operators(gamma: Connection, r: int) -> dict[tuple[int, ...], dict[MultiIndex, Expr]]:
    """Components of ``nabla^r_sym`` as operators: key -> {alpha: coefficient}.

    Cached on the connection, since every quantization of order r reuses them.
    """
    cache = gamma._cache.setdefault("sym_ops", {})
    if r in cache:
        return cache[r]
    n = gamma.chart.dim
    alg = _op_algebra(gamma.chart)
    full: dict[tuple[int, ...], dict] = {(): {(0,) * n: ONE}}
    for k in range(r):
        step = _covariant_step(full, k, gamma, alg)
        full = {key: {a: simplify(c) for a, c in op.items()} for key, op in step.items()}
    cache[r] = symmetrize(full, n, r, _average_ops)
    return cache[r]


# ---------------------------------------------------------------------------
# quantization


def quantize(phi: SymTensor | InhomTensor, gamma: Connection, cap: int = ORDER_CAP,
             cfg: EquivConfig = DEFAULT_EQUIV) -> DiffOperator:
    """Sum over homogeneous parts of ``(-i hbar)^r <Phi_r, nabla^r_sym f>`` as an operator."""
    phi = as_inhom(phi)
    if phi.variance != CONTRAVARIANT:
        raise OperatorError("only contravariant tensors are quantized")
    if phi.chart != gamma.chart:
        raise OperatorError("tensor and connection live on different charts")
    coeffs: dict[MultiIndex, Expr] = {}
    for r, part in phi.parts.items():
        if not part.components:
            continue
        if r > cap:
            raise OperatorError(f"tensor order {r} exceeds the order cap {cap}")
        ops = symmetrized_differential_operators(gamma, r)
        factor = hbar_factor(r)
        for key, value in part.components.items():
            weight = mul(factor, mul(Const(multiplicity(key)), value))
            coeffs = _op_add(coeffs, ops[key], weight)
    return DiffOperator(gamma.chart, {a: simplify(c) for a, c in coeffs.items()}, cfg)


def symbol(P: DiffOperator, r: int | None = None) -> SymTensor:
    """Order-r symbol with components ``c_alpha * alpha!/r!`` on ``|alpha| = r``.

    For ``r`` above the operator's order the symbol is zero.
    """
    if r is None:
        r = P.order
    if r < P.order:
        raise OperatorError(f"symbol of order {r} requested for an operator of order {P.order}")
    comps = {}
    for alpha, c in P.coeffs.items():
        if sum(alpha) != r:
            continue
        weight = math.prod(math.factorial(a) for a in alpha) / math.factorial(r)
        comps[key_of(alpha)] = simplify(mul(Const(weight), c))
    return SymTensor(P.chart, CONTRAVARIANT, r, comps)


def dequantize(P: DiffOperator, gamma: Connection, cap: int = ORDER_CAP,
               cfg: EquivConfig | None = None) -> InhomTensor:
    """Peel symbols off ``P``: ``Phi_k = (-i hbar)^-k sigma^k(residual)`` from the top order down."""
    cfg = cfg or P.cfg
    r = P.order
    if r > cap:
        raise OperatorError(f"operator order {r} exceeds the order cap {cap}")
    residual = P
    parts: dict[int, SymTensor] = {}
    for k in range(r, -1, -1):
        if residual.order > k:
            raise AssertionError(f"residual kept order {residual.order} after peeling order {k + 1}")
        part = symbol(residual, k).scale(hbar_factor(-k)).map(simplify)
        parts[k] = part
        if part.components:
            residual = residual - quantize(part, gamma, cap, cfg)
    if residual.coeffs:
        raise AssertionError("nonzero residual after dequantization")
    return InhomTensor(parts)


def compose(P: DiffOperator, Q: DiffOperator) -> DiffOperator:
    """``P o Q`` by the Leibniz rule."""
    if P.chart != Q.chart:
        raise OperatorError("operators live on different charts")
    chart = P.chart
    out: dict[MultiIndex, Expr] = {}
    for alpha, p in P.coeffs.items():
        for beta, q in Q.coeffs.items():
            for gamma in itertools.product(*(range(a + 1) for a in alpha)):
                binom = math.prod(math.comb(a, g) for a, g in zip(alpha, gamma))
                dq = diff_multi(q, [chart.coords[j] for j in key_of(gamma)])
                if dq == ZERO:
                    continue
                target = tuple(a - g + b for a, g, b in zip(alpha, gamma, beta))
                out[target] = add(out.get(target, ZERO), mul(Const(binom), mul(p, dq)))
    return DiffOperator(chart, {a: simplify(c) for a, c in out.items()}, P.cfg)


def commutator(P: DiffOperator, Q: DiffOperator, cap: int = ORDER_CAP) -> DiffOperator:
    """``PQ - QP``."""
    if P.order + Q.order > cap + 1:
        raise OperatorError(f"orders {P.order}+{Q.order} exceed the order cap {cap}")
    return compose(P, Q) - compose(Q, P)


# ---------------------------------------------------------------------------
# operators of a metric


def laplace_beltrami(g: Metric, cfg: EquivConfig = DEFAULT_EQUIV) -> DiffOperator:
    """Laplacian from the divergence form ``|g|^-1/2 d_j(|g|^1/2 g^jk d_k)``.

    Expanded as ``g^jk d_j d_k + (d_j g^jk + g^jk d_j(det g) / (2 det g)) d_k``;
    it does not go through Christoffel symbols.
    """
    chart = g.chart
    n = chart.dim
    inv = g.require_inverse()
    x = chart.coords
    coeffs: dict[MultiIndex, Expr] = {}
    for j in range(n):
        for k in range(n):
            alpha = multi_index((j, k), n)
            coeffs[alpha] = add(coeffs.get(alpha, ZERO), inv[j][k])
    for k in range(n):
        c: Expr = ZERO
        for j in range(n):
            c = add(c, diff(inv[j][k], x[j]))
            c = add(c, mul(inv[j][k], div(diff(g.det, x[j]), mul(Const(2), g.det))))
        alpha = multi_index((k,), n)
        coeffs[alpha] = c
    return DiffOperator(chart, {a: simplify(c) for a, c in coeffs.items()}, cfg)


def schrodinger_operator(g: Metric, u, cfg: EquivConfig = DEFAULT_EQUIV) -> DiffOperator:
    """``-hbar^2/2 Laplacian + U``."""
    lap = laplace_beltrami(g, cfg)
    kinetic = lap.scale(mul(Const(-0.5), power(Sym(HBAR), Const(2))))
    return kinetic + DiffOperator.multiplication(g.chart, u, cfg)
