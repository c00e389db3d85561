"""Geodesic integration and the exponential-map pullback.

``f_hat(x0, xi) = f(exp_{x0}(xi))`` is evaluated by integrating the geodesic
equation with fixed-step RK4.  Its derivatives along the fiber at ``xi = 0``
come from tensor-product central differences with Richardson extrapolation.
All geodesics of one stencil are integrated together as a batch.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import HBAR, Expr, as_expr, compile_exprs, free_symbols
from .geometry import (
    COVARIANT,
    Connection,
    Metric,
    SymTensor,
    multi_index,
    sorted_tuples,
    sym_iterated_differential,
)

FD_ORDER_CAP = 4


class DomainExitError(Exception):
    """A geodesic left the chart domain before reaching the requested parameter."""

    def __init__(self, parameter: float, point: np.ndarray):
        super().__init__(f"geodesic left the chart domain at parameter {parameter:.6g}, point {point}")
        self.parameter = parameter
        self.point = point


class MaxStepsError(Exception):
    pass


@dataclass(frozen=True)
class GeodesicState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1e-3
    method: str = "rk4"
    max_steps: int = 1_000_000
    on_exit: str = "raise"

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("integrator step must be positive")
        if self.method != "rk4":
            raise ValueError(f"unsupported integrator {self.method!r}")
        if self.on_exit != "raise":
            raise ValueError("only the 'raise' domain-exit policy is supported")


@dataclass(frozen=True)
class FDConfig:
    h0: float = 1e-2
    levels: int = 2
    max_order: int = 3

    def __post_init__(self):
        if not self.h0 > 0:
            raise ValueError("finite-difference step must be positive")
        if self.levels < 1:
            raise ValueError("need at least one Richardson level")
        if not 0 <= self.max_order <= FD_ORDER_CAP:
            raise ValueError(f"max differential order must be in [0, {FD_ORDER_CAP}]")


DEFAULT_INTEGRATOR = IntegratorConfig()
DEFAULT_FD = FDConfig()


# ---------------------------------------------------------------------------
# geodesics


def flow_batch(x: np.ndarray, v: np.ndarray, gamma: Connection, s: float,
               cfg: IntegratorConfig = DEFAULT_INTEGRATOR) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``x'' = -Gamma(x)[x', x']`` for a batch; arrays have shape ``(n, m)``."""
    x = np.array(x, dtype=float)
    v = np.array(v, dtype=float)
    if s == 0:
        return x, v
    if gamma.is_flat:
        # straight lines; skipping the integrator keeps stencil roundoff at machine level
        lo = np.array([d[0] for d in gamma.chart.domain])[:, None]
        hi = np.array([d[1] for d in gamma.chart.domain])[:, None]
        end = x + s * v
        _check_domain(end, lo, hi, s)
        return end, v
    steps = max(1, math.ceil(abs(s) / cfg.step - 1e-9))
    if steps > cfg.max_steps:
        raise MaxStepsError(f"{steps} steps needed, limit is {cfg.max_steps}")
    h = s / steps
    gamma_at = gamma.numeric()
    lo = np.array([d[0] for d in gamma.chart.domain])[:, None]
    hi = np.array([d[1] for d in gamma.chart.domain])[:, None]

    def accel(xx, vv):
        return -np.einsum("jklm,km,lm->jm", gamma_at(xx), vv, vv)

    _check_domain(x, lo, hi, 0.0)
    for step in range(steps):
        k1x, k1v = v, accel(x, v)
        x2, v2 = x + 0.5 * h * k1x, v + 0.5 * h * k1v
        k2x, k2v = v2, accel(x2, v2)
        x3, v3 = x + 0.5 * h * k2x, v + 0.5 * h * k2v
        k3x, k3v = v3, accel(x3, v3)
        x4, v4 = x + h * k3x, v + h * k3v
        k4x, k4v = v4, accel(x4, v4)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        _check_domain(x, lo, hi, (step + 1) * h)
    return x, v


def _check_domain(x: np.ndarray, lo: np.ndarray, hi: np.ndarray, parameter: float) -> None:
    inside = np.all((x > lo) & (x < hi), axis=0) & np.all(np.isfinite(x), axis=0)
    if not inside.all():
        bad = int(np.flatnonzero(~inside)[0])
        raise DomainExitError(parameter, x[:, bad].copy())


def geodesic_flow(state: GeodesicState, gamma: Connection, s: float,
                  cfg: IntegratorConfig = DEFAULT_INTEGRATOR) -> GeodesicState:
    """State at parameter ``s`` along the geodesic through ``state``."""
    x, v = flow_batch(state.x[:, None], state.v[:, None], gamma, s, cfg)
    return GeodesicState(x[:, 0], v[:, 0])


def _scalar_function(f: Expr, gamma: Connection, hbar: float):
    f = as_expr(f)
    coords = gamma.chart.coords
    extra = sorted(free_symbols(f) - set(coords))
    if set(extra) - {HBAR}:
        raise ValueError(f"function has symbols outside the chart: {sorted(set(extra) - {HBAR})}")
    fn = compile_exprs([f], list(coords) + extra)

    def call(x: np.ndarray) -> np.ndarray:
        return fn(*x, *([hbar] * len(extra)))[0]

    return call


def _simplify_value(values: np.ndarray):
    """Drop a zero imaginary part so real inputs give real outputs."""
    if np.all(values.imag == 0):
        return values.real
    return values


def exp_pullback(f, x0: Sequence[float], xi: Sequence[float], gamma: Connection,
                 cfg: IntegratorConfig = DEFAULT_INTEGRATOR, s: float = 1.0, hbar: float = 1.0):
    """``f(pi(tau_s(x0, xi)))``: the value of ``f`` at the end of the geodesic."""
    x0 = np.asarray(x0, dtype=float)[:, None]
    xi = np.asarray(xi, dtype=float)[:, None]
    end, _ = flow_batch(x0, xi, gamma, s, cfg)
    out = _simplify_value(_scalar_function(f, gamma, hbar)(end))
    return out[0].item()


# ---------------------------------------------------------------------------
# fiber differentials


def central_weights(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and weights of the second-order central stencil for the m-th derivative."""
    if m == 0:
        return np.array([0]), np.array([1.0])
    p = (m + 1) // 2
    offsets = np.arange(-p, p + 1)
    a = np.vander(offsets.astype(float), increasing=True).T
    rhs = np.zeros(len(offsets))
    rhs[m] = math.factorial(m)
    w = np.linalg.solve(a, rhs)
    keep = np.abs(w) > 1e-12
    return offsets[keep], w[keep]


def _stencil(alpha: Sequence[int]) -> list[tuple[tuple[int, ...], float]]:
    per_axis = [central_weights(m) for m in alpha]
    out = []
    for combo in itertools.product(*(range(len(o)) for o, _ in per_axis)):
        offs = tuple(int(per_axis[j][0][c]) for j, c in enumerate(combo))
        weight = math.prod(per_axis[j][1][c] for j, c in enumerate(combo))
        out.append((offs, weight))
    return out


def _richardson(estimates: list[complex]) -> complex:
    """Combine estimates at steps h, h/2, h/4, ... with error series in even powers of h."""
    table = list(estimates)
    for level in range(1, len(table)):
        factor = 4.0**level
        table = [(factor * table[k + 1] - table[k]) / (factor - 1) for k in range(len(table) - 1)]
    return table[0]


def vertical_differential(f, x0: Sequence[float], r: int, gamma: Connection,
                          cfg: IntegratorConfig = DEFAULT_INTEGRATOR, fd: FDConfig = DEFAULT_FD,
                          s: float = 1.0, hbar: float = 1.0) -> np.ndarray:
    """Array of r-th fiber derivatives of ``xi -> f(exp_s(xi))`` at ``xi = 0``.

    Indexed by chart coordinates (``d xi^j`` identified with ``dx^j``); shape ``(n,)*r``.
    """
    if r > fd.max_order:
        raise ValueError(f"order {r} exceeds the finite-difference cap {fd.max_order}")
    n = gamma.chart.dim
    x0 = np.asarray(x0, dtype=float)
    if not gamma.chart.contains(x0):
        raise DomainExitError(0.0, x0)
    fn = _scalar_function(f, gamma, hbar)
    if r == 0:
        return _simplify_value(fn(x0[:, None]))[0]
    steps = [fd.h0 / 2**level for level in range(fd.levels)]
    keys = list(sorted_tuples(n, r))
    stencils = {key: _stencil(multi_index(key, n)) for key in keys}
    offsets = sorted({offs for st in stencils.values() for offs, _ in st})
    points = [(h, offs) for h in steps for offs in offsets]
    xi = np.array([[h * o for o in offs] for h, offs in points]).T
    start = np.repeat(x0[:, None], xi.shape[1], axis=1)
    end, _ = flow_batch(start, xi, gamma, s, cfg)
    values = dict(zip(points, fn(end)))
    out = np.zeros((n,) * r, dtype=complex)
    for key in keys:
        estimates = [sum(w * values[(h, offs)] for offs, w in stencils[key]) / h**r for h in steps]
        est = _richardson(estimates)
        for perm in set(itertools.permutations(key)):
            out[perm] = est
    return _simplify_value(out)


def parameter_derivative(f, x0: Sequence[float], xi: Sequence[float], r: int, gamma: Connection,
                         cfg: IntegratorConfig = DEFAULT_INTEGRATOR, fd: FDConfig = DEFAULT_FD,
                         hbar: float = 1.0):
    """``d^r/ds^r f(x(s))`` at ``s = 0`` along the geodesic with initial velocity ``xi``."""
    offsets, weights = central_weights(r)
    steps = [fd.h0 / 2**level for level in range(fd.levels)]
    fn = _scalar_function(f, gamma, hbar)
    x0 = np.asarray(x0, dtype=float)
    xi = np.asarray(xi, dtype=float)
    estimates = []
    for h in steps:
        vals = []
        for o in offsets:
            x, _ = flow_batch(x0[:, None], xi[:, None], gamma, h * o, cfg)
            vals.append(fn(x)[0])
        estimates.append(sum(w * v for w, v in zip(weights, vals)) / h**r)
    return _simplify_value(np.asarray(_richardson(estimates))).item()


# ---------------------------------------------------------------------------
# verification


def default_tolerance(r: int) -> float:
    return 1e-5 if r <= 2 else 1e-4


@dataclass(frozen=True)
class EquivalenceReport:
    """Fiber differential of the pullback against the symmetrized covariant differential.

    ``rel_err`` is the largest componentwise difference divided by the largest
    symbolic component (absolute when the symbolic tensor vanishes).
    """

    order: int
    point: tuple[float, ...]
    numeric: np.ndarray
    symbolic: np.ndarray
    abs_err: np.ndarray
    max_abs_err: float
    rel_err: float
    tol: float
    passed: bool


def verify_equivalence(f, x0: Sequence[float], r: int, gamma: Connection, tol: float | None = None,
                       cfg: IntegratorConfig = DEFAULT_INTEGRATOR, fd: FDConfig = DEFAULT_FD,
                       hbar: float = 1.0) -> EquivalenceReport:
    f = as_expr(f)
    tol = default_tolerance(r) if tol is None else tol
    numeric = np.asarray(vertical_differential(f, x0, r, gamma, cfg, fd, hbar=hbar))
    env = dict(zip(gamma.chart.coords, map(float, x0)))
    env[HBAR] = hbar
    symbolic = np.asarray(sym_iterated_differential(f, gamma, r).at(env))
    symbolic = _simplify_value(symbolic.astype(complex))
    err = np.abs(numeric - symbolic)
    scale = float(np.max(np.abs(symbolic))) if symbolic.size else 0.0
    max_abs = float(np.max(err)) if err.size else 0.0
    rel = max_abs / scale if scale > 0 else max_abs
    return EquivalenceReport(r, tuple(map(float, x0)), numeric, symbolic, err, max_abs, rel, tol, rel <= tol)


@dataclass(frozen=True)
class ScalingReport:
    order: int
    s: float
    value_s: complex
    value_1: complex
    expected: complex
    error: float
    tol: float
    passed: bool


def exp_quantized_value(a: SymTensor, f, x0: Sequence[float], g: Metric, gamma: Connection | None = None,
                        s: float = 1.0, cfg: IntegratorConfig = DEFAULT_INTEGRATOR, fd: FDConfig = DEFAULT_FD,
                        hbar: float = 1.0) -> complex:
    """``<Phi_a, d_0^r f_hat_s>`` at ``x0``, with ``dx^j -> -i hbar g^jk d/d(dx^k)``."""
    if a.variance != COVARIANT:
        raise ValueError("the classical magnitude must be a covariant tensor")
    gamma = gamma or g.connection
    r = a.order
    x0 = np.asarray(x0, dtype=float)
    env = dict(zip(g.chart.coords, x0))
    env[HBAR] = hbar
    comps = a.at(env)
    inv = g.inverse_at(x0)
    raised = comps
    for axis in range(r):
        raised = np.moveaxis(np.tensordot(inv, raised, axes=([1], [axis])), 0, axis)
    d = np.asarray(vertical_differential(f, x0, r, gamma, cfg, fd, s=s, hbar=hbar))
    return complex((-1j * hbar) ** r * np.sum(raised * d))


def scaled_quantization_check(a: SymTensor, f, x0: Sequence[float], s: float, g: Metric,
                              gamma: Connection | None = None, cfg: IntegratorConfig = DEFAULT_INTEGRATOR,
                              fd: FDConfig = DEFAULT_FD, tol: float = 1e-5, hbar: float = 1.0) -> ScalingReport:
    """Check ``a_s(f)(x0) = s^r a(f)(x0)``, with ``f_s`` built from geodesics run to parameter ``s``."""
    if s == 0:
        raise ValueError("scale parameter must be nonzero")
    r = a.order
    v1 = exp_quantized_value(a, f, x0, g, gamma, 1.0, cfg, fd, hbar)
    vs = exp_quantized_value(a, f, x0, g, gamma, s, cfg, fd, hbar)
    expected = s**r * v1
    err = abs(vs - expected) / (1 + abs(v1))
    return ScalingReport(r, s, vs, v1, expected, err, tol, err <= tol)
