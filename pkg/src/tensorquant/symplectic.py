"""Polynomial Hamiltonians on T*M, Poisson brackets and mechanical checks.

Conventions: the symplectic form is ``dp_j ^ dx^j``.  The Hamiltonian field of
``F`` satisfies ``D_F -| w = dF``, giving ``D_F = -F_p d/dx + F_x d/dp`` and
``{F, G} = D_F G``.  The evolution field of a Hamiltonian ``H`` satisfies
``D -| w + dH = 0`` (Hamilton's equations) and is the negative of ``D_H``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .expr import (
    DEFAULT_EQUIV,
    HBAR,
    I,
    ZERO,
    Add,
    Const,
    Div,
    EquivConfig,
    Expr,
    ExprError,
    Mul,
    Neg,
    Pow,
    Sub,
    Sym,
    add,
    as_expr,
    diff,
    div,
    equiv,
    free_symbols,
    func,
    is_zero,
    mul,
    neg,
    power,
    simplify,
    sub,
    _integer,
)
from .geometry import (
    CONTRAVARIANT,
    Chart,
    Connection,
    InhomTensor,
    Metric,
    SymTensor,
    as_inhom,
    laplacian,
    metric_transport,
    multiplicity,
)

MOMENTUM = "momentum"
VELOCITY = "velocity"


def p_degree(e: Expr, momenta: Sequence[str]) -> int:
    """Polynomial degree in the momenta; raises if ``e`` is not polynomial in them."""
    names = set(momenta)

    def deg(node: Expr) -> int:
        if not (free_symbols(node) & names):
            return 0
        if isinstance(node, Sym):
            return 1
        if isinstance(node, Neg):
            return deg(node.arg)
        if isinstance(node, (Add, Sub)):
            return max(deg(node.left), deg(node.right))
        if isinstance(node, Mul):
            return deg(node.left) + deg(node.right)
        if isinstance(node, Div) and not (free_symbols(node.right) & names):
            return deg(node.left)
        if isinstance(node, Pow) and isinstance(node.right, Const):
            k = _integer(node.right.value)
            if k is not None and k >= 0:
                return k * deg(node.left)
        raise ExprError(f"not polynomial in the momenta: {node}")

    return deg(e)


@dataclass(frozen=True)
class PolyHamiltonian:
    """A function ``F(x, p)`` on T*M, polynomial in the momenta ``p_<coord>``."""

    chart: Chart
    expr: Expr

    def __post_init__(self):
        object.__setattr__(self, "expr", as_expr(self.expr))
        p_degree(self.expr, self.chart.momenta)

    @property
    def degree(self) -> int:
        return p_degree(self.expr, self.chart.momenta)

    def __add__(self, other: "PolyHamiltonian") -> "PolyHamiltonian":
        return PolyHamiltonian(self.chart, simplify(add(self.expr, other.expr)))

    def __sub__(self, other: "PolyHamiltonian") -> "PolyHamiltonian":
        return PolyHamiltonian(self.chart, simplify(sub(self.expr, other.expr)))

    def __mul__(self, other: "PolyHamiltonian") -> "PolyHamiltonian":
        return PolyHamiltonian(self.chart, simplify(mul(self.expr, other.expr)))

    def __neg__(self) -> "PolyHamiltonian":
        return PolyHamiltonian(self.chart, neg(self.expr))

    def equiv(self, other: "PolyHamiltonian", cfg: EquivConfig = DEFAULT_EQUIV) -> bool:
        return equiv(self.expr, other.expr, self.chart.box(MOMENTUM), cfg=cfg)


@dataclass(frozen=True)
class PhaseField:
    """Tangent field on T*M (``fiber="momentum"``) or on TM (``fiber="velocity"``).

    ``base[j]`` multiplies ``d/dx^j``; ``fiber_part[j]`` multiplies ``d/dp_j`` or ``d/d(dx^j)``.
    """

    chart: Chart
    base: tuple[Expr, ...]
    fiber_part: tuple[Expr, ...]
    fiber: str = MOMENTUM

    def __post_init__(self):
        n = self.chart.dim
        if len(self.base) != n or len(self.fiber_part) != n:
            raise ValueError(f"a phase field on a {n}-dimensional chart has {2 * n} components")

    @property
    def fiber_names(self) -> tuple[str, ...]:
        return self.chart.momenta if self.fiber == MOMENTUM else self.chart.velocities

    def __call__(self, e) -> Expr:
        """Apply as a derivation."""
        e = as_expr(e)
        total: Expr = ZERO
        for c, name in zip(self.base, self.chart.coords):
            total = add(total, mul(c, diff(e, name)))
        for c, name in zip(self.fiber_part, self.fiber_names):
            total = add(total, mul(c, diff(e, name)))
        return simplify(total)

    def __neg__(self) -> "PhaseField":
        return PhaseField(self.chart, tuple(neg(c) for c in self.base),
                          tuple(neg(c) for c in self.fiber_part), self.fiber)

    def components(self) -> tuple[Expr, ...]:
        return self.base + self.fiber_part

    def equiv(self, other: "PhaseField", cfg: EquivConfig = DEFAULT_EQUIV) -> bool:
        if self.fiber != other.fiber:
            return False
        box = self.chart.box(self.fiber)
        return all(equiv(a, b, box, cfg=cfg) for a, b in zip(self.components(), other.components()))

    def transported(self, g: Metric) -> "PhaseField":
        """Push a T*M field to TM through ``dx^j = g^jk p_k``."""
        if self.fiber != MOMENTUM:
            raise ValueError("field already lives on TM")
        tr = metric_transport(g)
        base = tuple(tr.to_velocity(c) for c in self.base)
        fib = tuple(tr.to_velocity(self(tr.velocity_of_momentum[v])) for v in self.chart.velocities)
        return PhaseField(self.chart, base, fib, VELOCITY)


def tensor_to_hamiltonian(phi: SymTensor | InhomTensor) -> PolyHamiltonian:
    """Replace each ``d/dx^j`` by ``p_j``: ``sum_r sum_J Phi^J p_J``."""
    phi = as_inhom(phi)
    if phi.variance != CONTRAVARIANT:
        raise ValueError("only contravariant tensors define Hamiltonians")
    chart = phi.chart
    p = [Sym(s) for s in chart.momenta]
    total: Expr = ZERO
    for part in phi.parts.values():
        for key, value in part.components.items():
            mono = Const(multiplicity(key))
            for j in key:
                mono = mul(mono, p[j])
            total = add(total, mul(value, mono))
    return PolyHamiltonian(chart, simplify(total))


def hamiltonian_field(F: PolyHamiltonian) -> PhaseField:
    """``D_F`` with ``D_F -| w = dF``: ``-F_p d/dx + F_x d/dp``."""
    chart = F.chart
    base = tuple(simplify(neg(diff(F.expr, p))) for p in chart.momenta)
    fib = tuple(simplify(diff(F.expr, x)) for x in chart.coords)
    return PhaseField(chart, base, fib, MOMENTUM)


def evolution_field(F: PolyHamiltonian) -> PhaseField:
    """Field of Hamilton's equations, ``D -| w + dF = 0``."""
    return -hamiltonian_field(F)


def poisson(F: PolyHamiltonian, G: PolyHamiltonian) -> PolyHamiltonian:
    """``{F, G} = D_F G = -F_p G_x + F_x G_p``."""
    return PolyHamiltonian(F.chart, hamiltonian_field(F)(G.expr))


def kinetic_energy(g: Metric) -> PolyHamiltonian:
    """``T = 1/2 g^jk p_j p_k``."""
    return PolyHamiltonian(g.chart, simplify(mul(Const(0.5), tensor_to_hamiltonian(g.inverse_tensor()).expr)))


def geodesic_field(gamma: Connection) -> PhaseField:
    """``dx^j d/dx^j - Gamma^j_kl dx^k dx^l d/d(dx^j)`` on TM."""
    chart = gamma.chart
    n = chart.dim
    v = [Sym(s) for s in chart.velocities]
    fib = []
    for j in range(n):
        total: Expr = ZERO
        for k in range(n):
            for l in range(n):
                total = sub(total, mul(gamma.gamma[j][k][l], mul(v[k], v[l])))
        fib.append(simplify(total))
    return PhaseField(chart, tuple(v), tuple(fib), VELOCITY)


@dataclass(frozen=True)
class SecondOrderReport:
    """Outcome of the second-order-equation test.

    ``defects[j]`` is ``D(x^j) - dx^j`` on TM.  When the test passes,
    ``potential`` is ``F - T``, whose differential is the work form.
    """

    holds: bool
    defects: tuple[Expr, ...]
    failing: tuple[int, ...]
    potential: Expr | None

    def __bool__(self) -> bool:
        return self.holds


def is_second_order(F: PolyHamiltonian, g: Metric, cfg: EquivConfig = DEFAULT_EQUIV) -> SecondOrderReport:
    """Whether the evolution field of ``F``, moved to TM, satisfies ``D x^j = dx^j``."""
    chart = g.chart
    tr = metric_transport(g)
    D = evolution_field(F)
    box = chart.box(VELOCITY)
    defects = []
    failing = []
    for j, (x, v) in enumerate(zip(chart.coords, chart.velocities)):
        defect = simplify(sub(tr.to_velocity(D(Sym(x))), Sym(v)))
        defects.append(defect)
        if not is_zero(defect, box, cfg):
            failing.append(j)
    potential = None
    if not failing:
        potential = simplify(sub(F.expr, kinetic_energy(g).expr))
    return SecondOrderReport(not failing, tuple(defects), tuple(failing), potential)


# ---------------------------------------------------------------------------
# Hamilton-Jacobi and wave identities


def gradient_norm_sq(s: Expr, g: Metric) -> Expr:
    """``g^jk d_j S d_k S``."""
    inv = g.require_inverse()
    x = g.chart.coords
    ds = [diff(s, c) for c in x]
    total: Expr = ZERO
    n = g.chart.dim
    for j in range(n):
        for k in range(n):
            total = add(total, mul(inv[j][k], mul(ds[j], ds[k])))
    return simplify(total)


def hamilton_jacobi_residual(s, u, energy, g: Metric) -> Expr:
    """``H(grad S) - E = 1/2 |dS|^2 + U - E``."""
    s, u, energy = as_expr(s), as_expr(u), as_expr(energy)
    return simplify(sub(add(mul(Const(0.5), gradient_norm_sq(s, g)), u), energy))


def phase_wave(s) -> Expr:
    """``exp(i S / hbar)``."""
    return func("exp", mul(I, div(as_expr(s), Sym(HBAR))))


def broglie_identity_check(s, u, g: Metric) -> tuple[Expr, Expr]:
    """Both sides of ``(-hbar^2/2 Lap + U) phi = (hbar/(2i) Lap S + H(grad S)) phi``."""
    s, u = as_expr(s), as_expr(u)
    phi = phase_wave(s)
    hbar = Sym(HBAR)
    lhs = add(mul(mul(Const(-0.5), power(hbar, Const(2))), laplacian(phi, g)), mul(u, phi))
    h_grad = add(mul(Const(0.5), gradient_norm_sq(s, g)), u)
    rhs = mul(add(mul(div(hbar, Const(2j)), laplacian(s, g)), h_grad), phi)
    return simplify(lhs), simplify(rhs)


class SchrodingerConditions(NamedTuple):
    hamilton_jacobi: bool
    harmonic: bool
    schrodinger: bool


def schrodinger_abc(s, u, energy, g: Metric, cfg: EquivConfig = DEFAULT_EQUIV) -> SchrodingerConditions:
    """(A) Hamilton-Jacobi holds, (B) S is harmonic, (C) exp(iS/hbar) solves Schrodinger at E."""
    s, u, energy = as_expr(s), as_expr(u), as_expr(energy)
    box = g.chart.box()
    a = is_zero(hamilton_jacobi_residual(s, u, energy, g), box, cfg)
    b = is_zero(laplacian(s, g), box, cfg)
    phi = phase_wave(s)
    hbar = Sym(HBAR)
    wave = add(mul(mul(Const(-0.5), power(hbar, Const(2))), laplacian(phi, g)), mul(u, phi))
    c = is_zero(simplify(sub(wave, mul(energy, phi))), box, cfg)
    return SchrodingerConditions(a, b, c)
