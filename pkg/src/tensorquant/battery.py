"""Seeded random test objects: scalars, tensors, potentials and phase functions."""

from __future__ import annotations

import numpy as np

from .expr import ZERO, Const, Expr, Sym, add, func, mul, power, simplify
from .geometry import CONTRAVARIANT, Chart, InhomTensor, SymTensor, sorted_tuples

COEFF_RANGE = 3


def _coeff(rng: np.random.Generator) -> Const:
    value = 0
    while value == 0:
        value = int(rng.integers(-COEFF_RANGE, COEFF_RANGE + 1))
    return Const(value)


def random_monomial(chart: Chart, rng: np.random.Generator, max_degree: int = 2) -> Expr:
    term: Expr = _coeff(rng)
    for name in chart.coords:
        k = int(rng.integers(0, max_degree + 1))
        if k:
            term = mul(term, power(Sym(name), Const(k)))
    return term


def random_polynomial(chart: Chart, rng: np.random.Generator, terms: int = 2, max_degree: int = 2) -> Expr:
    total: Expr = ZERO
    for _ in range(terms):
        total = add(total, random_monomial(chart, rng, max_degree))
    return simplify(total)


def random_trig(chart: Chart, rng: np.random.Generator) -> Expr:
    """``c * sin|cos(k x_j)`` for a random coordinate."""
    name = chart.coords[int(rng.integers(chart.dim))]
    k = Const(int(rng.integers(1, 3)))
    fn = "sin" if rng.random() < 0.5 else "cos"
    return mul(_coeff(rng), func(fn, mul(k, Sym(name))))


def random_scalar(chart: Chart, rng: np.random.Generator) -> Expr:
    """Polynomial, trigonometric or mixed, chosen at random."""
    kind = int(rng.integers(3))
    if kind == 0:
        return random_polynomial(chart, rng)
    if kind == 1:
        return random_trig(chart, rng)
    return simplify(add(random_monomial(chart, rng, 1), random_trig(chart, rng)))


def random_sym_tensor(chart: Chart, order: int, rng: np.random.Generator, variance: str = CONTRAVARIANT,
                      density: float = 0.7) -> SymTensor:
    """Random components on a random subset of sorted index tuples; never entirely zero."""
    keys = list(sorted_tuples(chart.dim, order))
    comps = {key: random_scalar(chart, rng) for key in keys if rng.random() < density}
    if not comps:
        key = keys[int(rng.integers(len(keys)))]
        comps[key] = random_scalar(chart, rng)
    return SymTensor(chart, variance, order, comps)


def random_inhom(chart: Chart, rng: np.random.Generator, max_order: int = 3) -> InhomTensor:
    """Parts of orders ``0..max_order``, each present with probability 0.75 and the top one always."""
    parts = {r: random_sym_tensor(chart, r, rng) for r in range(max_order) if rng.random() < 0.75}
    parts[max_order] = random_sym_tensor(chart, max_order, rng)
    return InhomTensor(parts)


def random_potential(chart: Chart, rng: np.random.Generator) -> Expr:
    return random_scalar(chart, rng)


def random_phase(chart: Chart, rng: np.random.Generator) -> Expr:
    """A phase function; mixes linear terms with polynomial or trigonometric ones."""
    linear: Expr = ZERO
    for name in chart.coords:
        linear = add(linear, mul(_coeff(rng), Sym(name)))
    if rng.random() < 0.3:
        return simplify(linear)
    return simplify(add(linear, random_scalar(chart, rng)))
