import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorquant.battery import random_scalar
from tensorquant.charts import flat, sphere
from tensorquant.expr import ZERO, Sym, diff, diff_multi, equiv, evaluate, is_zero, parse, simplify
from tensorquant.geometry import (
    CONTRAVARIANT,
    COVARIANT,
    Chart,
    Connection,
    GeometryError,
    InhomTensor,
    Metric,
    SingularMetricError,
    SymTensor,
    contract,
    covariant_differential,
    index_tuples,
    iterated_differential,
    laplacian,
    metric_transport,
    multiplicity,
    sym_iterated_differential,
)

TH, PH = 0, 1


def _box(metric):
    return metric.chart.box()


# -- charts and tensors ----------------------------------------------------


def test_chart_validation():
    with pytest.raises(GeometryError):
        Chart(("x", "x"))
    with pytest.raises(GeometryError):
        Chart(("x",), domain=((1.0, 1.0),))
    with pytest.raises(GeometryError):
        Chart(("pi",))


def test_fiber_names():
    c = Chart(("th", "ph"))
    assert c.velocities == ("dth", "dph")
    assert c.momenta == ("p_th", "p_ph")
    assert set(c.box("both")) == {"th", "ph", "dth", "dph", "p_th", "p_ph"}


def test_unbounded_domain_gets_finite_sample():
    c = Chart(("x",), domain=((0.0, math.inf),))
    lo, hi = c.sample[0]
    assert math.isfinite(hi) and lo == 0.0


def test_symtensor_rejects_unsorted_keys():
    c = Chart(("x", "y"))
    with pytest.raises(GeometryError):
        SymTensor(c, COVARIANT, 2, {(1, 0): parse("x")})


def test_symtensor_full_array_is_symmetric():
    c = Chart(("x", "y", "z"))
    t = SymTensor.from_names(c, COVARIANT, 3, {"x y z": "x", "z x x": "y"})
    full = t.full()
    for key in index_tuples(3, 3):
        for perm in itertools.permutations(key):
            assert full[perm] == full[key]
    assert t[(2, 0, 0)] == Sym("y")


def test_inhom_rejects_duplicate_orders():
    c = Chart(("x",))
    a = SymTensor.scalar(c, 1)
    with pytest.raises(GeometryError):
        InhomTensor.of(a, a)


def test_multiplicity():
    assert multiplicity((0, 0, 1)) == 3
    assert multiplicity((0, 1, 2)) == 6
    assert multiplicity(()) == 1


# -- metric ----------------------------------------------------------------


def test_singular_metric_rejected():
    c = Chart(("x", "y"))
    with pytest.raises(SingularMetricError):
        Metric(c, [["1", "1"], ["1", "1"]])


def test_indefinite_metric_allowed():
    c = Chart(("t", "x"))
    g = Metric.diagonal(c, [-1, 1])
    assert g.connection.is_flat


def test_inverse_matches_numeric(sphere_metric, conformal_metric):
    for g in (sphere_metric, conformal_metric):
        point = [1.1, 0.4]
        env = dict(zip(g.chart.coords, point))
        symbolic = np.array([[evaluate(c, env) for c in row] for row in g.inverse])
        np.testing.assert_allclose(symbolic, g.inverse_at(point), rtol=1e-12)


def test_offdiagonal_metric_inverse():
    c = Chart(("x", "y"), sample=((-1, 1), (-1, 1)))
    g = Metric.from_upper(c, [["2", "x"], ["3"]])
    box = c.box()
    for j in range(2):
        for k in range(2):
            prod = simplify(sum((g.g[j][m] * g.inverse[m][k] for m in range(2)), ZERO))
            assert equiv(prod, parse("1" if j == k else "0"), box)


# -- Christoffel symbols ---------------------------------------------------


def test_flat_christoffels_vanish(flat2_metric):
    assert flat2_metric.connection.is_flat


def test_sphere_christoffels(sphere_metric):
    gam = sphere_metric.connection.gamma
    box = _box(sphere_metric)
    assert equiv(gam[TH][PH][PH], parse("-sin(th)*cos(th)"), box)
    assert equiv(gam[PH][TH][PH], parse("cos(th)/sin(th)"), box)
    assert equiv(gam[PH][PH][TH], parse("cos(th)/sin(th)"), box)
    others = [(TH, TH, TH), (TH, TH, PH), (PH, TH, TH), (PH, PH, PH)]
    assert all(is_zero(gam[j][k][l], box) for j, k, l in others)


def test_conformal_christoffels(conformal_metric):
    gam = conformal_metric.connection.gamma
    X, Y = 0, 1
    expected = {
        (X, X, X): "1", (X, Y, Y): "-1", (Y, X, Y): "1",
        (X, X, Y): "0", (Y, X, X): "0", (Y, Y, Y): "0",
    }
    box = _box(conformal_metric)
    for (j, k, l), value in expected.items():
        assert equiv(gam[j][k][l], parse(value), box), (j, k, l)


def test_metric_compatibility(shipped_metrics):
    for name, g in shipped_metrics.items():
        nabla_g = covariant_differential(g.tensor(), g.connection)
        box = _box(g)
        assert all(is_zero(v, box) for v in nabla_g.values()), name


def test_explicit_connection_must_be_symmetric():
    c = Chart(("x", "y"))
    gamma = [[["0", "x"], ["0", "0"]], [["0", "0"], ["0", "0"]]]
    with pytest.raises(GeometryError):
        Connection(c, gamma)


# -- covariant differentials -----------------------------------------------


def test_first_differential_is_gradient(sphere_metric):
    f = parse("sin(th)*ph")
    d = covariant_differential(SymTensor.scalar(sphere_metric.chart, f, COVARIANT), sphere_metric.connection)
    box = _box(sphere_metric)
    assert equiv(d[(TH,)], diff(f, "th"), box)
    assert equiv(d[(PH,)], diff(f, "ph"), box)


def test_hessian_of_theta_on_sphere(sphere_metric):
    h = sym_iterated_differential(parse("th"), sphere_metric.connection, 2)
    box = _box(sphere_metric)
    assert equiv(h[(PH, PH)], parse("sin(th)*cos(th)"), box)
    assert is_zero(h[(TH, TH)], box) and is_zero(h[(TH, PH)], box)


def test_flat_hessian():
    g = flat(2)
    h = sym_iterated_differential(parse("x^2*y"), g.connection, 2)
    box = _box(g)
    assert equiv(h[(0, 0)], parse("2*y"), box)
    assert equiv(h[(0, 1)], parse("2*x"), box)
    assert is_zero(h[(1, 1)], box)


def test_second_differential_formula(conformal_metric, sphere_metric):
    for g in (conformal_metric, sphere_metric):
        f = parse("sin(x)*y^2" if "x" in g.chart.coords else "sin(th)*ph^2")
        h = sym_iterated_differential(f, g.connection, 2)
        box = _box(g)
        names = g.chart.coords
        for j, k in [(0, 0), (0, 1), (1, 1)]:
            expected = diff(diff(f, names[k]), names[j])
            for l in range(2):
                expected = expected - g.connection.gamma[l][j][k] * diff(f, names[l])
            assert equiv(h[(j, k)], expected, box)


def test_low_orders():
    g = flat(2)
    assert sym_iterated_differential(parse("x"), g.connection, 1)[(0,)] == parse("1")
    f = parse("x^3 + y")
    assert sym_iterated_differential(f, g.connection, 0)[()] == f


def test_third_differential_flat_line():
    g = flat(1)
    t = sym_iterated_differential(parse("x^4"), g.connection, 3)
    assert equiv(t[(0, 0, 0)], parse("24*x"), _box(g))


def test_second_differential_is_already_symmetric(sphere_metric):
    full = iterated_differential(parse("sin(th)*cos(ph)"), sphere_metric.connection, 2)
    assert equiv(full[(TH, PH)], full[(PH, TH)], _box(sphere_metric))


@pytest.mark.parametrize("r", [1, 2, 3])
def test_flat_differentials_are_partials(r):
    g = flat(3)
    f = parse("x^2*y*z + sin(x*z)")
    t = sym_iterated_differential(f, g.connection, r)
    box = _box(g)
    for key in index_tuples(3, r):
        assert equiv(t[key], diff_multi(f, [g.chart.coords[j] for j in key]), box)


@pytest.mark.parametrize("r", [2, 3])
def test_contraction_with_vector_power_symmetrizes(sphere_metric, r):
    """<nabla^r f, v..v> equals <nabla^r_sym f, v..v>."""
    f = parse("sin(th)^2*cos(ph) + th*ph")
    gamma = sphere_metric.connection
    full = iterated_differential(f, gamma, r)
    sym = sym_iterated_differential(f, gamma, r)
    v = [parse("0.3 + th"), parse("cos(ph)")]
    lhs = ZERO
    rhs = ZERO
    for key in index_tuples(2, r):
        weight = math.prod((v[j] for j in key), start=parse("1"))
        lhs = lhs + full[key] * weight
        rhs = rhs + sym[key] * weight
    assert equiv(lhs, rhs, _box(sphere_metric))


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_symmetrized_differential_is_permutation_invariant(seed):
    g = flat(2) if seed % 2 else sphere()
    f = random_scalar(g.chart, np.random.default_rng(seed))
    t = sym_iterated_differential(f, g.connection, 3)
    full = t.full()
    for key in index_tuples(2, 3):
        assert all(full[p] == full[key] for p in itertools.permutations(key))


# -- contraction and Laplacian ---------------------------------------------


def test_contraction_of_scalars():
    c = Chart(("x",))
    a = SymTensor.scalar(c, parse("x"), CONTRAVARIANT)
    b = SymTensor.scalar(c, parse("2"), COVARIANT)
    assert equiv(contract(a, b), parse("2*x"), c.box())


def test_contraction_of_vector_and_gradient():
    g = flat(2)
    f = parse("x^2*y")
    dx = SymTensor.from_names(g.chart, CONTRAVARIANT, 1, {"x": "1"})
    assert equiv(contract(dx, sym_iterated_differential(f, g.connection, 1)), parse("2*x*y"), _box(g))


def test_contraction_order_mismatch():
    g = flat(2)
    with pytest.raises(GeometryError):
        contract(g.inverse_tensor(), SymTensor.scalar(g.chart, 1, COVARIANT))


def test_laplacian_examples(sphere_metric):
    g2 = flat(2)
    assert equiv(laplacian(parse("x^2 + y^2"), g2), parse("4"), _box(g2))
    assert equiv(laplacian(parse("cos(th)"), sphere_metric), parse("-2*cos(th)"), _box(sphere_metric))
    g1 = flat(1)
    k = 1.7
    wave = parse(f"exp(i*{k}*x)")
    assert equiv(laplacian(wave, g1), parse(f"-{k}^2*exp(i*{k}*x)"), _box(g1))


def test_laplacian_matches_divergence_form(conformal_metric):
    # conformal factor e^{2x} in two dimensions: Lap f = e^{-2x}(f_xx + f_yy)
    f = parse("x^3*y + cos(y)")
    expected = parse("exp(-2*x)") * (diff(diff(f, "x"), "x") + diff(diff(f, "y"), "y"))
    assert equiv(laplacian(f, conformal_metric), expected, _box(conformal_metric))


# -- transport -------------------------------------------------------------


def test_flat_transport_is_identity():
    g = flat(2)
    tr = metric_transport(g)
    assert tr.momentum_of_velocity["p_x"] == Sym("dx")
    assert tr.velocity_of_momentum["dy"] == Sym("p_y")


def test_sphere_momentum(sphere_metric):
    tr = metric_transport(sphere_metric)
    assert equiv(tr.momentum_of_velocity["p_ph"], parse("sin(th)^2*dph"), sphere_metric.chart.box("velocity"))


def test_kinetic_energy_transports(sphere_metric):
    tr = metric_transport(sphere_metric)
    t_momentum = parse("p_th^2/2 + p_ph^2/(2*sin(th)^2)")
    t_velocity = parse("dth^2/2 + sin(th)^2*dph^2/2")
    assert equiv(tr.to_velocity(t_momentum), t_velocity, sphere_metric.chart.box("velocity"))
    assert equiv(tr.to_momentum(t_velocity), t_momentum, sphere_metric.chart.box("momentum"))
