import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from conftest import random_field
from nehari_bv import (
    BracketFailureHigh,
    BracketFailureLow,
    Custom,
    DiscreteDomain,
    FiberingMap,
    Functional,
    Power,
    ProblemSpec,
    ScalarField,
    ZeroDirection,
    bv_norm,
    count_sign_changes,
    g_deriv,
    gamma,
    i_functional,
    nehari_project,
    nehari_residual,
    phi,
)

ONE, MC = Functional.ONE_LAPLACIAN, Functional.MEAN_CURVATURE


def spec(kind=ONE, p=1.5, n=8, lam=1.0):
    return ProblemSpec(kind, Power(p), DiscreteDomain.unit_square(n), lam=lam)


def sum_p(w, p):
    return w.domain.cell_area * float(np.sum(np.abs(w.values) ** p))


# ---- ProblemSpec ------------------------------------------------------
def test_problem_spec_validation():
    with pytest.raises(ValueError):
        spec(lam=0.0)
    with pytest.raises(ValueError):
        spec(ONE, lam=2.0)
    with pytest.raises(ValueError):
        ProblemSpec(MC, Power(1.5), DiscreteDomain.unit_square(4), flavor="anisotropic")
    s = spec(MC, lam=0.5)
    assert s.with_lambda(0.25).lam == 0.25
    assert s.to_dict()["grid"] == {"nx": 8, "ny": 8, "h": 0.125}


def test_energy_at_zero():
    assert phi(spec(ONE), ScalarField.zeros(DiscreteDomain.unit_square(8))) == 0.0
    assert phi(spec(MC), ScalarField.zeros(DiscreteDomain.unit_square(8))) == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("p", [1.1, 1.5, 1.9])
def test_energy_closed_form_in_t(rng, p):
    s = spec(ONE, p)
    w = random_field(rng, 8)
    for t in (0.1, 1.0, 3.0):
        expect = t * bv_norm(w) - t**p / p * sum_p(w, p)
        assert phi(s, t * w) == pytest.approx(expect, rel=1e-12, abs=1e-12)


def test_gamma_example_peaks_at_one():
    d = DiscreteDomain(1, 1, 1.0)
    # one cell with ||w|| = 4c and h^2 |c|^1.5 = 1 needs c = 1, ||w|| = 4; rescale time instead
    w = ScalarField(d, np.array([[1.0]]))
    fib = FiberingMap(spec(ONE).__class__(ONE, Power(1.5), d), w)
    ts = np.linspace(0.5, 40, 400)
    vals = [gamma(fib, t) for t in ts]
    assert ts[int(np.argmax(vals))] == pytest.approx(16.0, abs=0.1)
    assert gamma(fib, 0.0) == 0.0
    with pytest.raises(ValueError):
        gamma(fib, -1.0)


def test_gamma_unit_ray_closed_form():
    # ||w|| = 1 and h^2 sum |w|^1.5 = 1 gives gamma(t) = t - t^1.5 / 1.5
    d = DiscreteDomain(1, 1, 1.0)
    w = ScalarField(d, np.array([[0.25]]))
    s = ProblemSpec(ONE, Power(1.5), d)
    fib = FiberingMap(s, w)
    # ||w|| = 1, sum_p = 0.125; rescale to sum_p = 1 by working on t' = t * 0.25
    for t in (0.5, 1.0, 2.0):
        g = gamma(fib, t)
        assert g == pytest.approx(t * 1.0 - t**1.5 / 1.5 * 0.125, rel=1e-14)


def test_gamma_tends_to_minus_infinity(rng):
    fib = FiberingMap(spec(MC, lam=0.5), random_field(rng, 8))
    vals = [gamma(fib, 2.0**k) for k in range(20, 30)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("p", [1.2, 1.6])
def test_g_closed_form_and_fd(rng, p):
    s = spec(ONE, p)
    w = random_field(rng, 6).__class__(DiscreteDomain.unit_square(8), rng.standard_normal((8, 8)))
    fib = FiberingMap(s, w)
    norm, sp = bv_norm(w), sum_p(w, p)
    prev = np.inf
    for t in (0.01, 0.5, 2.0, 10.0):
        g = g_deriv(fib, t)
        assert g == pytest.approx(norm - t ** (p - 1) * sp, rel=1e-10, abs=1e-12)
        assert g < prev
        prev = g
    assert g_deriv(fib, 1e-8) > 0
    t, e = 1.7, 1e-6
    assert (gamma(fib, t + e) - gamma(fib, t)) / e == pytest.approx(g_deriv(fib, t), rel=1e-4)
    with pytest.raises(ValueError):
        g_deriv(fib, 0.0)


def test_zero_direction_rejected():
    with pytest.raises(ZeroDirection):
        FiberingMap(spec(), ScalarField.zeros(DiscreteDomain.unit_square(8)))
    with pytest.raises(ZeroDirection):
        nehari_residual(spec(), ScalarField.zeros(DiscreteDomain.unit_square(8)))


def test_direction_on_other_grid_rejected(rng):
    with pytest.raises(ValueError):
        FiberingMap(spec(n=8), random_field(rng, 4))


def test_t_w_example_sixteen():
    d = DiscreteDomain(1, 1, 1.0)
    w = ScalarField(d, np.array([[1.0]]))   # ||w|| = 4, h^2 |w|^1.5 = 1
    root = nehari_project(FiberingMap(ProblemSpec(ONE, Power(1.5), d), w), tol_root=0.0)
    assert root.t_w == pytest.approx(oracles.T_W_NORM4_P15, rel=1e-14)
    assert root.bracket[0] <= root.t_w <= root.bracket[1]


@pytest.mark.parametrize("p", [1.1, 1.5, 1.9])
def test_t_w_closed_form(rng, p):
    s = spec(ONE, p)
    for _ in range(10):
        w = ScalarField(s.domain, rng.standard_normal(s.domain.shape))
        root = nehari_project(FiberingMap(s, w), tol_root=1e-12)
        assert root.t_w == pytest.approx(oracles.t_w_power(bv_norm(w), sum_p(w, p), p), rel=1e-9)


def test_projection_scale_invariance(rng):
    s = spec(MC, lam=0.5)
    w = random_field(rng, 8)
    base = nehari_project(FiberingMap(s, w), tol_root=0.0).t_w
    for c in (0.5, 3.0):
        t = nehari_project(FiberingMap(s, c * w), tol_root=0.0).t_w
        assert t * c == pytest.approx(base, rel=1e-12)


def test_residual_examples(rng):
    s = spec(ONE, 1.5)
    w = random_field(rng, 8)
    root = nehari_project(FiberingMap(s, w), tol_root=0.0)
    assert nehari_residual(s, root.t_w * w) <= 1e-10
    # far below the ray maximum at unit BV norm: relative residual near 1
    s11 = spec(ONE, 1.1)
    unit = (1.0 / bv_norm(w)) * w
    assert oracles.t_w_power(1.0, sum_p(unit, 1.1), 1.1) > 1e3
    res = nehari_residual(s11, unit)
    assert res == pytest.approx(1.0 - sum_p(unit, 1.1), rel=1e-12)
    assert res > 0.9
    # below unit norm the denominator is clamped, so the residual is the norm itself
    tiny = 1e-9 * unit
    assert nehari_residual(s11, tiny) == pytest.approx(1e-9, rel=1e-2)
    t = oracles.t_w_power(bv_norm(w), sum_p(w, 1.5), 1.5)
    assert nehari_residual(s, t * w) <= 1e-10


def test_bracket_failure_high_for_sublinear_f(rng):
    s = ProblemSpec(ONE, Custom(lambda x: 1e-6 * np.tanh(x), p=1.5, strict=False), DiscreteDomain.unit_square(4))
    with pytest.raises(BracketFailureHigh):
        nehari_project(FiberingMap(s, random_field(rng, 4)))


def test_bracket_failure_low_for_huge_lambda():
    d = DiscreteDomain.unit_square(8)
    bump = np.zeros(d.shape)
    bump[3:5, 3:5] = 1.0   # zero trace, so the area part gives g(0+) = 0
    s = ProblemSpec(MC, Power(1.5), d, lam=1e8)
    with pytest.raises(BracketFailureLow):
        nehari_project(FiberingMap(s, ScalarField(d, bump)))


# ---- properties -------------------------------------------------------
directions = arrays(float, (6, 6), elements=st.floats(-10, 10)).filter(lambda a: np.abs(a).max() > 1e-3)


@given(directions, st.sampled_from([1.1, 1.5, 1.9]), st.sampled_from([ONE, MC]))
def test_uniqueness_and_maximality(a, p, kind):
    d = DiscreteDomain.unit_square(6)
    s = ProblemSpec(kind, Power(p), d, lam=0.5 if kind is MC else 1.0)
    fib = FiberingMap(s, ScalarField(d, a))
    root = nehari_project(fib, tol_root=1e-12)
    # sweep t = 2^k, |k| <= 20, around the root: rescale so that t_w = 1
    centred = FiberingMap(s, root.t_w * fib.w)
    assert count_sign_changes(centred) == 1
    top = gamma(fib, root.t_w)
    assert top > s.phi0()
    grid = root.t_w * np.logspace(-4, 4, 1000)
    assert max(gamma(fib, t) for t in grid) <= top + 1e-10 * max(1.0, abs(top))


@given(directions, st.sampled_from([ONE, MC]))
def test_projection_is_idempotent(a, kind):
    d = DiscreteDomain.unit_square(6)
    s = ProblemSpec(kind, Power(1.5), d, lam=0.5 if kind is MC else 1.0)
    w = ScalarField(d, a)
    t = nehari_project(FiberingMap(s, w), tol_root=1e-12).t_w
    again = nehari_project(FiberingMap(s, t * w), tol_root=1e-12).t_w
    assert again == pytest.approx(1.0, rel=1e-9)


@given(directions, st.floats(0.01, 100))
def test_energy_lower_bound_by_norm_minus_I(a, t):
    d = DiscreteDomain.unit_square(6)
    u = ScalarField(d, t * a)
    nl = Power(1.5)
    one = phi(ProblemSpec(ONE, nl, d), u)
    assert one == pytest.approx(bv_norm(u) - i_functional(u, nl), rel=1e-12, abs=1e-12)
    lam = 0.5
    mc = phi(ProblemSpec(MC, nl, d, lam=lam), u)
    assert mc >= bv_norm(u) - lam * i_functional(u, nl) - 1e-9 * max(1.0, abs(mc))
