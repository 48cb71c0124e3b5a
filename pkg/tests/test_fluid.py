import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcimmersion.errors import ConstraintError, RegionError, SonicError
from gcimmersion.fluid import (
    DiamondRegion,
    FluidState,
    SecondForm,
    bernoulli,
    coefficient_matrices,
    diamond_contains,
    fluid_to_second_form,
    invariants_to_state,
    riemann_invariants,
    second_form_to_fluid,
    source_terms,
    theta_zero_curves,
    wave_speeds,
)
from gcimmersion.metric import catenoid, christoffel

SQ2 = np.sqrt(2.0)


def random_states(rng, n):
    q = 1.0 + rng.uniform(0.05, 3.0, n)
    th = rng.uniform(-np.pi, np.pi, n)
    return q, th


def test_bernoulli_values():
    assert bernoulli(SQ2) == pytest.approx((1.0, -1.0))
    assert bernoulli(2.0) == pytest.approx((1 / np.sqrt(3.0), -np.sqrt(3.0)))
    with pytest.raises(SonicError):
        bernoulli(1.0)


def test_fluid_state_identity(rng):
    q, th = random_states(rng, 1000)
    s = FluidState(q, th)
    assert np.max(np.abs(s.rho * s.p * q**2 + s.p**2 + 1.0)) < 1e-12
    assert np.max(np.abs(s.bernoulli_residual())) < 1e-12


def test_second_form_examples():
    f = fluid_to_second_form(FluidState(SQ2, 0.0))
    assert (float(f.Lt), float(f.Mt), float(f.Nt)) == pytest.approx((-1.0, 0.0, 1.0), abs=1e-15)
    f = fluid_to_second_form(FluidState(SQ2, np.pi / 2))
    assert (float(f.Lt), float(f.Mt), float(f.Nt)) == pytest.approx((1.0, 0.0, -1.0), abs=1e-15)


def test_second_form_constraints(rng):
    q, th = random_states(rng, 1000)
    kappa = -rng.uniform(0.1, 3.0, 1000)
    gamma = np.sqrt(-kappa)
    f = fluid_to_second_form(FluidState(q, th), gamma, rng.uniform(0.5, 2.0, 1000))
    assert np.max(np.abs(f.scaled_residual())) < 1e-10
    assert np.max(np.abs(f.gauss_residual(kappa))) < 1e-8 * np.max(np.abs(kappa))
    np.testing.assert_allclose(f.h11, f.sqrt_det * f.L)


def test_second_form_round_trip(rng):
    q, th = random_states(rng, 1000)
    back = second_form_to_fluid(fluid_to_second_form(FluidState(q, th)), reference_angle=th)
    assert np.max(np.abs(back.q - q)) < 1e-8
    assert np.max(np.abs(np.angle(np.exp(1j * (back.theta - th))))) < 1e-8


def test_second_form_to_fluid_examples():
    s = second_form_to_fluid(SecondForm(-1.0, 0.0, 1.0), reference_angle=0.0)
    assert float(s.q) == pytest.approx(SQ2) and float(s.theta) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ConstraintError):
        second_form_to_fluid(SecondForm(0.0, 0.0, 0.0))


def test_riemann_examples():
    wp, wm = riemann_invariants(2.0, 0.0)
    assert (wp, wm) == pytest.approx((np.pi / 3, -np.pi / 3))
    assert riemann_invariants(1.0, 0.4) == pytest.approx((0.4, 0.4))
    assert invariants_to_state(np.pi / 3, -np.pi / 3) == pytest.approx((2.0, 0.0))
    assert invariants_to_state(0.4, 0.4) == pytest.approx((1.0, 0.4))
    with pytest.raises(SonicError):
        riemann_invariants(0.9, 0.0)
    with pytest.raises(SonicError):
        invariants_to_state(np.pi / 2, -np.pi / 2)
    with pytest.raises(RegionError):
        invariants_to_state(-0.1, 0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0 + 1e-6, 50.0), st.floats(-3.0, 3.0))
def test_riemann_round_trip_property(q, th):
    q2, th2 = invariants_to_state(*riemann_invariants(q, th))
    assert abs(q2 - q) < 1e-12 * q**2 and abs(th2 - th) < 1e-12


def test_riemann_round_trip_random(rng):
    q, th = random_states(rng, 1000)
    q2, th2 = invariants_to_state(*riemann_invariants(q, th))
    assert np.max(np.abs(q2 - q)) < 1e-12 and np.max(np.abs(th2 - th)) < 1e-12


def test_wave_speed_examples():
    lp, lm, mp, mm = wave_speeds(SQ2, 0.0)
    assert (lp, lm, mp, mm) == pytest.approx((1.0, -1.0, -1.0, -1.0))
    lp, lm, mp, mm = wave_speeds(SQ2, np.pi / 2)
    assert (lp, lm, mp, mm) == pytest.approx((1.0, 1.0, 1.0, -1.0))


def test_coefficient_matrices_commute(rng):
    q, th = random_states(rng, 200)
    for a, b in zip(q, th):
        A, B = coefficient_matrices(a, b)
        assert np.linalg.norm(A @ B - B @ A) < 1e-12 * max(1.0, np.linalg.norm(A) * np.linalg.norm(B))
        lp, lm, mp, mm = wave_speeds(a, b)
        # generalised eigenvalues of the pencil are the characteristic slopes
        ev = np.sort(np.linalg.eigvals(np.linalg.solve(A, B)).real)
        np.testing.assert_allclose(ev, np.sort([mp / lp, mm / lm]), rtol=1e-9, atol=1e-12)


def test_sources_vanish_flat():
    z = (np.zeros(5),) * 6
    s = source_terms(np.full(5, 1.7), np.linspace(0, 1, 5), z)
    for a in (s.R1, s.R2, s.S1, s.S2, s.plus, s.minus):
        assert np.all(a == 0)


def test_sources_vanish_on_exact_state():
    m = catenoid(1.0, SQ2)
    x = np.linspace(-1.5, 1.5, 7)
    t = christoffel(m.evaluate(x, 0.0)).tilde()
    s = source_terms(np.full(7, SQ2), np.zeros(7), t)
    assert np.max(np.abs(s.plus)) < 1e-14 and np.max(np.abs(s.minus)) < 1e-14


def test_source_closed_form_vs_composition(trig_metric, rng):
    worst = 0.0
    for _ in range(100):
        m, _ = trig_metric(rng)
        x, y = rng.uniform(-2, 2, 2)
        v = m.evaluate(x, y, strict=False)
        if not v.kappa < 0:
            continue
        t = christoffel(v).tilde()
        q, th = random_states(rng, 1)
        s = source_terms(q, th, t)
        worst = max(worst, s.max_disagreement())
    assert worst < 1e-10


def test_source_invariants(rng):
    q, th = random_states(rng, 50)
    t = tuple(rng.normal(size=50) for _ in range(6))
    s = source_terms(q, th, t)
    rho, _ = bernoulli(q)
    u, v = q * np.cos(th), q * np.sin(th)
    np.testing.assert_allclose(s.S1, -(v * s.R2 - u * s.R1) / (rho * q * q), rtol=1e-13)
    np.testing.assert_allclose(s.S2, (v * s.R1 + u * s.R2) / (q * q), rtol=1e-13)


@pytest.mark.parametrize("beta", [1.3, 1.6, 2.0])
def test_theta_zero_curves_endpoints(beta):
    tp, tm = theta_zero_curves(np.array([beta, 1.0 + 1e-12]), beta)
    np.testing.assert_allclose(tp, 0.0, atol=1e-5)
    np.testing.assert_array_equal(tm, -tp)


@pytest.mark.parametrize("beta", [1.3, 1.6])
def test_theta_zero_curves_root_find(beta):
    """theta_+ zeroes S1 + (q^2-1) S2 on a catenoid obeying the beta-condition."""
    from scipy.optimize import brentq

    m = catenoid(1.0, beta)
    t = christoffel(m.evaluate(0.6, 0.0)).tilde()
    qs = np.linspace(1.02, beta - 0.02, 7)
    if beta**2 > 2.0:
        qs = qs[np.abs(qs - beta / np.sqrt(beta**2 - 1)) > 0.05]
    tp, tm = theta_zero_curves(qs, beta)
    for q, a, b in zip(qs, tp, tm):
        f = lambda th: float(source_terms(q, th, t).plus)
        root = brentq(f, a - 0.3, a + 0.3, xtol=1e-14) if f(a - 0.3) * f(a + 0.3) < 0 else a
        assert abs(root - a) < 1e-8
        assert abs(float(source_terms(q, b, t).minus)) < 1e-10


def test_theta_zero_curves_asymptote():
    beta = 2.0
    with pytest.raises(RegionError):
        theta_zero_curves(beta / np.sqrt(beta**2 - 1), beta)


def test_theta_zero_curves_sqrt2_degenerate():
    q = np.linspace(1.1, 1.9, 5)
    tp, tm = theta_zero_curves(q, SQ2)
    np.testing.assert_allclose(tp, np.arccos(1 / q))


def test_diamond_contains_examples():
    r = DiamondRegion(1.3, SQ2)
    assert diamond_contains(r, SQ2, 0.0)
    assert diamond_contains(r, 1.3, 0.0)
    assert not diamond_contains(r, 1.0001 * SQ2, 0.0)
    with pytest.raises(RegionError):
        DiamondRegion(1.5, 1.4)


@pytest.mark.parametrize("orientation,direction", [("x", 1), ("y", 1), ("x", -1), ("y", -1)])
def test_diamond_speed_signs(orientation, direction):
    r = DiamondRegion.for_march(1.3, SQ2, orientation, direction)
    q, th = r.lattice_states(64)
    lp, lm, mp, mm = wave_speeds(q, th)
    tp, tm = (lp, lm) if orientation == "x" else (mp, mm)
    assert np.all(direction * tp > 0) and np.all(direction * tm < 0)


def test_diamond_speed_check_rejects_wrong_centre():
    # centred on pi/2 the x time-like speed lambda- changes sign inside the region
    with pytest.raises(RegionError):
        DiamondRegion(1.3, SQ2, center=np.pi / 2, orientation="x", direction=1)
