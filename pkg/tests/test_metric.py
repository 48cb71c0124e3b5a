import numpy as np
import pytest

from gcimmersion.errors import CurvatureSignError, MetricDomainError, MetricError
from gcimmersion.metric import (
    CATALOG,
    brioschi,
    catenoid,
    check_beta_condition,
    christoffel,
    custom_metric,
    eval_metric,
    gauss_curvature_brioschi,
    isothermal_helicoid,
    isothermal_torus,
    make_metric,
    metric_from_csv,
    periodicize_metric,
    torus_phi,
    torus_phi_inverse,
)

from oracles import gauss_oracle, tensor_christoffel


def test_eval_metric_helicoid_origin():
    v = eval_metric(isothermal_helicoid(1.0), 0.0, 0.0)
    assert v.E == pytest.approx(1.0) and v.G == pytest.approx(1.0) and v.F == 0.0
    assert v.kappa == pytest.approx(-1.0)
    assert v.gamma == pytest.approx(1.0)


def test_eval_metric_catenoid_origin():
    assert eval_metric(catenoid(1.0, np.sqrt(2.0)), 0.0).E == pytest.approx(1.0)


def test_flat_custom_metric_rejected():
    flat = custom_metric(lambda x, y: np.ones(np.broadcast(x, y).shape))
    with pytest.raises(CurvatureSignError):
        eval_metric(flat, 0.3, 0.2)
    assert gauss_curvature_brioschi(flat, 0.3, 0.2) == pytest.approx(0.0, abs=1e-6)


def test_domain_violation():
    t = isothermal_torus(2.0, 1.0)
    with pytest.raises(MetricDomainError):
        t.evaluate(1e3, 0.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # kappa = 0: tilde terms undefined
def test_christoffel_constant_metric_zero():
    flat = custom_metric(lambda x, y: 3.0 * np.ones(np.broadcast(x, y).shape), check_consistency=False)
    v = flat.evaluate(np.array([0.1, 0.7]), 0.0, strict=False)
    cs = christoffel(v)
    for name in ("g111", "g112", "g122", "g211", "g212", "g222"):
        assert np.max(np.abs(getattr(cs, name))) < 1e-9


def test_christoffel_conformal_closed_forms():
    m = isothermal_helicoid(1.3)
    x = np.linspace(-2, 2, 11)
    v = m.evaluate(x, 0.0)
    cs = christoffel(v)
    a = v.Ex / (2 * v.E)
    np.testing.assert_allclose(cs.g111, a, atol=1e-14)
    np.testing.assert_allclose(cs.g122, -a, atol=1e-14)
    np.testing.assert_allclose(cs.g212, a, atol=1e-14)
    for z in (cs.g112, cs.g211, cs.g222):
        np.testing.assert_allclose(z, 0.0, atol=1e-14)
    gx_over_g = v.gamma_x / v.gamma
    np.testing.assert_allclose(cs.t111 - cs.g111, gx_over_g, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(cs.t212 - cs.g212, 0.5 * gx_over_g, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(cs.t122, cs.g122)
    np.testing.assert_allclose(cs.t211, cs.g211)


def test_christoffel_matches_tensor_oracle(trig_metric, rng):
    worst = 0.0
    for _ in range(100):
        m, efg = trig_metric(rng)
        x, y = rng.uniform(-2, 2, 2)
        cs = christoffel(m.evaluate(x, y, strict=False))
        ref = tensor_christoffel(efg, x, y)
        for k in (1, 2):
            for i, j in ((1, 1), (1, 2), (2, 2)):
                got = float(cs.symbol(k, i, j))
                want = ref[k - 1, i - 1, j - 1]
                worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    assert worst < 1e-6


def test_christoffel_symmetric_storage():
    cs = christoffel(isothermal_helicoid(1.0).evaluate(0.4, 0.0))
    assert cs.symbol(1, 2, 1) is cs.symbol(1, 1, 2)


def test_tilde_corrections_vanish_for_constant_gamma(trig_metric, rng):
    m, _ = trig_metric(rng)
    v = m.evaluate(np.array([0.2]), np.array([0.5]), strict=False)
    from dataclasses import replace

    v = replace(v, kappa=-np.ones(1), kappa_x=np.zeros(1), kappa_y=np.zeros(1))
    cs = christoffel(v)
    for k in (1, 2):
        for i, j in ((1, 1), (1, 2), (2, 2)):
            assert cs.symbol(k, i, j, tilde=True) == cs.symbol(k, i, j)


def test_brioschi_matches_gauss_formula_oracle(trig_metric, rng):
    worst = 0.0
    for _ in range(100):
        m, _ = trig_metric(rng)
        x, y = rng.uniform(-2, 2, 2)
        k = float(gauss_curvature_brioschi(m, x, y))
        ref = float(gauss_oracle(m, x, y))
        worst = max(worst, abs(k - ref) / max(abs(ref), 1e-2))
    assert worst < 1e-6


def test_brioschi_helicoid_origin():
    assert gauss_curvature_brioschi(isothermal_helicoid(1.0), 0.0) == pytest.approx(-1.0, rel=1e-12)


@pytest.mark.parametrize("c,beta", [(1.0, np.sqrt(2.0)), (0.7, 1.5), (1.3, 1.2)])
def test_catenoid_closed_form_curvature(c, beta):
    m = catenoid(c, beta)
    x = np.linspace(-1.5, 1.5, 31)
    v = m.evaluate(x, 0.0)
    np.testing.assert_allclose(brioschi(v), -m.params["kappa0"] * v.E ** (-beta**2), rtol=1e-6)


def test_catenoid_inconsistent_kappa0_rejected():
    with pytest.raises(MetricError):
        catenoid(1.0, np.sqrt(2.0), kappa0=2.5)


@pytest.mark.parametrize("name", ["helicoid", "catenoid", "catenoid-y", "torus"])
def test_catalog_brioschi_consistency(name):
    if name == "helicoid":
        m, x = isothermal_helicoid(0.8), np.linspace(-2, 2, 21)
    elif name == "catenoid":
        m, x = catenoid(1.2, 1.6), np.linspace(-2, 2, 21)
    elif name == "catenoid-y":
        m, x = catenoid(0.9, 1.7, variant="y"), np.linspace(-2, 2, 21)
    else:
        m = isothermal_torus(2.0, 1.0)
        lo, hi = m.extras["negative_band"]()
        x = np.linspace(lo + 0.05, hi - 0.05, 21)
    v = m.evaluate(x, 0.0, strict=False)
    np.testing.assert_allclose(brioschi(v), v.kappa, rtol=1e-6)


def test_helicoid_beta_condition():
    for lam in (0.5, 1.0, 2.0):
        rep = check_beta_condition(isothermal_helicoid(lam), np.sqrt(2.0))
        assert rep.satisfied and rep.max_residual < 1e-10


def test_helicoid_log_derivative_identity_and_decay():
    m = isothermal_helicoid(1.0)
    x = np.linspace(-3, 3, 61)
    v = m.evaluate(x, 0.0)
    np.testing.assert_allclose(-2 * v.Ex / v.E, v.kappa_x / v.kappa, atol=1e-10)
    far = m.evaluate(np.array([5.0, 10.0, -5.0, -10.0]), 0.0)
    assert far.E[1] > far.E[0] > 1 and far.E[3] > far.E[2] > 1
    assert 0 > far.kappa[1] > far.kappa[0]


@pytest.mark.parametrize("c,beta", [(1.0, np.sqrt(2.0)), (0.5, 1.3)])
def test_catenoid_beta_condition(c, beta):
    assert check_beta_condition(catenoid(c, beta), beta).satisfied
    assert check_beta_condition(catenoid(c, beta, variant="y"), beta).satisfied


def test_torus_values_and_ratio():
    a, b = 2.0, 1.0
    m = isothermal_torus(a, b)
    assert m.kappa(0.0) == pytest.approx(1.0 / (b * (a + b)))
    with pytest.raises(CurvatureSignError):
        m.evaluate(0.0, 0.0)
    xpi = torus_phi(np.pi, a, b)
    assert torus_phi_inverse(xpi, a, b) == pytest.approx(np.pi, abs=1e-10)
    assert m.kappa(xpi - 1e-9) == pytest.approx(-1.0 / (b * (a - b)), rel=1e-6)
    rep = check_beta_condition(m, np.sqrt(2.0))
    assert not rep.satisfied
    assert rep.ratio_variation() > 0.1


def test_torus_requires_a_gt_b():
    with pytest.raises(MetricError):
        isothermal_torus(1.0, 2.0)


def test_periodicize_properties():
    P = 2 * np.pi
    base = isothermal_helicoid(1.0)
    m = periodicize_metric(base, P, np.sqrt(2.0))
    assert m.raw_coefficients(0.0)["E"] == base.raw_coefficients(0.0)["E"]
    x = np.linspace(-5, 5, 37)
    np.testing.assert_allclose(m.raw_coefficients(x + P)["E"], m.raw_coefficients(x)["E"], atol=1e-8)
    xs = np.linspace(-P / 2, P / 2, 4097)
    a = m.extras["log_derivative"](xs)
    assert abs(np.trapezoid(a, xs)) < 1e-10 * P


def test_periodicize_constant_metric():
    one = lambda x, y: np.ones(np.broadcast(x, y).shape)
    flat = custom_metric(one, kappa=lambda x, y: (-np.ones(np.broadcast(x, y).shape),) + (
        np.zeros(np.broadcast(x, y).shape),) * 2, check_consistency=False)
    object.__setattr__(flat, "conformal", True)
    m = periodicize_metric(flat, 2 * np.pi, np.sqrt(2.0))
    np.testing.assert_allclose(m.raw_coefficients(np.linspace(-3, 3, 11))["E"], 1.0, atol=1e-12)


def test_csv_metric(tmp_path):
    x = np.linspace(-2, 2, 401)
    E = np.cosh(x) ** 2
    p = tmp_path / "m.csv"
    np.savetxt(p, np.column_stack([x, E]), delimiter=",", header="x,E", comments="")
    m = metric_from_csv(p)
    xs = np.linspace(-1, 1, 9)
    ref = catenoid(1.0, np.sqrt(2.0))
    np.testing.assert_allclose(m.kappa(xs), ref.kappa(xs), rtol=1e-3)


def test_catalog_listing():
    assert {"catenoid", "helicoid-isothermal", "torus-isothermal", "custom"} <= set(CATALOG)
    assert {"c", "beta", "kappa0"} <= set(CATALOG["catenoid"]["params"])
    assert CATALOG["torus-isothermal"]["note"] == "fails ode-1; verification-only"
    assert make_metric("helicoid-isothermal", **{"lambda": 1.0}).kappa(0.0) == pytest.approx(-1.0)
