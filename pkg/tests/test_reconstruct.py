from pathlib import Path

import numpy as np
import pytest

from gcimmersion.errors import ReconstructionError
from gcimmersion.fluid import FluidState, fluid_to_second_form
from gcimmersion.metric import Metric, catenoid
from gcimmersion.reconstruct import (
    SurfacePatch,
    angle_defect_curvature,
    base_frame,
    check_base_frame,
    export_mesh,
    first_form_error,
    integrate_frame,
    integrate_position,
    obj_text,
    triangles,
    unscale_second_form,
)

# the flat test metric has kappa = 0, where log-derivatives of gamma are undefined
pytestmark = pytest.mark.filterwarnings("ignore:invalid value encountered in divide:RuntimeWarning")

DATA = Path(__file__).with_name("data")
SQ2 = np.sqrt(2.0)


def _flat():
    def coeffs(x, y):
        one, zero = np.ones_like(x + y), np.zeros_like(x + y)
        d = {"E": one, "F": zero, "G": one}
        for k in "EFG":
            for suffix in ("x", "y", "xx", "xy", "yy"):
                d[k + suffix] = zero
        return d

    return Metric("flat", {}, coeffs, curvature=None, check_consistency=False)


def _plane(nt=3, ns=3):
    t, s = np.linspace(0, 1, nt), np.linspace(0, 1, ns)
    z = np.zeros((nt, ns))
    return integrate_position(integrate_frame(_flat(), z, z, z, t, s, check_base=True))


def _catenoid_patch(n, t=(0.0, 1.0), s=(-1.0, 1.0), delta=0.0, extra=None, **kw):
    m = catenoid(1.0, SQ2)
    tt, ss = np.linspace(*t, n + 1), np.linspace(*s, n + 1)
    T, S = np.meshgrid(tt, ss, indexing="ij")
    form = fluid_to_second_form(FluidState(np.full(T.shape, SQ2), np.zeros(T.shape)),
                                m.evaluate(T, S).gamma, 1.0)
    h = list(unscale_second_form(form, m, x=T, y=S))
    if delta:
        h[1] = h[1] + delta * (extra if extra is not None else np.sin(2 * T) * np.cos(S))
    return m, integrate_frame(m, *h, tt, ss, defect_stride=max(1, n // 8), **kw)


def test_plane():
    p = _plane(5, 4)
    T, S = np.meshgrid(p.t, p.s, indexing="ij")
    np.testing.assert_allclose(p.r[..., 0], T, atol=1e-15)
    np.testing.assert_allclose(p.r[..., 1], S, atol=1e-15)
    np.testing.assert_allclose(p.r[..., 2], 0.0, atol=1e-15)
    assert p.max_defect == 0.0 and p.normal_drift == 0.0


def test_plane_golden_obj():
    assert obj_text(_plane(), "plane") == (DATA / "plane_3x3.obj").read_text()


def test_unscale_matches_definition():
    m = catenoid(1.0, SQ2)
    x, y = np.array([0.1, 0.7]), np.array([0.0, -0.4])
    v = m.evaluate(x, y)
    form = fluid_to_second_form(FluidState(np.array([1.5, 2.0]), np.array([0.2, -0.3])), v.gamma)
    h = unscale_second_form(form, m, x=x, y=y)
    for a, b in zip(h, (form.Lt, form.Mt, form.Nt)):
        np.testing.assert_allclose(a, np.sqrt(v.det) * v.gamma * b, rtol=1e-15)
    with pytest.raises(ReconstructionError):
        unscale_second_form(form)


def test_catenoid_refinement_rates():
    d, ff = [], []
    for n in (16, 32, 64):
        m, p = _catenoid_patch(n)
        d.append(p.max_defect)
        ff.append(first_form_error(integrate_position(p), m)[0])
    # frames: RK4, at least third order observed; positions: second order
    assert d[2] < 1e-8 and d[1] < d[0] / 8 and d[2] < d[1] / 8
    assert ff[1] < ff[0] / 3.5 and ff[2] < ff[1] / 3.5 and ff[2] < 1e-3


def test_codazzi_violation_flagged():
    _, ok = _catenoid_patch(32)
    _, bad = _catenoid_patch(32, delta=0.05)
    assert bad.max_defect > 1e3 * ok.max_defect and bad.max_defect > 1e-3


def test_violation_defect_linear():
    a = _catenoid_patch(32, delta=1e-4)[1].max_defect
    b = _catenoid_patch(32, delta=2e-4)[1].max_defect
    assert b / a == pytest.approx(2.0, rel=0.02)


def test_translation_equivariance():
    _, p = _catenoid_patch(16)
    r0 = integrate_position(p).r.copy()
    shift = np.array([1.5, -2.0, 0.25])
    r1 = integrate_position(p, base_position=shift).r
    np.testing.assert_allclose(r1 - r0, np.broadcast_to(shift, r0.shape), atol=1e-13)


def test_corrupted_normal_detected():
    m = catenoid(1.0, SQ2)
    F = base_frame(m, 0.0, -1.0)
    check_base_frame(F, m, 0.0, -1.0)
    F[2] *= 1.1
    with pytest.raises(ReconstructionError):
        check_base_frame(F, m, 0.0, -1.0)
    _, p = _catenoid_patch(16, frame=F, check_base=False)
    assert p.normal_drift > 1e-2


def test_without_renormalisation_drift_is_small():
    _, a = _catenoid_patch(32)
    _, b = _catenoid_patch(32, renormalize=False)
    assert a.normal_drift < 1e-8 and b.normal_drift < 1e-6


def test_two_by_two_mesh(tmp_path):
    p = _plane(2, 2)
    assert triangles(2, 2).shape == (2, 3)
    text = obj_text(p)
    assert sum(ln.startswith("v ") for ln in text.splitlines()) == 4
    assert sum(ln.startswith("f ") for ln in text.splitlines()) == 2
    out = tmp_path / "m.obj"
    export_mesh(p, out, first_form=np.zeros((2, 2)))
    assert out.read_text() == text
    assert (tmp_path / "m.obj.csv").read_text().splitlines()[0] == "i,j,x,y,first_form_error,defect"


def test_nan_guard_leaves_no_file(tmp_path):
    p = _plane()
    p.r[1, 1, 0] = np.nan
    with pytest.raises(ReconstructionError):
        export_mesh(p, tmp_path / "bad.obj")
    assert list(tmp_path.iterdir()) == []


def test_nonfinite_h_rejected():
    z = np.zeros((3, 3))
    with pytest.raises(ReconstructionError):
        integrate_frame(_flat(), z, z * np.nan, z, np.arange(3.0), np.arange(3.0))


def test_angle_defect_matches_gauss_curvature():
    m, p = _catenoid_patch(64)
    integrate_position(p)
    K = angle_defect_curvature(p.r)
    x, y = p.xy()
    kappa = m.evaluate(x, y).kappa
    inner = np.isfinite(K)
    assert np.isnan(K[0, 0]) and inner.sum() == 63 * 63
    assert np.max(np.abs(K[inner] - kappa[inner])) < 0.05 * np.max(np.abs(kappa))


def test_patch_requires_positions():
    p = SurfacePatch(np.arange(2.0), np.arange(2.0), "x", *(np.zeros((2, 2, 3)),) * 3)
    with pytest.raises(ReconstructionError):
        obj_text(p)
