import numpy as np
import pytest

from gcimmersion.metric import Metric


def _trig_coeffs(a, b, c, d):
    """Non-conformal smooth metric with hand-coded partials (positive definite for |a|, |c|, |d| <= 0.5)."""

    def coeffs(x, y):
        u, w = x + b * y, x - y
        su, cu, sw, cw = np.sin(u), np.cos(u), np.sin(w), np.cos(w)
        sx, cx, sy, cy = np.sin(x), np.cos(x), np.sin(y), np.cos(y)
        return {
            "E": 2 + a * su, "Ex": a * cu, "Ey": a * b * cu,
            "Exx": -a * su, "Exy": -a * b * su, "Eyy": -a * b * b * su,
            "F": c * sx * cy, "Fx": c * cx * cy, "Fy": -c * sx * sy,
            "Fxx": -c * sx * cy, "Fxy": -c * cx * sy, "Fyy": -c * sx * cy,
            "G": 2 + d * cw, "Gx": -d * sw, "Gy": d * sw,
            "Gxx": -d * cw, "Gxy": d * cw, "Gyy": -d * cw,
        }

    def E(x, y):
        return 2 + a * np.sin(x + b * y)

    def F(x, y):
        return c * np.sin(x) * np.cos(y)

    def G(x, y):
        return 2 + d * np.cos(x - y)

    return coeffs, (E, F, G)


@pytest.fixture
def trig_metric():
    """Factory: random smooth F != 0 metric plus plain (E, F, G) callables for oracles."""

    def make(rng):
        a, c, d = rng.uniform(-0.5, 0.5, 3)
        b = rng.uniform(0.5, 1.5)
        coeffs, efg = _trig_coeffs(a, b, c, d)
        m = Metric("trig", {"a": a, "b": b, "c": c, "d": d}, coeffs, curvature=None, check_consistency=False)
        return m, efg

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# ---------------------------------------------------------------------------
# Acceptance summary: one line per criterion-marked test.

_CRITERIA = []


@pytest.fixture
def detail(request):
    """Mutable dict whose contents are echoed on the criterion's summary line."""
    d = {}
    request.node._criterion_detail = d
    return d


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n, title = mark.args
    d = getattr(item, "_criterion_detail", {})
    text = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in d.items())
    _CRITERIA.append((n, title, "PASS" if rep.passed else "FAIL", text))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, status, text in sorted(_CRITERIA, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:2d} {status}  {title}" + (f"  [{text}]" if text else ""))
