"""Metric families, Christoffel symbols, Brioschi curvature and the gamma-rescaled connection.

All evaluators are vectorised: ``x`` and ``y`` may be scalars or arrays and
broadcast against each other. Catalog metrics are conformal,
``E = G = E(x)``, ``F = 0``, and carry analytic derivatives; custom metrics
supply only ``(E, F, G)`` and get 4th-order finite differences.
"""

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    CurvatureSignError,
    DegenerateMetricError,
    MetricDomainError,
    MetricError,
)

_COEFF_NAMES = (
    "E", "F", "G",
    "Ex", "Ey", "Fx", "Fy", "Gx", "Gy",
    "Exx", "Exy", "Eyy", "Fxx", "Fxy", "Fyy", "Gxx", "Gxy", "Gyy",
)

DEFAULT_CONSISTENCY_TOL = 1e-6


@dataclass(frozen=True)
class MetricValues:
    """Metric coefficients, their partials and the curvature at a set of points."""

    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    Ex: np.ndarray
    Ey: np.ndarray
    Fx: np.ndarray
    Fy: np.ndarray
    Gx: np.ndarray
    Gy: np.ndarray
    Exx: np.ndarray
    Exy: np.ndarray
    Eyy: np.ndarray
    Fxx: np.ndarray
    Fxy: np.ndarray
    Fyy: np.ndarray
    Gxx: np.ndarray
    Gxy: np.ndarray
    Gyy: np.ndarray
    kappa: np.ndarray
    kappa_x: np.ndarray
    kappa_y: np.ndarray

    @property
    def det(self):
        return self.E * self.G - self.F**2

    @property
    def sqrt_det(self):
        return np.sqrt(self.det)

    @property
    def gamma(self):
        return np.sqrt(-self.kappa)

    @property
    def gamma_x(self):
        return -self.kappa_x / (2.0 * self.gamma)

    @property
    def gamma_y(self):
        return -self.kappa_y / (2.0 * self.gamma)

    def inverse(self):
        """Components (g^11, g^12, g^22) of the inverse metric."""
        d = self.det
        return self.G / d, -self.F / d, self.E / d


@dataclass(frozen=True)
class ChristoffelSet:
    """Christoffel symbols Gamma^(k)_ij (symmetric in ij, single storage) and their tilde variants.

    Attribute ``g112`` is Gamma^(1)_12; ``t112`` is the tilde version.
    """

    g111: np.ndarray
    g112: np.ndarray
    g122: np.ndarray
    g211: np.ndarray
    g212: np.ndarray
    g222: np.ndarray
    t111: np.ndarray
    t112: np.ndarray
    t122: np.ndarray
    t211: np.ndarray
    t212: np.ndarray
    t222: np.ndarray

    def symbol(self, k, i, j, tilde=False):
        i, j = sorted((i, j))
        return getattr(self, f"{'t' if tilde else 'g'}{k}{i}{j}")

    def tilde(self):
        """The six tilde symbols as a tuple (111, 112, 122, 211, 212, 222)."""
        return (self.t111, self.t112, self.t122, self.t211, self.t212, self.t222)


@dataclass(frozen=True)
class Metric:
    """An immutable 2D Riemannian metric with negative Gauss curvature on its domain.

    ``coeffs(x, y)`` returns a dict with the 18 entries of ``_COEFF_NAMES``;
    ``curvature(x, y)`` returns ``(kappa, kappa_x, kappa_y)`` or is ``None``,
    in which case the Brioschi determinant supplies kappa and finite
    differences of it supply the derivatives.
    """

    family: str
    params: Mapping[str, float]
    coeffs: Callable
    curvature: Optional[Callable] = None
    x_domain: tuple = (-np.inf, np.inf)
    y_domain: tuple = (-np.inf, np.inf)
    conformal: bool = False
    scale: float = 1.0
    check_consistency: bool = True
    consistency_tol: float = DEFAULT_CONSISTENCY_TOL
    notes: str = ""
    extras: Mapping[str, Callable] = field(default_factory=dict)

    def __post_init__(self):
        if self.check_consistency and self.curvature is not None:
            xs, ys = self.sample_points()
            supplied = self.curvature(xs, ys)[0]
            computed = brioschi(self.raw_coefficients(xs, ys))
            err = np.max(np.abs(supplied - computed) / np.maximum(np.abs(computed), 1e-300))
            if not err < self.consistency_tol:
                raise MetricError(
                    f"{self.family}: supplied curvature disagrees with the Brioschi "
                    f"determinant (max relative error {err:.3e} > {self.consistency_tol:.1e})"
                )

    def sample_points(self, n=9):
        """Representative points inside the domain, used for structural checks."""
        xs = _sample_interval(self.x_domain, n, self.scale)
        if self.conformal:
            return xs, np.zeros_like(xs)
        ys = _sample_interval(self.y_domain, 3, self.scale)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return X.ravel(), Y.ravel()

    def _check_domain(self, x, y):
        lo, hi = self.x_domain
        if np.any(x < lo) or np.any(x > hi):
            raise MetricDomainError(f"{self.family}: x outside declared domain [{lo}, {hi}]")
        lo, hi = self.y_domain
        if np.any(y < lo) or np.any(y > hi):
            raise MetricDomainError(f"{self.family}: y outside declared domain [{lo}, {hi}]")

    def raw_coefficients(self, x, y=0.0):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        self._check_domain(x, y)
        c = self.coeffs(x, y)
        return {k: np.broadcast_to(np.asarray(c[k], dtype=float), x.shape) for k in _COEFF_NAMES}

    def evaluate(self, x, y=0.0, strict=True):
        """All coefficients, partials, kappa and its first derivatives at (x, y).

        With ``strict`` (the default) a non-negative kappa anywhere raises
        :class:`CurvatureSignError`; a degenerate metric always raises.
        """
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        c = self.raw_coefficients(x, y)
        det = c["E"] * c["G"] - c["F"] ** 2
        if np.any(~(det > 0)) or np.any(~(c["E"] > 0)) or np.any(~(c["G"] > 0)):
            raise DegenerateMetricError(f"{self.family}: metric not positive definite")
        if self.curvature is not None:
            k, kx, ky = (np.broadcast_to(np.asarray(a, dtype=float), x.shape) for a in self.curvature(x, y))
        else:
            k = brioschi(c)
            kx, ky = _brioschi_gradient(self, x, y)
        if strict and np.any(~(k < 0)):
            bad = np.argmax(~(k < 0).ravel())
            raise CurvatureSignError(
                f"{self.family}: Gauss curvature {k.ravel()[bad]:.6g} at x={x.ravel()[bad]:.6g}, "
                f"y={y.ravel()[bad]:.6g} is not strictly negative"
            )
        return MetricValues(**c, kappa=k, kappa_x=kx, kappa_y=ky)

    def kappa(self, x, y=0.0):
        return self.evaluate(x, y, strict=False).kappa

    # conformal helpers: profile E(x) and its log-derivative
    def profile(self, x):
        """(E, E', E'') along x; only for conformal metrics."""
        if not self.conformal:
            raise MetricError(f"{self.family}: metric is not of the form E = G = E(x), F = 0")
        c = self.raw_coefficients(x, 0.0)
        return c["E"], c["Ex"], c["Exx"]


def eval_metric(metric: "Metric", x, y=0.0, strict=True) -> MetricValues:
    """Coefficients, partials, curvature and ``gamma`` of ``metric`` at ``(x, y)``."""
    return metric.evaluate(x, y, strict=strict)


def _sample_interval(dom, n, scale):
    lo, hi = dom
    if not np.isfinite(lo):
        lo = -2.0 * scale if not np.isfinite(hi) else hi - 4.0 * scale
    if not np.isfinite(hi):
        hi = lo + 4.0 * scale
    pad = 1e-3 * (hi - lo)
    return np.linspace(lo + pad, hi - pad, n)


# ---------------------------------------------------------------------------
# Christoffel symbols and curvature


def christoffel(values: MetricValues) -> ChristoffelSet:
    """Christoffel symbols from the classical (E, F, G) quotient identities, plus the gamma-corrected set."""
    v = values
    D = v.det
    if np.any(~(D > 0)):
        raise DegenerateMetricError("EG - F^2 <= 0")
    two_d = 2.0 * D
    g111 = (v.G * v.Ex - 2.0 * v.F * v.Fx + v.F * v.Ey) / two_d
    g112 = (v.G * v.Ey - v.F * v.Gx) / two_d
    g122 = (2.0 * v.G * v.Fy - v.G * v.Gx - v.F * v.Gy) / two_d
    g211 = (2.0 * v.E * v.Fx - v.E * v.Ey - v.F * v.Ex) / two_d
    g212 = (v.E * v.Gx - v.F * v.Ey) / two_d
    g222 = (v.E * v.Gy - 2.0 * v.F * v.Fy + v.F * v.Gx) / two_d
    # gamma_x / gamma = kappa_x / (2 kappa)
    lx = v.kappa_x / (2.0 * v.kappa)
    ly = v.kappa_y / (2.0 * v.kappa)
    return ChristoffelSet(
        g111, g112, g122, g211, g212, g222,
        t111=g111 + lx,
        t112=g112 + 0.5 * ly,
        t122=g122,
        t211=g211,
        t212=g212 + 0.5 * lx,
        t222=g222 + ly,
    )


def brioschi(c) -> np.ndarray:
    """Gauss curvature from the Brioschi two-determinant formula.

    ``c`` is a mapping (or :class:`MetricValues`) with the metric
    coefficients and their first and second partials.
    """
    get = c.__getitem__ if isinstance(c, Mapping) else lambda k: getattr(c, k)
    E, F, G = get("E"), get("F"), get("G")
    Ex, Ey, Fx, Fy, Gx, Gy = (get(k) for k in ("Ex", "Ey", "Fx", "Fy", "Gx", "Gy"))
    a11 = -0.5 * get("Eyy") + get("Fxy") - 0.5 * get("Gxx")
    a12 = 0.5 * Ex
    a13 = Fx - 0.5 * Ey
    a21 = Fy - 0.5 * Gx
    a31 = 0.5 * Gy
    det1 = (
        a11 * (E * G - F * F)
        - a12 * (a21 * G - F * a31)
        + a13 * (a21 * F - E * a31)
    )
    b12 = 0.5 * Ey
    b13 = 0.5 * Gx
    det2 = -b12 * (b12 * G - F * b13) + b13 * (b12 * F - E * b13)
    D = E * G - F * F
    if np.any(~(D > 0)):
        raise DegenerateMetricError("EG - F^2 <= 0")
    return (det1 - det2) / D**2


def gauss_curvature_brioschi(metric: Metric, x, y=0.0):
    """kappa at (x, y) computed from the metric coefficients alone (ignores any supplied kappa)."""
    return brioschi(metric.raw_coefficients(x, y))


def _brioschi_gradient(metric, x, y):
    # outer derivative step is wider than the inner one: the inner FD noise
    # (~1e-7 relative) would otherwise be amplified by 1/h
    h = 1e-2 * metric.scale
    f = lambda a, b: brioschi(metric.coeffs(a, b))
    kx = _d1(lambda s: f(x + s, y), h)
    if metric.conformal:
        ky = np.zeros_like(kx)
    else:
        ky = _d1(lambda s: f(x, y + s), h)
    return kx, ky


def _d1(f, h):
    return (-f(2 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2 * h)) / (12.0 * h)


def _d2(f, h):
    return (-f(2 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2 * h)) / (12.0 * h * h)


def fd_coefficients(E, F, G, h):
    """Build a ``coeffs`` callable from plain (E, F, G) callables via 4th-order centred differences."""

    def coeffs(x, y):
        out = {}
        for name, fn in (("E", E), ("F", F), ("G", G)):
            out[name] = np.broadcast_to(fn(x, y), np.broadcast(x, y).shape).astype(float)
            out[name + "x"] = _d1(lambda s: fn(x + s, y), h)
            out[name + "y"] = _d1(lambda s: fn(x, y + s), h)
            out[name + "xx"] = _d2(lambda s: fn(x + s, y), h)
            out[name + "yy"] = _d2(lambda s: fn(x, y + s), h)
            out[name + "xy"] = _d1(lambda s: _d1(lambda t: fn(x + s, y + t), h), h)
        return out

    return coeffs


# ---------------------------------------------------------------------------
# Families


def _conformal_coeffs(profile):
    """Wrap a profile ``x -> (E, E', E'')`` as an 18-entry coefficient callable with E = G, F = 0."""

    def coeffs(x, y):
        e, e1, e2 = profile(x)
        z = np.zeros(np.broadcast(x, y).shape)
        e, e1, e2 = (np.broadcast_to(a, z.shape) for a in (e, e1, e2))
        return {
            "E": e, "F": z, "G": e,
            "Ex": e1, "Ey": z, "Fx": z, "Fy": z, "Gx": e1, "Gy": z,
            "Exx": e2, "Exy": z, "Eyy": z, "Fxx": z, "Fxy": z, "Fyy": z,
            "Gxx": e2, "Gxy": z, "Gyy": z,
        }

    return coeffs


def _conformal_curvature(kfun):
    def curvature(x, y):
        k, k1 = kfun(x)
        z = np.zeros(np.broadcast(x, y).shape)
        return np.broadcast_to(k, z.shape), np.broadcast_to(k1, z.shape), z

    return curvature


def catenoid(c=1.0, beta=np.sqrt(2.0), kappa0=None, variant="x"):
    """Catenoid-type metric satisfying the beta-condition for the chosen marching orientation.

    ``variant="x"`` (x time-like): ``E = cosh(cx)^(2/(beta^2-1))``,
    ``kappa = -kappa0 E^(-beta^2)``. ``variant="y"`` (y time-like):
    ``E = cosh(cx)^(2(beta^2-1))``, ``kappa = -kappa0 E^(-beta^2/(beta^2-1))``.
    The intrinsic curvature of either profile fixes ``kappa0 = m c^2`` with
    ``m`` the half-exponent; that is the default, and any other value fails
    the Brioschi consistency check.
    """
    if c == 0:
        raise MetricError("catenoid: c must be nonzero")
    if not beta > 1:
        raise MetricError("catenoid: beta must exceed 1")
    b2 = beta * beta
    if variant == "x":
        m, kexp = 1.0 / (b2 - 1.0), b2
    elif variant == "y":
        m, kexp = b2 - 1.0, b2 / (b2 - 1.0)
    else:
        raise MetricError(f"catenoid: unknown variant {variant!r} (use 'x' or 'y')")
    if kappa0 is None:
        kappa0 = m * c * c
    if not kappa0 > 0:
        raise MetricError("catenoid: kappa0 must be positive")

    def profile(x):
        ch = np.cosh(c * x)
        th = np.tanh(c * x)
        e = ch ** (2.0 * m)
        e1 = 2.0 * m * c * th * e
        e2 = e * ((2.0 * m * c * th) ** 2 + 2.0 * m * c * c / ch**2)
        return e, e1, e2

    def kfun(x):
        e, e1, _ = profile(x)
        k = -kappa0 * e ** (-kexp)
        return k, -kexp * (e1 / e) * k

    return Metric(
        family="catenoid",
        params={"c": float(c), "beta": float(beta), "kappa0": float(kappa0), "variant": variant},
        coeffs=_conformal_coeffs(profile),
        curvature=_conformal_curvature(kfun),
        conformal=True,
        scale=1.0 / abs(c),
    )


def isothermal_helicoid(lam=1.0):
    """Helicoid in isothermal coordinates: ``E = G = lam^2/2 + (lam^4 e^{2x} + e^{-2x})/4``, ``kappa = -lam^2/E^2``."""
    if not lam > 0:
        raise MetricError("helicoid-isothermal: lambda must be positive")
    l2 = lam * lam
    l4 = l2 * l2

    def profile(x):
        a = l4 * np.exp(2.0 * x)
        b = np.exp(-2.0 * x)
        return 0.5 * l2 + 0.25 * (a + b), 0.5 * (a - b), a + b

    def kfun(x):
        e, e1, _ = profile(x)
        k = -l2 / e**2
        return k, 2.0 * l2 * e1 / e**3

    return Metric(
        family="helicoid-isothermal",
        params={"lambda": float(lam)},
        coeffs=_conformal_coeffs(profile),
        curvature=_conformal_curvature(kfun),
        conformal=True,
    )


def torus_phi(Y, a, b):
    """Isothermal coordinate x = phi(Y) of the torus, continuous and increasing on [0, 2*pi]."""
    s = np.sqrt(a * a - b * b)
    k = np.sqrt((a - b) / (a + b))
    h = 0.5 * np.asarray(Y, dtype=float)
    return (2.0 * b / s) * np.arctan2(k * np.sin(h), np.cos(h))


def torus_phi_inverse(x, a, b, tol=1e-12):
    """Y = phi^{-1}(x) on [0, 2*pi]: vectorised bisection to ``tol`` then one Newton step."""
    x = np.asarray(x, dtype=float)
    xmax = 2.0 * np.pi * b / np.sqrt(a * a - b * b)
    if np.any(x < 0) or np.any(x > xmax):
        raise MetricDomainError(f"torus-isothermal: x outside [0, {xmax:.6g}]")
    lo = np.zeros_like(x)
    hi = np.full_like(x, 2.0 * np.pi)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        below = torus_phi(mid, a, b) < x
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    Y = 0.5 * (lo + hi)
    # phi'(Y) = b / (a + b cos Y)
    Y = Y - (torus_phi(Y, a, b) - x) * (a + b * np.cos(Y)) / b
    return np.clip(Y, 0.0, 2.0 * np.pi)


def isothermal_torus(a=2.0, b=1.0):
    """Torus in isothermal coordinates, ``E = (a + b cos Y)^2`` with ``Y = phi^{-1}(x)``.

    Only the band ``cos Y < 0`` has negative curvature; evaluating elsewhere
    with ``strict=True`` raises :class:`CurvatureSignError`. The family does
    not satisfy the beta-condition and is for verification only.
    """
    if not (a > b > 0):
        raise MetricError("torus-isothermal: need a > b > 0")
    xmax = 2.0 * np.pi * b / np.sqrt(a * a - b * b)

    def profile(x):
        Y = torus_phi_inverse(x, a, b)
        r = a + b * np.cos(Y)
        sY, cY = np.sin(Y), np.cos(Y)
        e = r * r
        e1 = -2.0 * sY * r * r
        e2 = (r * r / b) * (-2.0 * cY * r + 4.0 * b * sY * sY)
        return e, e1, e2

    def kfun(x):
        Y = torus_phi_inverse(x, a, b)
        r = a + b * np.cos(Y)
        return np.cos(Y) / (b * r), -a * np.sin(Y) / (b * b * r)

    band = (float(torus_phi(0.5 * np.pi, a, b)), float(torus_phi(1.5 * np.pi, a, b)))
    return Metric(
        family="torus-isothermal",
        params={"a": float(a), "b": float(b)},
        coeffs=_conformal_coeffs(profile),
        curvature=_conformal_curvature(kfun),
        x_domain=(0.0, xmax),
        conformal=True,
        scale=b,
        notes="fails the beta-condition; verification-only",
        extras={"negative_band": lambda: band, "Y": lambda x: torus_phi_inverse(x, a, b)},
    )


def custom_metric(E, F=None, G=None, kappa=None, x_domain=(-np.inf, np.inf),
                  y_domain=(-np.inf, np.inf), scale=1.0, family="custom", params=None,
                  check_consistency=True, consistency_tol=DEFAULT_CONSISTENCY_TOL):
    """Metric from callables ``E(x, y)``, ``F(x, y)``, ``G(x, y)``.

    Partials come from 4th-order centred differences with step
    ``1e-4 * scale``. ``F`` defaults to 0 and ``G`` to ``E``. ``kappa``, if
    given, is a callable returning ``(kappa, kappa_x, kappa_y)`` and is
    checked against Brioschi.
    """
    if F is None:
        F = lambda x, y: np.zeros(np.broadcast(x, y).shape)
    if G is None:
        G = E
    coeffs = fd_coefficients(E, F, G, 1e-4 * scale)
    return Metric(
        family=family,
        params=dict(params or {}),
        coeffs=coeffs,
        curvature=kappa,
        x_domain=tuple(x_domain),
        y_domain=tuple(y_domain),
        conformal=False,
        scale=scale,
        check_consistency=check_consistency,
        consistency_tol=consistency_tol,
    )


def metric_from_csv(path):
    """Conformal custom metric from a CSV table with header ``x,E`` (cubic-spline interpolated)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().replace(" ", "").split(",")
    if header[:2] != ["x", "E"]:
        raise MetricError(f"{path}: expected header 'x,E', got {','.join(header)!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xs, es = data[:, 0], data[:, 1]
    if np.any(np.diff(xs) <= 0):
        raise MetricError(f"{path}: x column must be strictly increasing")
    if np.any(es <= 0):
        raise MetricError(f"{path}: E must be positive")
    spline = CubicSpline(xs, es)
    d1, d2, d3 = spline.derivative(1), spline.derivative(2), spline.derivative(3)

    def profile(x):
        return spline(x), d1(x), d2(x)

    def kfun(x):
        e, e1, e2 = spline(x), d1(x), d2(x)
        e3 = d3(x)
        # conformal metric: kappa = -(E E'' - E'^2) / (2 E^3)
        k = -(e * e2 - e1 * e1) / (2.0 * e**3)
        k1 = -(e * e3 - e1 * e2) / (2.0 * e**3) + 3.0 * (e * e2 - e1 * e1) * e1 / (2.0 * e**4)
        return k, k1

    return Metric(
        family="custom",
        params={"source": str(path)},
        coeffs=_conformal_coeffs(profile),
        curvature=_conformal_curvature(kfun),
        x_domain=(float(xs[0]), float(xs[-1])),
        conformal=True,
        scale=float(xs[-1] - xs[0]) / 4.0,
    )


# ---------------------------------------------------------------------------
# Structural checks


@dataclass
class BetaReport:
    satisfied: bool
    form: str
    beta: float
    max_residual: float
    x: np.ndarray
    residual: np.ndarray
    ratio: np.ndarray

    def ratio_variation(self):
        """(max - min) / min of |ratio| over the finite entries."""
        r = np.abs(self.ratio[np.isfinite(self.ratio)])
        return float((r.max() - r.min()) / r.min())


def check_beta_condition(metric: Metric, beta, form=None, x=None, tol=1e-8):
    """Residual of the beta-condition ``w kappa'/kappa + E'/E = 0`` over a sample grid.

    ``form="ode-1"`` uses ``w = 1/beta^2`` (x time-like), ``"ode-2"`` uses
    ``w = (beta^2-1)/beta^2`` (y time-like). For catenoids the form defaults
    to the one matching the metric's variant. Also returns the ratio
    ``(kappa'/kappa)/(E'/E)`` (NaN where E' = 0).
    """
    if not metric.conformal:
        raise MetricError(f"{metric.family}: beta-condition needs F = 0, E = G = E(x)")
    if not beta > 1:
        raise MetricError("beta must exceed 1")
    if form is None:
        form = "ode-2" if metric.params.get("variant") == "y" else "ode-1"
    b2 = beta * beta
    if form == "ode-1":
        w = 1.0 / b2
    elif form == "ode-2":
        w = (b2 - 1.0) / b2
    else:
        raise MetricError(f"unknown beta-condition form {form!r}")
    if x is None:
        if "negative_band" in metric.extras:
            lo, hi = metric.extras["negative_band"]()
            pad = 1e-3 * (hi - lo)
            x = np.linspace(lo + pad, hi - pad, 201)
        else:
            x = _sample_interval(metric.x_domain, 201, metric.scale)
    x = np.asarray(x, dtype=float)
    v = metric.evaluate(x, 0.0, strict=False)
    dlogk = v.kappa_x / v.kappa
    dloge = v.Ex / v.E
    residual = w * dlogk + dloge
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.abs(dloge) > 1e-12, dlogk / dloge, np.nan)
    max_res = float(np.max(np.abs(residual)))
    return BetaReport(max_res < tol, form, float(beta), max_res, x, residual, ratio)


def periodicize_metric(metric: Metric, period, beta, n=2048, width=None, tail_tol=1e-8):
    """P-periodic approximation of a conformal metric (for y time-like marches).

    ``a = E'/E`` is truncated to ``[-P/4, P/4]``, odd-reflected about
    ``x = +-P/4``, extended with period P and mollified by a bump of total
    width ``P/20`` (circular trapezoid convolution on an ``n``-point grid).
    Then ``E^P = E(0) exp(A)`` and ``kappa^P = kappa(0) exp(-beta^2/(beta^2-1) A)``
    with ``A(x) = int_0^x a^P``, which solve the two linear ODEs exactly.
    The returned metric pairs ``E^P`` with ``kappa^P`` as data; kappa^P is
    not the intrinsic curvature of ``E^P``, so the Brioschi check is off.
    """
    if not metric.conformal:
        raise MetricError(f"{metric.family}: periodicization needs F = 0, E = G = E(x)")
    if not period > 0:
        raise MetricError("period must be positive")
    if not beta > 1:
        raise MetricError("beta must exceed 1")
    P = float(period)
    if width is None:
        width = P / 20.0
    xs = -0.5 * P + P * np.arange(n) / n
    q = 0.25 * P
    # fold every grid point back into [-P/4, P/4] with the odd-reflection sign
    src = np.where(xs > q, 0.5 * P - xs, np.where(xs < -q, -0.5 * P - xs, xs))
    sign = np.where(np.abs(xs) > q, -1.0, 1.0)
    on_line = np.isclose(np.abs(xs), q, rtol=0, atol=1e-12 * P)
    v = metric.evaluate(src, 0.0, strict=False)
    a = sign * v.Ex / v.E
    a[on_line] = 0.0  # jump point of the odd reflection: take the mean of both sides

    kernel = _bump_kernel(xs, width, P)
    ahat = np.fft.rfft(a) * np.fft.rfft(kernel) * (P / n)
    mean = ahat[0].real / n
    if abs(mean) * P > 1e-8 * P * max(1.0, np.max(np.abs(a))):
        raise MetricError(f"periodicize: folded log-derivative has nonzero mean {mean:.3e}")
    ahat[0] = 0.0
    peak = np.max(np.abs(ahat[1:]))
    if peak > 0 and np.abs(ahat[-1]) > tail_tol * peak:
        raise MetricError("periodicize: Fourier tail not resolved; increase n or the mollifier width")

    k = 2.0 * np.pi * np.arange(ahat.size) / P
    keep = np.abs(ahat) > 1e-17 * max(peak, 1e-300)
    keep[0] = False
    kk = k[keep]
    coef = ahat[keep] * (2.0 / n)
    coef[np.isclose(kk, np.pi * n / P)] *= 0.5
    # the series is sampled relative to the grid origin -P/2
    phase0 = np.exp(-1j * kk * xs[0])
    coef = coef * phase0

    E0 = float(metric.evaluate(0.0, 0.0, strict=False).E)
    k0 = float(metric.evaluate(0.0, 0.0, strict=False).kappa)
    r = beta * beta / (beta * beta - 1.0)

    def _series(x):
        x = np.asarray(x, dtype=float)
        ph = np.exp(1j * np.multiply.outer(x, kk))
        aP = np.real(ph @ coef)
        daP = np.real(ph @ (1j * kk * coef))
        A = np.real((ph - 1.0) @ (coef / (1j * kk)))
        return aP, daP, A

    def profile(x):
        aP, daP, A = _series(x)
        e = E0 * np.exp(A)
        return e, aP * e, (daP + aP * aP) * e

    def kfun(x):
        aP, _, A = _series(x)
        kk_ = k0 * np.exp(-r * A)
        return kk_, -r * aP * kk_

    return Metric(
        family="periodic",
        params={"base": metric.family, "period": P, "beta": float(beta), "width": float(width),
                **{f"base_{k_}": v_ for k_, v_ in metric.params.items()}},
        coeffs=_conformal_coeffs(profile),
        curvature=_conformal_curvature(kfun),
        conformal=True,
        scale=P / 4.0,
        check_consistency=False,
        notes="periodic surrogate; kappa is transported data, not the intrinsic curvature of E",
        extras={"log_derivative": lambda x: _series(x)[0]},
    )


def _bump_kernel(xs, width, P):
    """Normalised symmetric C-infinity bump of total support ``width`` on a periodic grid."""
    n = xs.size
    d = (xs - xs[0])
    d = np.minimum(d, P - d)  # periodic distance from the origin sample
    r = 2.0 * d / width
    ker = np.zeros(n)
    m = r < 1.0
    ker[m] = np.exp(-1.0 / (1.0 - r[m] ** 2))
    if ker.sum() == 0:
        raise MetricError("mollifier narrower than the grid spacing")
    return ker / (ker.sum() * (P / n))


# ---------------------------------------------------------------------------
# Catalog

CATALOG = {
    "catenoid": {
        "factory": catenoid,
        "params": {"c": "nonzero real", "beta": "> 1", "kappa0": "> 0 (default c^2 m)", "variant": "'x' | 'y'"},
        "note": "satisfies the beta-condition (ode-1 for variant x, ode-2 for variant y)",
    },
    "helicoid-isothermal": {
        "factory": isothermal_helicoid,
        "params": {"lambda": "> 0"},
        "note": "satisfies ode-1 and ode-2 with beta = sqrt(2)",
    },
    "torus-isothermal": {
        "factory": isothermal_torus,
        "params": {"a": "> b", "b": "> 0"},
        "note": "fails ode-1; verification-only",
    },
    "custom": {
        "factory": metric_from_csv,
        "params": {"path": "CSV file with header x,E"},
        "note": "conformal metric from tabulated E(x), cubic interpolation",
    },
}


def make_metric(family, **params):
    """Build a catalog metric from its family name and parameters."""
    if family == "catenoid":
        return catenoid(
            c=params.get("c", 1.0),
            beta=params.get("beta", np.sqrt(2.0)),
            kappa0=params.get("kappa0"),
            variant=params.get("variant", "x"),
        )
    if family == "helicoid-isothermal":
        return isothermal_helicoid(params.get("lambda", params.get("lam", 1.0)))
    if family == "torus-isothermal":
        return isothermal_torus(params.get("a", 2.0), params.get("b", 1.0))
    if family == "custom":
        if "path" not in params:
            raise MetricError("custom metric needs a 'path' to an x,E table")
        return metric_from_csv(params["path"])
    raise MetricError(f"unknown metric family {family!r}")
