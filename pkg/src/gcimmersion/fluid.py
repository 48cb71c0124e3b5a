"""Fluid-dynamic variables for the scaled Gauss-Codazzi system.

The scaled second fundamental form is written as the stress tensor of a
Chaplygin-type gas,

    L~ = rho v^2 + p,   M~ = -rho u v,   N~ = rho u^2 + p,   p = -1/rho,

so that ``L~ N~ - M~^2 = -1`` becomes the Bernoulli relation
``rho = 1/sqrt(q^2 - 1)``. Velocities are kept in polar form
``(u, v) = q (cos theta, sin theta)`` and the hyperbolic part is diagonalised
by the Riemann invariants ``W+- = theta +- arccos(1/q)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError, RegionError, SonicError

SONIC_GUARD = 1e-6

# marching frame -> centre angle of the diamond (orientation, direction)
_CENTERS = {("x", 1): 0.0, ("y", 1): 0.5 * np.pi, ("x", -1): np.pi, ("y", -1): -0.5 * np.pi}


def _as_float(a):
    return np.asarray(a, dtype=float)


def bernoulli(q, delta=SONIC_GUARD):
    """Density and pressure from the speed: ``rho = 1/sqrt(q^2-1)``, ``p = -1/rho``.

    Raises
    ------
    SonicError
        If any ``q <= 1 + delta``.
    """
    q = _as_float(q)
    if np.any(~(q > 1.0 + delta)):
        raise SonicError(f"speed q = {np.min(q):.6g} at or below the sonic guard 1 + {delta:g}")
    c = np.sqrt(q * q - 1.0)
    return 1.0 / c, -c


@dataclass(frozen=True)
class FluidState:
    """Grid fields of speed ``q`` and flow angle ``theta``."""

    q: np.ndarray
    theta: np.ndarray
    delta: float = SONIC_GUARD

    def __post_init__(self):
        object.__setattr__(self, "q", _as_float(self.q))
        object.__setattr__(self, "theta", _as_float(self.theta))
        bernoulli(self.q, self.delta)

    @property
    def rho(self):
        return 1.0 / self.c

    @property
    def p(self):
        return -self.c

    @property
    def c(self):
        """Sound speed, ``sqrt(q^2 - 1)`` (equal to ``1/rho``)."""
        return np.sqrt(self.q * self.q - 1.0)

    @property
    def u(self):
        return self.q * np.cos(self.theta)

    @property
    def v(self):
        return self.q * np.sin(self.theta)

    def bernoulli_residual(self):
        """``rho p q^2 + p^2 + 1``, identically zero for admissible states."""
        return self.rho * self.p * self.q**2 + self.p**2 + 1.0

    def riemann(self):
        return RiemannState(*riemann_invariants(self.q, self.theta))


@dataclass(frozen=True)
class RiemannState:
    """Grid fields of the Riemann invariants ``W+`` and ``W-``."""

    Wp: np.ndarray
    Wm: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Wp", _as_float(self.Wp))
        object.__setattr__(self, "Wm", _as_float(self.Wm))

    def to_fluid(self, delta=SONIC_GUARD):
        q, theta = invariants_to_state(self.Wp, self.Wm)
        return FluidState(q, theta, delta)


@dataclass(frozen=True)
class SecondForm:
    """Scaled ``(L~, M~, N~)``, unscaled ``(L, M, N) = gamma (L~, M~, N~)`` and ``h_ij = sqrt|g| (L, M, N)``."""

    Lt: np.ndarray
    Mt: np.ndarray
    Nt: np.ndarray
    gamma: np.ndarray = 1.0
    sqrt_det: np.ndarray = 1.0
    constraint_max: float = field(default=np.nan)

    def __post_init__(self):
        for name in ("Lt", "Mt", "Nt", "gamma", "sqrt_det"):
            object.__setattr__(self, name, _as_float(getattr(self, name)))
        if np.isnan(self.constraint_max) and self.Lt.size:
            object.__setattr__(self, "constraint_max", float(np.max(np.abs(self.scaled_residual()))))

    @property
    def L(self):
        return self.gamma * self.Lt

    @property
    def M(self):
        return self.gamma * self.Mt

    @property
    def N(self):
        return self.gamma * self.Nt

    @property
    def h11(self):
        return self.sqrt_det * self.L

    @property
    def h12(self):
        return self.sqrt_det * self.M

    @property
    def h22(self):
        return self.sqrt_det * self.N

    def scaled_residual(self):
        """Pointwise ``L~ N~ - M~^2 + 1``."""
        return self.Lt * self.Nt - self.Mt**2 + 1.0

    def gauss_residual(self, kappa):
        """Pointwise ``L N - M^2 - kappa``."""
        return self.L * self.N - self.M**2 - kappa


def fluid_to_second_form(state: FluidState, gamma=1.0, sqrt_det=1.0) -> SecondForm:
    """Second fundamental form of a fluid state (scaled, unscaled and densitised)."""
    gamma = _as_float(gamma)
    if np.any(~(gamma > 0)):
        raise ConstraintError("gamma must be positive")
    rho, p = bernoulli(state.q, state.delta)
    u, v = state.u, state.v
    return SecondForm(rho * v * v + p, -rho * u * v, rho * u * u + p, gamma, sqrt_det)


def _nearest_branch(theta_mod_pi, reference):
    # theta is only known mod pi; pick the representative closest to reference
    k = np.round((reference - theta_mod_pi) / np.pi)
    return theta_mod_pi + k * np.pi


def second_form_to_fluid(form: SecondForm, reference_angle=0.0, tol=1e-8, delta=SONIC_GUARD) -> FluidState:
    """Invert ``fluid_to_second_form``.

    ``p`` is the negative root of ``p^2 - (L~+N~) p + (L~N~ - M~^2) = 0``.
    ``theta`` is determined modulo pi by ``tan 2 theta = (-2 M~ / rho) / (p (L~ - N~))``;
    the representative nearest ``reference_angle`` is returned.
    """
    Lt, Mt, Nt = form.Lt, form.Mt, form.Nt
    D = Lt * Nt - Mt * Mt
    bad = np.abs(D + 1.0) > tol
    if np.any(bad):
        raise ConstraintError(
            f"L~N~ - M~^2 = {np.ravel(D)[np.argmax(np.ravel(bad))]:.6g}, expected -1 (tol {tol:g})"
        )
    T = Lt + Nt
    disc = np.sqrt(T * T - 4.0 * D)
    # cancellation-free negative root (product of roots is D < 0)
    p = np.where(T >= 0.0, 2.0 * D / (T + disc), 0.5 * (T - disc))
    if np.any(~(p < 0)):
        raise ConstraintError("no negative pressure root")
    rho = -1.0 / p
    q = np.sqrt(1.0 + p * p)
    two_uv = -2.0 * Mt / rho
    u2_minus_v2 = p * (Lt - Nt)
    theta = 0.5 * np.arctan2(two_uv, u2_minus_v2)
    theta = _nearest_branch(theta, _as_float(reference_angle))
    return FluidState(q, theta, delta)


def riemann_invariants(q, theta):
    """``W+- = theta +- arccos(1/q)``."""
    q = _as_float(q)
    if np.any(~(q >= 1.0)):
        raise SonicError(f"Riemann invariants need q >= 1, got {np.min(q):.6g}")
    a = np.arccos(1.0 / q)
    return theta + a, theta - a


def invariants_to_state(Wp, Wm):
    """``q = 1/cos((W+ - W-)/2)``, ``theta = (W+ + W-)/2``."""
    Wp, Wm = _as_float(Wp), _as_float(Wm)
    half = 0.5 * (Wp - Wm)
    if np.any(half < 0):
        raise RegionError("W+ < W-: negative invariant gap")
    if np.any(~(half < 0.5 * np.pi)):
        raise SonicError("invariant gap reaches pi: speed is infinite")
    return 1.0 / np.cos(half), 0.5 * (Wp + Wm)


def wave_speeds(q, theta, delta=SONIC_GUARD):
    """Characteristic speeds ``(lambda+, lambda-, mu+, mu-)`` of the x- and y-coefficient matrices."""
    rho, _ = bernoulli(q, delta)
    s, c = np.sin(theta), np.cos(theta)
    # 1/sqrt(q^2-1) = rho
    return s + c * rho, s - c * rho, -c + s * rho, -c - s * rho


def coefficient_matrices(q, theta):
    """The 2x2 coefficient matrices ``(A, B)`` of ``A d_x (q, theta) + B d_y (q, theta) = rhs`` at a point."""
    s, c = np.sin(theta), np.cos(theta)
    k = 1.0 / (q * (q * q - 1.0))
    A = np.array([[s, q * c], [k * c, s]])
    B = np.array([[-c, q * s], [k * s, -c]])
    return A, B


@dataclass(frozen=True)
class SourceTerms:
    """Momentum sources ``R1, R2``, rotationality/continuity sources ``S1, S2`` and ``S1 +- (q^2-1) S2``."""

    R1: np.ndarray
    R2: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    closed_plus: np.ndarray
    closed_minus: np.ndarray

    def max_disagreement(self):
        """Largest relative gap between the composed and closed-form combinations."""
        scale = np.maximum(1.0, np.maximum(np.abs(self.plus), np.abs(self.minus)))
        return float(np.max(np.maximum(np.abs(self.plus - self.closed_plus),
                                       np.abs(self.minus - self.closed_minus)) / scale))


def momentum_sources(q, theta, tilde):
    """``(R1, R2)`` from the six tilde Christoffel symbols ``(111, 112, 122, 211, 212, 222)``."""
    t111, t112, t122, t211, t212, t222 = tilde
    rho, p = bernoulli(q)
    u, v = q * np.cos(theta), q * np.sin(theta)
    Lt, two_ruv, Nt = rho * v * v + p, 2.0 * rho * u * v, rho * u * u + p
    R1 = -Lt * t222 - two_ruv * t212 - Nt * t211
    R2 = -Lt * t122 - two_ruv * t112 - Nt * t111
    return R1, R2


def source_combinations(q, theta, tilde):
    """Closed-form ``(S1 + (q^2-1) S2, S1 - (q^2-1) S2)`` without forming ``R1, R2``."""
    t111, t112, t122, t211, t212, t222 = tilde
    rho, _ = bernoulli(q)
    s, c = np.sin(theta), np.cos(theta)
    iq2 = 1.0 / (q * q)
    A1 = t122 * c * c - 2.0 * t112 * s * c + t111 * s * s - (t122 + t111) * iq2
    A2 = t222 * c * c - 2.0 * t212 * s * c + t211 * s * s - (t222 + t211) * iq2
    base = q * (c * A2 - s * A1)
    pm = (q / rho) * (c * A1 + s * A2)
    return base + pm, base - pm


def source_terms(q, theta, tilde) -> SourceTerms:
    """All source fields, with the Riemann-form combinations evaluated two independent ways."""
    q, theta = _as_float(q), _as_float(theta)
    rho, _ = bernoulli(q)
    R1, R2 = momentum_sources(q, theta, tilde)
    u, v = q * np.cos(theta), q * np.sin(theta)
    q2 = q * q
    S1 = -(v * R2 - u * R1) / (rho * q2)
    S2 = (v * R1 + u * R2) / q2
    cp, cm = source_combinations(q, theta, tilde)
    return SourceTerms(R1, R2, S1, S2, S1 + (q2 - 1.0) * S2, S1 - (q2 - 1.0) * S2, cp, cm)


def theta_zero_curves(q, beta, tol=1e-12):
    """Angles at which the source combinations vanish for a metric obeying the beta-condition.

    ``theta_+ = arctan(sqrt(q^2-1)(beta^2-q^2) / (beta^2-(beta^2-1) q^2))`` zeroes
    ``S1 + (q^2-1) S2``; ``theta_- = -theta_+`` zeroes ``S1 - (q^2-1) S2``, which
    is the source of the ``W+`` equation. For ``beta^2 = 2`` the numerator and
    denominator share the factor ``2 - q^2`` and the cancelled form
    ``theta_+ = arccos(1/q)`` is returned.

    Raises
    ------
    RegionError
        Where the denominator vanishes (vertical asymptote of ``tan theta``).
    """
    q = _as_float(q)
    if np.any(~(q > 1.0)):
        raise SonicError("theta_zero_curves needs q > 1")
    b2 = beta * beta
    c = np.sqrt(q * q - 1.0)
    if abs(b2 - 2.0) < 1e-14:
        tp = np.arctan(c)
        return tp, -tp
    num = c * (b2 - q * q)
    den = b2 - (b2 - 1.0) * q * q
    if np.any(np.abs(den) < tol):
        raise RegionError(f"q = beta/sqrt(beta^2-1) = {beta / np.sqrt(b2 - 1.0):.6g} is a vertical asymptote")
    tp = np.arctan(num / den)
    return tp, -tp


# ---------------------------------------------------------------------------
# Diamond invariant region


def speed_pair(q, theta, orientation):
    """(time-like, transverse) speeds for each family: ``((tp, tm), (sp, sm))``."""
    lp, lm, mp, mm = wave_speeds(q, theta)
    if orientation == "x":
        return (lp, lm), (mp, mm)
    if orientation == "y":
        return (mp, mm), (lp, lm)
    raise RegionError(f"orientation must be 'x' or 'y', got {orientation!r}")


@dataclass(frozen=True)
class DiamondRegion:
    """Invariant region bounded by the W+- level sets through speeds ``alpha < beta``.

    The region is centred on the angle ``center``:
    ``W+ in [center + arccos(1/alpha), center + arccos(1/beta)]`` and
    ``W- in [center - arccos(1/beta), center - arccos(1/alpha)]``.
    Use :meth:`for_march` to get the centre matching a marching frame; with
    ``validate`` the time-like speeds are checked to have the parabolic
    signs on a 256 x 256 lattice covering the region.
    """

    alpha: float
    beta: float
    center: float = 0.0
    orientation: str = "x"
    direction: int = 1
    validate: bool = True
    lattice: int = 256

    def __post_init__(self):
        if not (1.0 < self.alpha < self.beta):
            raise RegionError(f"diamond needs 1 < alpha < beta, got alpha={self.alpha}, beta={self.beta}")
        if self.direction not in (1, -1):
            raise RegionError("direction must be +1 or -1")
        if self.validate:
            self.check_speeds()

    @classmethod
    def for_march(cls, alpha, beta, orientation="x", direction=1, **kw):
        key = (orientation, int(direction))
        if key not in _CENTERS:
            raise RegionError(f"unknown marching frame {key}")
        return cls(alpha, beta, _CENTERS[key], orientation, int(direction), **kw)

    @property
    def wp_bounds(self):
        return (self.center + np.arccos(1.0 / self.alpha), self.center + np.arccos(1.0 / self.beta))

    @property
    def wm_bounds(self):
        return (self.center - np.arccos(1.0 / self.beta), self.center - np.arccos(1.0 / self.alpha))

    @property
    def wp_extent(self):
        lo, hi = self.wp_bounds
        return hi - lo

    def corners(self):
        """(q, theta) at the four corners."""
        (a, b), (c, d) = self.wp_bounds, self.wm_bounds
        Wp = np.array([a, b, a, b])
        Wm = np.array([d, c, c, d])
        return invariants_to_state(Wp, Wm)

    def lattice_states(self, n=None):
        n = self.lattice if n is None else n
        wp = np.linspace(*self.wp_bounds, n)
        wm = np.linspace(*self.wm_bounds, n)
        Wp, Wm = np.meshgrid(wp, wm, indexing="ij")
        return invariants_to_state(Wp, Wm)

    def check_speeds(self):
        q, theta = self.lattice_states()
        (tp, tm), _ = speed_pair(q, theta, self.orientation)
        sig = self.direction
        ok = (sig * tp > 0) & (sig * tm < 0)
        if not np.all(ok):
            i = np.argmax(~ok.ravel())
            raise RegionError(
                f"time-like speeds lose the parabolic sign inside the diamond at q={q.ravel()[i]:.6g}, "
                f"theta={theta.ravel()[i]:.6g}; move alpha closer to beta"
            )
        return True

    def contains(self, q, theta, pad=0.0):
        Wp, Wm = riemann_invariants(q, theta)
        return self.contains_invariants(Wp, Wm, pad)

    def contains_invariants(self, Wp, Wm, pad=0.0):
        (a, b), (c, d) = self.wp_bounds, self.wm_bounds
        return (Wp >= a - pad) & (Wp <= b + pad) & (Wm >= c - pad) & (Wm <= d + pad)

    def breach(self, Wp, Wm):
        """Largest distance by which any point lies outside the region (0 if inside)."""
        (a, b), (c, d) = self.wp_bounds, self.wm_bounds
        out = np.maximum.reduce([a - Wp, Wp - b, c - Wm, Wm - d, np.zeros_like(Wp)])
        return float(np.max(out))


def diamond_contains(region: DiamondRegion, q, theta):
    """True where ``(q, theta)`` lies in the closed diamond."""
    return region.contains(q, theta)
