"""Explicit marching of the viscous Riemann-invariant system on a periodic strip.

The time-like coordinate ``t`` is either x or y; the space-like coordinate
``s`` is periodic with period ``P``. A march starts at ``t0`` and advances
``t = t0 + sigma * tau`` for ``tau`` in ``[0, length]``.
"""

from dataclasses import dataclass, field, asdict
from typing import List, Optional, Sequence

import numpy as np

from . import kernels
from ._accel import active_backend
from .errors import ConfigError, MarchError, RegionError, RegionViolation, SweepError
from .fluid import (
    DiamondRegion,
    FluidState,
    RiemannState,
    SecondForm,
    fluid_to_second_form,
    invariants_to_state,
    momentum_sources,
    riemann_invariants,
)
from .metric import Metric, christoffel


@dataclass
class SolverConfig:
    """Parameters of one viscous march."""

    orientation: str = "x"
    direction: int = 1
    t0: float = 0.0
    length: float = 1.0
    period: float = 2.0 * np.pi
    n_space: int = 256
    s0: Optional[float] = None
    n_out: int = 16
    eps: float = 0.05
    eps_sweep: Sequence[float] = ()
    alpha: float = 1.3
    beta: float = float(np.sqrt(2.0))
    safety: float = 0.8
    region_pad: float = 1e-6
    min_step: float = 1e-12
    max_steps: int = 5_000_000
    periodic_tol: float = 1e-8
    on_breach: str = "raise"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.orientation not in ("x", "y"):
            raise ConfigError(f"orientation must be 'x' or 'y', got {self.orientation!r}")
        if self.direction not in (1, -1):
            raise ConfigError("direction must be +1 or -1")
        if not self.period > 0:
            raise ConfigError("period must be positive")
        if int(self.n_space) < 16:
            raise ConfigError("n_space must be at least 16")
        if not self.eps > 0:
            raise ConfigError("viscous march requires eps > 0")
        if not (0.0 < self.safety <= 1.0):
            raise ConfigError("safety factor must lie in (0, 1]")
        if not self.length > 0:
            raise ConfigError("march length must be positive")
        if int(self.n_out) < 1:
            raise ConfigError("n_out must be at least 1")
        if not (1.0 < self.alpha < self.beta):
            raise ConfigError(f"need 1 < alpha < beta, got alpha={self.alpha}, beta={self.beta}")
        if self.on_breach not in ("raise", "record"):
            raise ConfigError("on_breach must be 'raise' or 'record'")
        sweep = list(self.eps_sweep)
        if any(not e > 0 for e in sweep):
            raise ConfigError("every sweep viscosity must be positive")
        if any(b >= a for a, b in zip(sweep, sweep[1:])):
            raise ConfigError("eps_sweep must be strictly decreasing")

    @property
    def sigma(self):
        return int(self.direction)

    @property
    def ds(self):
        return self.period / self.n_space

    @property
    def s_grid(self):
        s0 = -0.5 * self.period if self.s0 is None else self.s0
        return s0 + self.ds * np.arange(self.n_space)

    @property
    def t_end(self):
        return self.t0 + self.sigma * self.length

    def region(self, validate=True):
        return DiamondRegion.for_march(self.alpha, self.beta, self.orientation, self.direction, validate=validate)

    def with_eps(self, eps):
        d = asdict(self)
        d["eps"] = float(eps)
        return SolverConfig(**d)

    def to_dict(self):
        d = asdict(self)
        d["eps_sweep"] = [float(e) for e in self.eps_sweep]
        return d


def coords(orientation, t, s):
    """Map (time-like, space-like) to (x, y)."""
    return (t, s) if orientation == "x" else (s, t)


class RowConnection:
    """Tilde Christoffel symbols along a row, cached when they do not depend on ``t``."""

    def __init__(self, metric: Metric, config: SolverConfig):
        self.metric = metric
        self.orientation = config.orientation
        self.s = config.s_grid
        self._static = None
        if metric.conformal and config.orientation == "y":
            # E = E(x) and x is space-like: the connection is constant in time
            self._static = self._evaluate(config.t0)
        self._check_periodic(config)

    def _evaluate(self, t):
        x, y = coords(self.orientation, t, self.s)
        v = self.metric.evaluate(x, y)
        return tuple(np.ascontiguousarray(np.broadcast_to(a, self.s.shape), dtype=float)
                     for a in christoffel(v).tilde())

    def _check_periodic(self, config):
        P = config.period
        ends = np.array([self.s[0], self.s[0] + P])
        x, y = coords(self.orientation, config.t0, ends)
        vals = christoffel(self.metric.evaluate(x, y)).tilde()
        gap = max(abs(float(a[1] - a[0])) for a in vals)
        if gap > config.periodic_tol:
            raise MarchError(
                f"metric connection is not {P:.6g}-periodic in the space-like coordinate "
                f"(mismatch {gap:.3e}); periodicize the metric first"
            )

    def __call__(self, t):
        if self._static is not None:
            return self._static
        return self._evaluate(t)


def row_integrals(Wp, Wm, tilde, ds, orientation):
    """Period integrals on one row: gradient energies, continuity/momentum sources and fluxes."""
    q, theta = invariants_to_state(Wp, Wm)
    rho = 1.0 / np.sqrt(q * q - 1.0)
    inv2 = 0.5 / ds
    qs = (np.roll(q, -1) - np.roll(q, 1)) * inv2
    ths = (np.roll(theta, -1) - np.roll(theta, 1)) * inv2
    R1, R2 = momentum_sources(q, theta, tilde)
    u, v = q * np.cos(theta), q * np.sin(theta)
    S2 = (v * R1 + u * R2) / (q * q)
    Lt = rho * v * v - 1.0 / rho
    Mt = -rho * u * v
    Nt = rho * u * u - 1.0 / rho
    if orientation == "x":
        mass, mom1, mom2 = rho * u, -Mt, Nt
    else:
        mass, mom1, mom2 = rho * v, Lt, -Mt
    return np.array([
        np.sum(rho**3 * qs**2 / q**2) * ds,
        np.sum(rho * ths**2) * ds,
        np.sum(qs**2) * ds,
        np.sum(ths**2) * ds,
        np.sum(S2) * ds,
        np.sum(np.abs(S2)) * ds,
        np.sum(R1) * ds,
        np.sum(R2) * ds,
        np.sum(mass) * ds,
        np.sum(mom1) * ds,
        np.sum(mom2) * ds,
    ])


# indices into the row_integrals vector
_EQ, _ETH, _QS2, _THS2, _S2, _ABS_S2, _R1, _R2, _MASS, _MOM1, _MOM2 = range(11)


@dataclass
class Trajectory:
    """Snapshots of a march plus accumulated space-time integrals."""

    config: SolverConfig
    t: np.ndarray
    s: np.ndarray
    Wp: np.ndarray
    Wm: np.ndarray
    integrals: np.ndarray
    row_start: np.ndarray
    row_end: np.ndarray
    steps: int = 0
    retries: int = 0
    breach_events: int = 0
    first_breach_t: float = np.nan
    min_dtau: float = np.inf
    max_breach: float = 0.0
    backend: str = "numpy"
    complete: bool = True
    message: str = ""

    @property
    def eps(self):
        return self.config.eps

    def fluid(self):
        q, theta = invariants_to_state(self.Wp, self.Wm)
        return FluidState(q, theta)

    def riemann(self, k=-1):
        return RiemannState(self.Wp[k], self.Wm[k])

    def xy(self):
        T, S = np.meshgrid(self.t, self.s, indexing="ij")
        return coords(self.config.orientation, T, S)

    def second_form(self, metric: Metric) -> SecondForm:
        x, y = self.xy()
        v = metric.evaluate(x, y)
        return fluid_to_second_form(self.fluid(), v.gamma, v.sqrt_det)

    def state(self, k=-1) -> "MarchState":
        """Snapshot ``k`` as a :class:`MarchState`."""
        return MarchState(float(self.t[k]), self.riemann(k), self.integrals.copy(), self.breach_events)

    def max_drift(self):
        """Largest deviation of (q, theta) from the initial row over all snapshots."""
        q, th = invariants_to_state(self.Wp, self.Wm)
        return float(max(np.max(np.abs(q - q[0])), np.max(np.abs(th - th[0]))))


@dataclass
class MarchState:
    """One row of a march: time-like coordinate, invariants and accumulated diagnostics."""

    t: float
    row: RiemannState
    integrals: np.ndarray
    breach_events: int = 0


def viscous_rhs(row: RiemannState, tilde, eps, ds, orientation="x", direction=1, backend=None):
    """``(d_t W+, d_t W-)`` on a periodic row for given tilde symbols (six arrays or scalars).

    ``direction`` only selects the upwind side of the transverse term.
    """
    orient = kernels.ORIENT_X if orientation == "x" else kernels.ORIENT_Y
    fp, fm, _, _ = kernels.row_rhs(np.asarray(row.Wp, float), np.asarray(row.Wm, float), tilde, eps, ds,
                                   orient, direction, backend)
    return direction * fp, direction * fm


def _heun(Wp, Wm, t, dtau, conn, cfg, backend):
    sig = cfg.sigma
    orient = kernels.ORIENT_X if cfg.orientation == "x" else kernels.ORIENT_Y
    k1p, k1m, _, _ = kernels.row_rhs(Wp, Wm, conn(t), cfg.eps, cfg.ds, orient, sig, backend)
    sp, sm = Wp + dtau * k1p, Wm + dtau * k1m
    k2p, k2m, _, _ = kernels.row_rhs(sp, sm, conn(t + sig * dtau), cfg.eps, cfg.ds, orient, sig, backend)
    return Wp + 0.5 * dtau * (k1p + k2p), Wm + 0.5 * dtau * (k1m + k2m)


def _stable_step(Wp, Wm, t, conn, cfg, backend):
    orient = kernels.ORIENT_X if cfg.orientation == "x" else kernels.ORIENT_Y
    _, _, nu, adv = kernels.row_rhs(Wp, Wm, conn(t), cfg.eps, cfg.ds, orient, cfg.sigma, backend)
    ds = cfg.ds
    return cfg.safety / (2.0 * nu / (ds * ds) + adv / ds)


def march(config: SolverConfig, metric: Metric, initial: RiemannState, backend=None,
          region: Optional[DiamondRegion] = None) -> Trajectory:
    """March the viscous system from the initial row to ``t0 + sigma * length``.

    Steps are Heun (explicit trapezoid) with ``dtau`` re-evaluated every step
    from the current parabolic and advective limits. A step whose result
    leaves the diamond by more than ``region_pad`` is retried once at half
    size; a second breach raises :class:`RegionViolation` carrying the
    partial trajectory; with ``on_breach="record"`` the march continues and
    the events are counted on the trajectory instead.
    """
    cfg = config
    backend = active_backend() if backend is None else backend
    region = cfg.region() if region is None else region
    Wp = np.array(initial.Wp, dtype=float)
    Wm = np.array(initial.Wm, dtype=float)
    if Wp.shape != (cfg.n_space,) or Wm.shape != (cfg.n_space,):
        raise ConfigError(f"initial row must have {cfg.n_space} points")
    if not np.all(region.contains_invariants(Wp, Wm, cfg.region_pad)):
        raise RegionError(f"initial data leaves the diamond by {region.breach(Wp, Wm):.3e}")
    conn = RowConnection(metric, cfg)

    n_out = int(cfg.n_out)
    tau_out = cfg.length * np.arange(n_out + 1) / n_out
    snaps_p = np.empty((n_out + 1, cfg.n_space))
    snaps_m = np.empty_like(snaps_p)
    snaps_p[0], snaps_m[0] = Wp, Wm
    t_out = cfg.t0 + cfg.sigma * tau_out

    tau, k = 0.0, 1
    ints = np.zeros(11)
    g_prev = row_integrals(Wp, Wm, conn(cfg.t0), cfg.ds, cfg.orientation)
    row_start = g_prev.copy()
    traj = Trajectory(cfg, t_out, cfg.s_grid, snaps_p, snaps_m, ints, row_start, row_start.copy(),
                      backend=backend)

    def _fail(exc_cls, msg, **kw):
        traj.complete = False
        traj.message = msg
        traj.t, traj.Wp, traj.Wm = t_out[:k], snaps_p[:k], snaps_m[:k]
        raise exc_cls(msg, **kw) if kw else exc_cls(msg)

    while k <= n_out:
        if traj.steps >= cfg.max_steps:
            _fail(MarchError, f"step budget {cfg.max_steps} exhausted at tau={tau:.6g}")
        t = cfg.t0 + cfg.sigma * tau
        dtau = _stable_step(Wp, Wm, t, conn, cfg, backend)
        if not np.isfinite(dtau):
            _fail(MarchError, f"non-finite step size at tau={tau:.6g}")
        remaining = tau_out[k] - tau
        dtau = min(dtau, remaining)
        if dtau < cfg.min_step * cfg.length:
            _fail(MarchError, f"step size underflow ({dtau:.3e}) at tau={tau:.6g}")

        for attempt in range(2):
            np_, nm_ = _heun(Wp, Wm, t, dtau, conn, cfg, backend)
            if not (np.all(np.isfinite(np_)) and np.all(np.isfinite(nm_))):
                _fail(MarchError, f"NaN/overflow at tau={tau:.6g}")
            breach = region.breach(np_, nm_)
            if breach <= cfg.region_pad:
                break
            if attempt == 0:
                traj.retries += 1
                dtau *= 0.5
        else:
            idx = int(np.argmax(np.maximum(np.abs(np_ - Wp), np.abs(nm_ - Wm))))
            traj.max_breach = max(traj.max_breach, breach)
            msg = f"diamond breached by {breach:.3e} at t={cfg.t0 + cfg.sigma * (tau + dtau):.6g}"
            traj.breach_events += 1
            if np.isnan(traj.first_breach_t):
                traj.first_breach_t = cfg.t0 + cfg.sigma * (tau + dtau)
            if cfg.on_breach == "raise":
                traj.complete = False
                traj.message = msg
                traj.t, traj.Wp, traj.Wm = t_out[:k], snaps_p[:k], snaps_m[:k]
                raise RegionViolation(msg, t=cfg.t0 + cfg.sigma * (tau + dtau), index=idx, trajectory=traj)
        traj.max_breach = max(traj.max_breach, breach)
        Wp, Wm = np_, nm_
        # snap onto the output time once within roundoff of it
        land = tau_out[k] - (tau + dtau) <= 1e-9 * cfg.length
        tau = tau_out[k] if land else tau + dtau
        traj.steps += 1
        traj.min_dtau = min(traj.min_dtau, dtau)
        g = row_integrals(Wp, Wm, conn(cfg.t0 + cfg.sigma * tau), cfg.ds, cfg.orientation)
        ints += 0.5 * dtau * (g_prev + g)
        g_prev = g
        if land:
            snaps_p[k], snaps_m[k] = Wp, Wm
            k += 1
    traj.row_end = g_prev
    return traj


# ---------------------------------------------------------------------------
# Energy diagnostics


@dataclass
class EnergyRecord:
    """Dissipation integrals of one march and the bound they must respect."""

    eps: float
    energy: float
    energy_q: float
    energy_theta: float
    sqrt_eps_qs: float
    sqrt_eps_thetas: float
    source_integral: float
    source_abs_integral: float
    flux_change: float
    bound: float
    balance_defect: float
    momentum_defects: tuple
    sup_B: float

    def as_dict(self):
        d = asdict(self)
        d["momentum_defects"] = list(self.momentum_defects)
        return d


def energy_diagnostics(traj: Trajectory, metric: Optional[Metric] = None) -> EnergyRecord:
    """Viscous dissipation ``eps * int int (rho^3 q_s^2 / q^2 + rho theta_s^2)`` and its balance.

    Integrating the viscous continuity equation over one period gives
    ``eps * E = int int B - [flux]``, with ``B = S2`` and flux the period
    integral of ``rho u`` (x time-like) or ``rho v`` (y time-like) taken
    between the low and high ends of the strip. ``bound`` is
    ``int int |B| + |[flux]|``. ``balance_defect`` is the discrete mismatch
    of that identity and ``momentum_defects`` the analogous mismatches of the
    two momentum balances; all three vanish as the grid is refined.
    """
    eps = traj.eps
    I = traj.integrals
    sig = traj.config.sigma
    # d/dtau = sigma d/dt: fluxes between ordered ends of the strip
    dmass = sig * (traj.row_end[_MASS] - traj.row_start[_MASS])
    dmom1 = sig * (traj.row_end[_MOM1] - traj.row_start[_MOM1])
    dmom2 = sig * (traj.row_end[_MOM2] - traj.row_start[_MOM2])
    eq, eth = eps * I[_EQ], eps * I[_ETH]
    energy = eq + eth
    balance = energy - (I[_S2] - dmass)
    sup_B = np.nan
    if metric is not None:
        sup_B = float(np.max(np.abs(source_field(traj, metric))))
    return EnergyRecord(
        eps=eps,
        energy=float(energy),
        energy_q=float(eq),
        energy_theta=float(eth),
        sqrt_eps_qs=float(np.sqrt(eps * I[_QS2])),
        sqrt_eps_thetas=float(np.sqrt(eps * I[_THS2])),
        source_integral=float(I[_S2]),
        source_abs_integral=float(I[_ABS_S2]),
        flux_change=float(dmass),
        bound=float(I[_ABS_S2] + abs(dmass)),
        balance_defect=float(balance),
        momentum_defects=(float(dmom1 - I[_R1]), float(dmom2 - I[_R2])),
        sup_B=sup_B,
    )


def source_field(traj: Trajectory, metric: Metric):
    """``B = S2`` on the snapshot grid."""
    x, y = traj.xy()
    tilde = christoffel(metric.evaluate(x, y)).tilde()
    q, theta = invariants_to_state(traj.Wp, traj.Wm)
    R1, R2 = momentum_sources(q, theta, tilde)
    return (q * np.sin(theta) * R1 + q * np.cos(theta) * R2) / (q * q)


# ---------------------------------------------------------------------------
# Initial data


def bump_kernel(n, period, width):
    """Normalised C-infinity bump of total support ``width`` centred at index 0 of a periodic grid."""
    ds = period / n
    d = ds * np.arange(n)
    d = np.minimum(d, period - d)
    r = 2.0 * d / width
    ker = np.zeros(n)
    inside = r < 1.0
    ker[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    if ker.sum() == 0.0:
        raise ConfigError("mollifier width below grid spacing")
    return ker / ker.sum()


def periodic_convolve(f, kernel):
    return np.real(np.fft.ifft(np.fft.fft(f) * np.fft.fft(kernel)))


def mollify_initial_data(s, q0, theta0, period, width, n, region: Optional[DiamondRegion] = None,
                         s0=None, pad=1e-12) -> RiemannState:
    """Periodic smooth Riemann data from samples of ``(q0, theta0)``.

    Samples are mapped to ``W+-``, truncated to one period
    ``[s0, s0 + P)`` (default ``s0 = -P/2``), extended periodically onto an
    ``n``-point grid by linear interpolation and averaged with a symmetric
    bump of total width ``width``. Averaging keeps every value between the
    sample extremes, so data inside the diamond stays inside.
    """
    s = np.asarray(s, dtype=float)
    Wp0, Wm0 = riemann_invariants(np.asarray(q0, dtype=float), np.asarray(theta0, dtype=float))
    if region is not None and not np.all(region.contains_invariants(Wp0, Wm0, pad)):
        raise RegionError(f"initial samples leave the diamond by {region.breach(Wp0, Wm0):.3e}")
    s0 = -0.5 * period if s0 is None else s0
    keep = (s >= s0) & (s < s0 + period)
    if keep.sum() < 2:
        raise ConfigError("need at least two samples inside one period")
    grid = s0 + period * np.arange(n) / n
    order = np.argsort(s[keep])
    xs = s[keep][order]
    Wp = np.interp(grid, xs, Wp0[keep][order], period=period)
    Wm = np.interp(grid, xs, Wm0[keep][order], period=period)
    ker = bump_kernel(n, period, width)
    Wp, Wm = periodic_convolve(Wp, ker), periodic_convolve(Wm, ker)
    if region is not None and not np.all(region.contains_invariants(Wp, Wm, pad)):
        raise RegionError("mollified data left the diamond")
    return RiemannState(Wp, Wm)


def constant_row(q, theta, n):
    Wp, Wm = riemann_invariants(q, theta)
    return RiemannState(np.full(n, float(Wp)), np.full(n, float(Wm)))


def random_mode_perturbation(region: DiamondRegion, n, rng, modes=3, amplitude=0.25, kmax=None):
    """Smooth periodic data: the diamond centre plus ``modes`` random Fourier modes in each of W+-.

    Wavenumbers are drawn without replacement from ``[1, kmax]``
    (default 16, independent of the grid), phases uniformly; each invariant's perturbation
    is scaled so its peak equals ``amplitude`` times the W+ extent, then
    the row is checked against the diamond.
    """
    kmax = max(modes, 16) if kmax is None else kmax
    s = 2.0 * np.pi * np.arange(n) / n
    a, b = region.wp_bounds
    c, d = region.wm_bounds
    out = []
    for lo, hi in ((a, b), (c, d)):
        ks = rng.choice(np.arange(1, kmax + 1), size=modes, replace=False)
        ph = rng.uniform(0.0, 2.0 * np.pi, size=modes)
        f = np.sum(np.sin(np.outer(ks, s) + ph[:, None]), axis=0)
        f *= amplitude * region.wp_extent / np.max(np.abs(f))
        out.append(0.5 * (lo + hi) + f)
    Wp, Wm = out
    if not np.all(region.contains_invariants(Wp, Wm)):
        raise RegionError("perturbation amplitude does not fit inside the diamond")
    return RiemannState(Wp, Wm)


# ---------------------------------------------------------------------------
# Sweeps


@dataclass
class SweepMember:
    eps: float
    trajectory: Trajectory
    energy: EnergyRecord
    second_form: SecondForm


@dataclass
class SweepResult:
    members: List[SweepMember] = field(default_factory=list)
    weak_distances: List[float] = field(default_factory=list)
    window: float = 0.0

    @property
    def eps(self):
        return [m.eps for m in self.members]

    def trend_nonincreasing(self, slack=0.1):
        d = self.weak_distances
        return all(b <= (1.0 + slack) * a for a, b in zip(d, d[1:]))


def epsilon_sweep(config: SolverConfig, metric: Metric, initial: RiemannState, eps_list=None,
                  window=None, backend=None) -> SweepResult:
    """March once per viscosity and compare successive solutions in a weak norm.

    The weak distance between consecutive members is the max difference of
    their moving-averaged (window ``P/16`` by default) ``(L~, M~, N~)`` on
    the common snapshot grid. A failing member raises :class:`SweepError`
    whose ``partial`` holds the completed members.
    """
    from .verify import moving_average

    eps_list = list(config.eps_sweep) if eps_list is None else list(eps_list)
    if not eps_list:
        eps_list = [config.eps]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps list must be strictly decreasing")
    window = config.period / 16.0 if window is None else window
    result = SweepResult(window=window)
    prev = None
    for eps in eps_list:
        cfg = config.with_eps(eps)
        try:
            traj = march(cfg, metric, initial, backend=backend)
        except MarchError as exc:
            raise SweepError(f"sweep member eps={eps:g} failed: {exc}", partial=result.members) from exc
        form = traj.second_form(metric)
        member = SweepMember(eps, traj, energy_diagnostics(traj, metric), form)
        result.members.append(member)
        cur = [moving_average(f, window, cfg.ds, traj.t) for f in (form.Lt, form.Mt, form.Nt)]
        if prev is not None:
            result.weak_distances.append(float(max(np.max(np.abs(a - b)) for a, b in zip(cur, prev))))
        prev = cur
    return result
