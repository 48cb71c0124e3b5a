"""Numerical surrogates for the compactness framework: bounds, weak residuals, averaged constraint."""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import GCError
from .fluid import SecondForm
from .metric import Metric, christoffel


class VerifyError(GCError):
    """Invalid input to a verification routine."""


# ---------------------------------------------------------------------------
# Test functions


def bump(r):
    """Quintic-in-``r^2`` bump ``(1 - r^2)^5`` on ``|r| < 1`` (C^4 at the edge, smooth inside).

    Smoothness matters: trapezoid sums of ``psi'`` converge at the order of
    the first derivative jump, so a kink at ``r = 0`` would set a quadrature
    floor well above the residuals being measured.
    """
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) < 1.0, (1.0 - r * r) ** 5, 0.0)


def bump_prime(r):
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) < 1.0, -10.0 * r * (1.0 - r * r) ** 4, 0.0)


@dataclass(frozen=True)
class TestFamily:
    """Tensor-product bumps ``psi((x-xc)/hx) psi((y-yc)/hy)``."""

    __test__ = False  # not a pytest class

    centers: np.ndarray  # (k, 2) in (x, y)
    half_widths: np.ndarray  # (k, 2)
    description: str = ""

    def __len__(self):
        return len(self.centers)

    def evaluate(self, i, X, Y):
        (xc, yc), (hx, hy) = self.centers[i], self.half_widths[i]
        rx, ry = (X - xc) / hx, (Y - yc) / hy
        px, py = bump(rx), bump(ry)
        return px * py, bump_prime(rx) / hx * py, px * bump_prime(ry) / hy


def lattice_family(x_range, y_range, n=5, scales=(1.0,)):
    """``n x n`` centres evenly inside the rectangle; half-widths fit each support inside it.

    Each entry of ``scales`` gives one width level (1.0 = widest), so two
    scales give ``2 n^2`` functions.
    """
    (x0, x1), (y0, y1) = sorted(x_range), sorted(y_range)
    hx, hy = (x1 - x0) / (n + 1), (y1 - y0) / (n + 1)
    xs = x0 + hx * np.arange(1, n + 1)
    ys = y0 + hy * np.arange(1, n + 1)
    centers, widths = [], []
    for sc in scales:
        for xc in xs:
            for yc in ys:
                centers.append((xc, yc))
                widths.append((sc * hx, sc * hy))
    desc = f"quintic-bump {n}x{n} lattice, scales {tuple(scales)}, base half-widths ({hx:.6g}, {hy:.6g})"
    return TestFamily(np.array(centers), np.array(widths), desc)


def trapezoid_weights(z):
    z = np.asarray(z, dtype=float)
    if z.size < 2:
        raise VerifyError("need at least two grid points per axis")
    d = np.abs(np.diff(z))
    w = np.zeros(z.size)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


# ---------------------------------------------------------------------------
# Weak form


@dataclass
class WeakFormReport:
    """Per-test-function residuals of the two balance laws."""

    residual1: np.ndarray
    residual2: np.ndarray
    terms1: np.ndarray  # (k, 3): int -M~ phi_x, int L~ phi_y, int C1 phi
    terms2: np.ndarray  # (k, 3): int -N~ phi_x, int M~ phi_y, int C2 phi
    family: str = ""

    @property
    def max_residual(self):
        return float(max(np.max(np.abs(self.residual1)), np.max(np.abs(self.residual2))))

    @property
    def l2_residual(self):
        r = np.concatenate([self.residual1, self.residual2])
        return float(np.sqrt(np.mean(r**2)))

    @property
    def max_term(self):
        return float(max(np.max(np.abs(self.terms1)), np.max(np.abs(self.terms2))))

    @property
    def relative(self):
        m = self.max_term
        return self.max_residual / m if m > 0 else (0.0 if self.max_residual == 0 else np.inf)

    def summary(self):
        return {
            "n_test_functions": int(len(self.residual1)),
            "max_residual": self.max_residual,
            "l2_residual": self.l2_residual,
            "max_term": self.max_term,
            "relative": float(self.relative),
            "family": self.family,
        }


def _grid_xy(t, s, orientation):
    T, S = np.meshgrid(t, s, indexing="ij")
    return (T, S) if orientation == "x" else (S, T)


def weak_form_residual(form: SecondForm, t, s, orientation, metric: Metric = None, family: TestFamily = None,
                       tilde=None) -> WeakFormReport:
    """Weak residuals of the scaled Gauss-Codazzi balance laws on a (t, s) grid.

    For each test function ``phi``:

        r1 = int int (-M~ phi_x + L~ phi_y + C1 phi),  C1 = -L~ G~2_22 + 2 M~ G~2_12 - N~ G~2_11
        r2 = int int (-N~ phi_x + M~ phi_y + C2 phi),  C2 =  L~ G~1_22 - 2 M~ G~1_12 + N~ G~1_11

    which vanish for weak solutions of ``d_x M~ - d_y L~ = -C1``,
    ``d_x N~ - d_y M~ = -C2``. Quadrature is the tensor trapezoid rule.
    ``tilde`` may be passed instead of ``metric`` as the six tilde symbols on
    the grid.
    """
    t, s = np.asarray(t, dtype=float), np.asarray(s, dtype=float)
    Lt, Mt, Nt = form.Lt, form.Mt, form.Nt
    if Lt.shape != (t.size, s.size):
        raise VerifyError(f"field shape {Lt.shape} does not match grid ({t.size}, {s.size})")
    if not (np.all(np.isfinite(Lt)) and np.all(np.isfinite(Mt)) and np.all(np.isfinite(Nt))):
        raise VerifyError("field has undefined values")
    X, Y = _grid_xy(t, s, orientation)
    if tilde is None:
        if metric is None:
            raise VerifyError("need a metric or precomputed tilde symbols")
        tilde = christoffel(metric.evaluate(X, Y)).tilde()
    t111, t112, t122, t211, t212, t222 = tilde
    C1 = -Lt * t222 + 2.0 * Mt * t212 - Nt * t211
    C2 = Lt * t122 - 2.0 * Mt * t112 + Nt * t111
    if family is None:
        x_rng = (X.min(), X.max())
        y_rng = (Y.min(), Y.max())
        family = lattice_family(x_rng, y_rng)
    W = np.outer(trapezoid_weights(t), trapezoid_weights(s))

    xlo, xhi, ylo, yhi = X.min(), X.max(), Y.min(), Y.max()
    k = len(family)
    terms1 = np.zeros((k, 3))
    terms2 = np.zeros((k, 3))
    for i in range(k):
        (xc, yc), (hx, hy) = family.centers[i], family.half_widths[i]
        if xc - hx < xlo - 1e-12 or xc + hx > xhi + 1e-12 or yc - hy < ylo - 1e-12 or yc + hy > yhi + 1e-12:
            raise VerifyError(f"test function {i} support leaves the grid")
        phi, px, py = family.evaluate(i, X, Y)
        terms1[i] = (np.sum(W * -Mt * px), np.sum(W * Lt * py), np.sum(W * C1 * phi))
        terms2[i] = (np.sum(W * -Nt * px), np.sum(W * Mt * py), np.sum(W * C2 * phi))
    return WeakFormReport(terms1.sum(axis=1), terms2.sum(axis=1), terms1, terms2, family.description)


# ---------------------------------------------------------------------------
# Constraint and weak-star averaging


def constraint_residual(form: SecondForm, kappa=None):
    """``(max, rms)`` of ``|L~ N~ - M~^2 + 1|``; with ``kappa`` also of ``|L N - M^2 - kappa|``."""
    r = np.abs(form.scaled_residual())
    out = (float(np.max(r)), float(np.sqrt(np.mean(r**2))))
    if kappa is None:
        return out
    g = np.abs(form.gauss_residual(kappa))
    return out + (float(np.max(g)), float(np.sqrt(np.mean(g**2))))


def window_cells(window, spacing):
    """Odd number of cells covering ``window`` (at least 1)."""
    if spacing <= 0:
        return 1
    n = int(round(window / spacing))
    return max(1, n + (1 - n % 2))


def moving_average(f, window, ds, t=None):
    """Top-hat average of a (t, s) field: periodic in s, edge-clamped in t.

    With ``t`` given the window also spans time; otherwise only s is averaged.
    """
    f = np.asarray(f, dtype=float)
    ws = window_cells(window, ds)
    if ws > f.shape[-1]:
        raise VerifyError("averaging window wider than the grid")
    if f.ndim == 1:
        return uniform_filter(f, size=ws, mode="wrap")
    wt = 1
    if t is not None and len(t) > 1:
        wt = window_cells(window, abs(t[1] - t[0]))
        if wt > f.shape[0]:
            raise VerifyError("averaging window longer than the time grid")
    return uniform_filter(f, size=(wt, ws), mode=("nearest", "wrap"))


@dataclass
class WeakStarResult:
    averaged: List[SecondForm]
    before: List[float]
    after: List[float]


def weak_star_average(forms: Sequence[SecondForm], window, ds, t=None) -> WeakStarResult:
    """Average each field over ``window`` and report the scaled constraint before and after."""
    if isinstance(forms, SecondForm):
        forms = [forms]
    out, before, after = [], [], []
    for f in forms:
        avg = SecondForm(*(moving_average(a, window, ds, t) for a in (f.Lt, f.Mt, f.Nt)),
                         gamma=f.gamma, sqrt_det=f.sqrt_det)
        out.append(avg)
        before.append(constraint_residual(f)[0])
        after.append(constraint_residual(avg)[0])
    return WeakStarResult(out, before, after)


# ---------------------------------------------------------------------------
# Compactness report


@dataclass
class CompactnessReport:
    eps: List[float]
    sup_norms: List[tuple]
    energies: List[float]
    averaged_constraint: List[float]
    provenance: List[dict] = field(default_factory=list)
    energy_slope: float = 0.0
    sup_variation: float = 0.0
    energy_ratio: float = 1.0

    def rows(self):
        for i, e in enumerate(self.eps):
            L, M, N = self.sup_norms[i]
            yield {"eps": e, "sup_L": L, "sup_M": M, "sup_N": N, "energy": self.energies[i],
                   "avg_constraint": self.averaged_constraint[i], **self.provenance[i]}


def compactness_report(sweep, window=None) -> CompactnessReport:
    """Tabulate sup-norms, dissipation energies and the averaged constraint across a sweep."""
    members = sweep.members
    if len(members) < 2:
        raise VerifyError("compactness report needs at least two sweep members")
    eps, sups, energies, avg_c, prov = [], [], [], [], []
    for m in members:
        f = m.second_form
        cfg = m.trajectory.config
        w = cfg.period / 16.0 if window is None else window
        sups.append(tuple(float(np.max(np.abs(a))) for a in (f.L, f.M, f.N)))
        energies.append(m.energy.energy)
        avg = weak_star_average(f, w, cfg.ds, m.trajectory.t)
        avg_c.append(avg.after[0])
        eps.append(m.eps)
        prov.append({"n_space": cfg.n_space, "n_out": cfg.n_out, "steps": m.trajectory.steps})
    E = np.array(energies)
    slope = float(np.polyfit(np.array(eps), E, 1)[0]) if np.all(np.isfinite(E)) else np.nan
    S = np.array([max(x) for x in sups])
    pos = E[E > 0]
    ratio = float(pos.max() / pos.min()) if pos.size == len(E) else (1.0 if np.all(E == 0) else np.inf)
    return CompactnessReport(eps, sups, energies, avg_c, prov, slope,
                             float((S.max() - S.min()) / S.min()), ratio)
