"""Surface recovery from (I, II): Gauss-Weingarten frame integration, positions, checks and OBJ export."""

import os
import tempfile
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ReconstructionError
from .fluid import SecondForm
from .metric import Metric, MetricValues, christoffel


@dataclass
class SurfacePatch:
    """Positions and frames on a (t, s) grid; ``rx``/``ry`` are the x/y tangents whatever the orientation."""

    t: np.ndarray
    s: np.ndarray
    orientation: str
    rx: np.ndarray  # (nt, ns, 3)
    ry: np.ndarray
    n: np.ndarray
    r: Optional[np.ndarray] = None
    normal_drift: float = 0.0
    defect: Optional[np.ndarray] = None  # on the lattice t[::stride], s[::stride]
    defect_stride: int = 1

    @property
    def shape(self):
        return self.rx.shape[:2]

    def xy(self):
        T, S = np.meshgrid(self.t, self.s, indexing="ij")
        return (T, S) if self.orientation == "x" else (S, T)

    @property
    def max_defect(self):
        return float(np.max(self.defect)) if self.defect is not None else np.nan


def unscale_second_form(form: SecondForm, metric: Metric = None, values: MetricValues = None, x=None, y=None):
    """``h_ij = sqrt(EG - F^2) * gamma * (L~, M~, N~)``."""
    if values is None:
        if metric is None or x is None:
            raise ReconstructionError("need metric values or a metric with grid coordinates")
        values = metric.evaluate(x, y)
    det = values.det
    if np.any(~(det > 0)):
        raise ReconstructionError("degenerate metric: EG - F^2 <= 0")
    f = np.sqrt(det) * values.gamma
    return f * form.Lt, f * form.Mt, f * form.Nt


# ---------------------------------------------------------------------------
# Gauss-Weingarten system


class _Coefficients:
    """Metric data and h_ij along grid nodes, with midpoints for RK4 stages."""

    def __init__(self, metric, t, s, orientation, h11, h12, h22):
        self.metric = metric
        self.t, self.s = np.asarray(t, float), np.asarray(s, float)
        self.orientation = orientation
        self.h = (np.asarray(h11, float), np.asarray(h12, float), np.asarray(h22, float))

    def xy(self, t, s):
        return (t, s) if self.orientation == "x" else (s, t)

    def matrices(self, t, s, h11, h12, h22):
        """Generator matrices ``(Kx, Ky)`` with ``d_x F = Kx F``, ``d_y F = Ky F`` for frame rows (r_x, r_y, n)."""
        x, y = self.xy(t, s)
        v = self.metric.evaluate(x, y, strict=False)
        c = christoffel_plain(v)
        E, F, G = v.E, v.F, v.G
        D = E * G - F * F
        # Weingarten: n_x = a11 r_x + a21 r_y, n_y = a12 r_x + a22 r_y
        a11 = (h12 * F - h11 * G) / D
        a21 = (h11 * F - h12 * E) / D
        a12 = (h22 * F - h12 * G) / D
        a22 = (h12 * F - h22 * E) / D
        shape = np.broadcast(x, y, h11).shape
        Kx = np.zeros(shape + (3, 3))
        Ky = np.zeros(shape + (3, 3))
        Kx[..., 0, :] = _stack(c["111"], c["211"], h11, shape)
        Kx[..., 1, :] = _stack(c["112"], c["212"], h12, shape)
        Kx[..., 2, :] = _stack(a11, a21, 0.0, shape)
        Ky[..., 0, :] = _stack(c["112"], c["212"], h12, shape)
        Ky[..., 1, :] = _stack(c["122"], c["222"], h22, shape)
        Ky[..., 2, :] = _stack(a12, a22, 0.0, shape)
        return Kx, Ky

    def along(self, axis, t, s, h):
        Kx, Ky = self.matrices(t, s, *h)
        if (axis == "t") == (self.orientation == "x"):
            return Kx
        return Ky


def _stack(a, b, c, shape):
    return np.stack([np.broadcast_to(a, shape), np.broadcast_to(b, shape), np.broadcast_to(c, shape)], axis=-1)


def christoffel_plain(v: MetricValues):
    cs = christoffel(v)
    return {"111": cs.g111, "112": cs.g112, "122": cs.g122, "211": cs.g211, "212": cs.g212, "222": cs.g222}


def _rk4_line(F0, K_nodes, K_mid, dz, renormalize=True):
    """Integrate ``dF/dz = K F`` along one line with node and midpoint generators.

    ``F0``: (..., 3, 3); ``K_nodes``: (m, ..., 3, 3); ``K_mid``: (m-1, ..., 3, 3).
    Returns frames (m, ..., 3, 3) and the largest normal-length drift (before renormalisation, when enabled).
    """
    m = K_nodes.shape[0]
    out = np.empty((m,) + F0.shape)
    out[0] = F0
    F = F0.copy()
    drift = 0.0
    for k in range(m - 1):
        h = dz[k]
        Ka, Km, Kb = K_nodes[k], K_mid[k], K_nodes[k + 1]
        k1 = Ka @ F
        k2 = Km @ (F + 0.5 * h * k1)
        k3 = Km @ (F + 0.5 * h * k2)
        k4 = Kb @ (F + h * k3)
        F = F + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        nn = np.linalg.norm(F[..., 2, :], axis=-1)
        drift = max(drift, float(np.max(np.abs(nn - 1.0))))
        if renormalize:
            F[..., 2, :] /= nn[..., None]
        out[k + 1] = F
    return out, drift


def base_frame(metric: Metric, x0, y0):
    """Frame at the base point: r_x = (sqrt E, 0, 0), r_y = (F/sqrt E, sqrt(G - F^2/E), 0), n = e3."""
    v = metric.evaluate(np.array(x0, float), np.array(y0, float), strict=False)
    E, F, G = float(v.E), float(v.F), float(v.G)
    if not (E > 0 and G - F * F / E > 0):
        raise ReconstructionError("base point metric is not positive definite")
    sE = np.sqrt(E)
    return np.array([[sE, 0.0, 0.0], [F / sE, np.sqrt(G - F * F / E), 0.0], [0.0, 0.0, 1.0]])


def check_base_frame(frame, metric, x0, y0, tol=1e-10):
    v = metric.evaluate(np.array(x0, float), np.array(y0, float), strict=False)
    rx, ry, n = frame
    err = max(abs(rx @ rx - float(v.E)), abs(rx @ ry - float(v.F)), abs(ry @ ry - float(v.G)),
              abs(n @ n - 1.0), abs(n @ rx), abs(n @ ry))
    if err > tol * max(1.0, float(v.E), float(v.G)):
        raise ReconstructionError(f"base frame inconsistent with the metric (error {err:.3e})")
    if np.dot(np.cross(rx, ry), n) <= 0:
        raise ReconstructionError("base frame normal does not match r_x x r_y")


def _midpoint_h(h, axis):
    return tuple(0.5 * (np.take(a, range(a.shape[axis] - 1), axis=axis)
                        + np.take(a, range(1, a.shape[axis]), axis=axis)) for a in h)


def integrate_frame(metric: Metric, h11, h12, h22, t, s, orientation="x", base_index=(0, 0),
                    frame=None, defect_stride=None, renormalize=True, check_base=True) -> SurfacePatch:
    """Propagate the Gauss-Weingarten frame over the grid: time-like axis first, then each space-like line.

    RK4 with metric coefficients evaluated exactly at stage points and
    ``h_ij`` averaged to midpoints. The normal is renormalised after every
    step unless ``renormalize`` is false (drift recorded either way);
    tangents are left free. The path-consistency
    defect compares against the opposite order (space-like first) on the
    lattice ``t[::k], s[::k]``.
    """
    t, s = np.asarray(t, float), np.asarray(s, float)
    h = (np.asarray(h11, float), np.asarray(h12, float), np.asarray(h22, float))
    nt, ns = t.size, s.size
    if h[0].shape != (nt, ns):
        raise ReconstructionError(f"h grids must have shape ({nt}, {ns})")
    if not all(np.all(np.isfinite(a)) for a in h):
        raise ReconstructionError("second fundamental form contains non-finite values")
    i0, j0 = base_index
    coef = _Coefficients(metric, t, s, orientation, *h)
    x0, y0 = coef.xy(t[i0], s[j0])
    F0 = base_frame(metric, x0, y0) if frame is None else np.asarray(frame, float)
    if check_base:
        check_base_frame(F0, metric, x0, y0)

    def run_t(F_start, cols):
        """Along t from row i0 for the given columns; returns (nt, len(cols), 3, 3)."""
        cols = np.atleast_1d(cols)
        T = t[:, None]
        S = s[None, cols]
        hn = tuple(a[:, cols] for a in h)
        Kn = coef.along("t", T, S, hn)
        hm = _midpoint_h(hn, 0)
        Km = coef.along("t", 0.5 * (T[1:] + T[:-1]), S, hm)
        fwd, d1 = _rk4_line(F_start, Kn[i0:], Km[i0:], np.diff(t)[i0:], renormalize)
        bwd, d2 = _rk4_line(F_start, Kn[: i0 + 1][::-1], Km[:i0][::-1], -np.diff(t)[:i0][::-1], renormalize)
        return np.concatenate([bwd[::-1][:-1], fwd], axis=0), max(d1, d2)

    def run_s(F_start, rows):
        rows = np.atleast_1d(rows)
        T = t[rows, None]
        S = s[None, :]
        hn = tuple(a[rows, :] for a in h)
        Kn = np.moveaxis(coef.along("s", T, S, hn), 1, 0)
        hm = _midpoint_h(hn, 1)
        Km = np.moveaxis(coef.along("s", T, 0.5 * (S[:, 1:] + S[:, :-1]), hm), 1, 0)
        fwd, d1 = _rk4_line(F_start, Kn[j0:], Km[j0:], np.diff(s)[j0:], renormalize)
        bwd, d2 = _rk4_line(F_start, Kn[: j0 + 1][::-1], Km[:j0][::-1], -np.diff(s)[:j0][::-1], renormalize)
        res = np.concatenate([bwd[::-1][:-1], fwd], axis=0)  # (ns, rows, 3, 3)
        return np.moveaxis(res, 0, 1), max(d1, d2)

    line, dr1 = run_t(F0[None], [j0])  # (nt, 1, 3, 3)
    frames, dr2 = run_s(line[:, 0], np.arange(nt))  # (nt, ns, 3, 3)
    drift = max(dr1, dr2)

    cross = np.linalg.norm(np.cross(frames[..., 0, :], frames[..., 1, :]), axis=-1)
    if np.any(~(cross > 1e-10)):
        raise ReconstructionError("frame degenerated: |r_x x r_y| below 1e-10")

    k = defect_stride if defect_stride else max(1, min(nt, ns) // 16)
    rows_l = np.arange(0, nt, k)
    cols_l = np.arange(0, ns, k)
    base_row, _ = run_s(F0[None], [i0])  # (1, ns, 3, 3)
    alt, _ = run_t(base_row[0, cols_l], cols_l)  # (nt, len(cols), 3, 3)
    diff = alt[rows_l] - frames[np.ix_(rows_l, cols_l)]
    defect = np.sqrt(np.sum(diff**2, axis=(-1, -2)))

    return SurfacePatch(t, s, orientation, frames[..., 0, :], frames[..., 1, :], frames[..., 2, :],
                        normal_drift=drift, defect=defect, defect_stride=k)


def integrate_position(patch: SurfacePatch, base_position=(0.0, 0.0, 0.0), base_index=(0, 0)) -> SurfacePatch:
    """Positions by trapezoid quadrature of the tangents, in the same path order as the frames."""
    t, s = patch.t, patch.s
    i0, j0 = base_index
    if patch.orientation == "x":
        rt, rs = patch.rx, patch.ry
    else:
        rt, rs = patch.ry, patch.rx
    nt, ns = patch.shape
    r = np.empty((nt, ns, 3))
    line = np.empty((nt, 3))
    line[i0] = base_position
    for i in range(i0, nt - 1):
        line[i + 1] = line[i] + 0.5 * (t[i + 1] - t[i]) * (rt[i, j0] + rt[i + 1, j0])
    for i in range(i0, 0, -1):
        line[i - 1] = line[i] + 0.5 * (t[i - 1] - t[i]) * (rt[i, j0] + rt[i - 1, j0])
    r[:, j0] = line
    for j in range(j0, ns - 1):
        r[:, j + 1] = r[:, j] + 0.5 * (s[j + 1] - s[j]) * (rs[:, j] + rs[:, j + 1])
    for j in range(j0, 0, -1):
        r[:, j - 1] = r[:, j] + 0.5 * (s[j - 1] - s[j]) * (rs[:, j] + rs[:, j - 1])
    patch.r = r
    return patch


def first_form_error(patch: SurfacePatch, metric: Metric):
    """``(max, rms)`` of ``(|r_x.r_x - E| + 2|r_x.r_y - F| + |r_y.r_y - G|) / max(E, G)``.

    Tangents come from second-order differences of the positions.
    """
    if patch.r is None:
        raise ReconstructionError("positions not integrated")
    rt = np.gradient(patch.r, patch.t, axis=0, edge_order=2)
    rs = np.gradient(patch.r, patch.s, axis=1, edge_order=2)
    rx, ry = (rt, rs) if patch.orientation == "x" else (rs, rt)
    x, y = patch.xy()
    v = metric.evaluate(x, y, strict=False)
    err = (np.abs(np.sum(rx * rx, -1) - v.E) + 2.0 * np.abs(np.sum(rx * ry, -1) - v.F)
           + np.abs(np.sum(ry * ry, -1) - v.G)) / np.maximum(v.E, v.G)
    return float(np.max(err)), float(np.sqrt(np.mean(err**2))), err


def gram_error(patch: SurfacePatch, metric: Metric):
    """Largest ``|r_x.r_x - E|/E`` over the integrated frames."""
    x, y = patch.xy()
    v = metric.evaluate(x, y, strict=False)
    return float(np.max(np.abs(np.sum(patch.rx * patch.rx, -1) - v.E) / v.E))


# ---------------------------------------------------------------------------
# Mesh


def triangles(nt, ns):
    """Two triangles per grid cell, 0-based vertex indices in row-major order."""
    i, j = np.meshgrid(np.arange(nt - 1), np.arange(ns - 1), indexing="ij")
    v00 = (i * ns + j).ravel()
    v01 = v00 + 1
    v10 = v00 + ns
    v11 = v10 + 1
    return np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)]).reshape(2, -1, 3) \
        .transpose(1, 0, 2).reshape(-1, 3)


def angle_defect_curvature(r):
    """Discrete Gauss curvature (2 pi - sum of angles) / (area / 3) at interior vertices; NaN on the boundary."""
    nt, ns, _ = r.shape
    P = r.reshape(-1, 3)
    tri = triangles(nt, ns)
    a, b, c = P[tri[:, 0]], P[tri[:, 1]], P[tri[:, 2]]

    def ang(p, q1, q2):
        u, w = q1 - p, q2 - p
        return np.arctan2(np.linalg.norm(np.cross(u, w), axis=1), np.sum(u * w, axis=1))

    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    angles = np.zeros(P.shape[0])
    areas = np.zeros(P.shape[0])
    for col, (p, q1, q2) in enumerate(((a, b, c), (b, c, a), (c, a, b))):
        np.add.at(angles, tri[:, col], ang(p, q1, q2))
        np.add.at(areas, tri[:, col], area / 3.0)
    K = (2.0 * np.pi - angles) / areas
    K = K.reshape(nt, ns)
    K[0, :] = K[-1, :] = np.nan
    K[:, 0] = K[:, -1] = np.nan
    return K


def vertex_normals(patch: SurfacePatch):
    return patch.n / np.linalg.norm(patch.n, axis=-1, keepdims=True)


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def obj_text(patch: SurfacePatch, name="surface"):
    if patch.r is None:
        raise ReconstructionError("positions not integrated")
    r = patch.r
    if not np.all(np.isfinite(r)):
        raise ReconstructionError("mesh has non-finite vertex positions")
    nrm = vertex_normals(patch)
    if not np.all(np.isfinite(nrm)):
        raise ReconstructionError("mesh has non-finite normals")
    nt, ns, _ = r.shape
    lines = [f"# gcimmersion mesh {nt}x{ns}", f"o {name}"]
    lines += ["v %.17g %.17g %.17g" % tuple(p) for p in r.reshape(-1, 3)]
    lines += ["vn %.17g %.17g %.17g" % tuple(p) for p in nrm.reshape(-1, 3)]
    lines += ["f {0}//{0} {1}//{1} {2}//{2}".format(*(tri + 1)) for tri in triangles(nt, ns)]
    return "\n".join(lines) + "\n"


def export_mesh(patch: SurfacePatch, path, name="surface", first_form=None):
    """Write a Wavefront OBJ (row-major vertices, two triangles per cell, vertex normals).

    A companion ``<path>.csv`` holds per-vertex first-form error and, on the
    defect lattice, the path-consistency defect. Files are written to a
    temporary name and renamed, so a failure leaves no partial output.
    """
    text = obj_text(patch, name)
    nt, ns = patch.shape
    defect = np.full((nt, ns), np.nan)
    if patch.defect is not None:
        k = patch.defect_stride
        defect[::k, ::k] = patch.defect
    ff = np.full((nt, ns), np.nan) if first_form is None else np.asarray(first_form)
    x, y = patch.xy()
    rows = ["i,j,x,y,first_form_error,defect"]
    for i in range(nt):
        for j in range(ns):
            rows.append("%d,%d,%.17g,%.17g,%.17g,%.17g" % (i, j, x[i, j], y[i, j], ff[i, j], defect[i, j]))
    _atomic_write(path, text)
    _atomic_write(str(path) + ".csv", "\n".join(rows) + "\n")
    return path
