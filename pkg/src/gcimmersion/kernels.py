"""Row right-hand side of the viscous Riemann-invariant system.

For a march in the time-like coordinate ``t`` with the periodic space-like
coordinate ``s``, each invariant obeys

    q c (T+ d_t W+ + X+ d_s W+) =  eps W+'' + (2 eps q / rho) W+' (rho q)' + (eps/rho) W+'^2 + S1 - c^2 S2
    q c (T- d_t W- + X- d_s W-) = -eps W-'' - (2 eps q / rho) W-' (rho q)' + (eps/rho) W-'^2 - S1 - c^2 S2

with ``c = sqrt(q^2 - 1) = 1/rho``, ``(T, X) = (lambda, mu)`` when x is
time-like and ``(mu, lambda)`` when y is. Marching in the direction
``sigma = +-1`` gives ``dW/dtau = sigma d_t W``. Both a numba and a numpy
implementation are provided; :func:`row_rhs` dispatches on
:func:`gcimmersion._accel.active_backend`.
"""

import numpy as np

from ._accel import active_backend, njit

ORIENT_X = 0
ORIENT_Y = 1


def assemble(Wp, Wm, dWp, dWm, d2Wp, d2Wm, upWp, upWm, tilde, eps, orient, sigma):
    """Pointwise assembly from given derivative fields (numpy).

    ``dW``/``d2W`` are the centred first/second s-derivatives used in the
    viscous terms, ``upW`` the first derivative used in the transverse
    advection term. Returns ``(dWp/dtau, dWm/dtau, nu_max, adv_max)`` where
    the last two are the largest diffusion coefficient and advection speed.
    """
    t111, t112, t122, t211, t212, t222 = tilde
    half = 0.5 * (Wp - Wm)
    ch, sh = np.cos(half), np.sin(half)
    q = 1.0 / ch
    c = sh / ch
    rho = 1.0 / c
    theta = 0.5 * (Wp + Wm)
    st, ct = np.sin(theta), np.cos(theta)

    lp, lm = st + ct * rho, st - ct * rho
    mp, mm = -ct + st * rho, -ct - st * rho
    if orient == ORIENT_X:
        tp, tm, xp, xm = lp, lm, mp, mm
    else:
        tp, tm, xp, xm = mp, mm, lp, lm

    # rho q = 1/sin(half)
    drq = -ch / (sh * sh) * 0.5 * (dWp - dWm)

    iq2 = 1.0 / (q * q)
    A1 = t122 * ct * ct - 2.0 * t112 * st * ct + t111 * st * st - (t122 + t111) * iq2
    A2 = t222 * ct * ct - 2.0 * t212 * st * ct + t211 * st * st - (t222 + t211) * iq2
    base = q * (ct * A2 - st * A1)
    pm = q * c * (ct * A1 + st * A2)
    src_p = base - pm  # S1 - c^2 S2
    src_m = -(base + pm)  # -S1 - c^2 S2

    qc = q * c
    k = 2.0 * eps * q * c  # 2 eps q / rho
    g = eps * c  # eps / rho
    rp = eps * d2Wp + k * dWp * drq + g * dWp * dWp + src_p
    rm = -eps * d2Wm - k * dWm * drq + g * dWm * dWm + src_m
    fp = sigma * (rp / (qc * tp) - (xp / tp) * upWp)
    fm = sigma * (rm / (qc * tm) - (xm / tm) * upWm)
    nu = max(np.max(np.abs(eps / (qc * tp))), np.max(np.abs(eps / (qc * tm))))
    adv = max(np.max(np.abs(xp / tp)), np.max(np.abs(xm / tm)))
    return fp, fm, nu, adv


def _upwind(W, a, ds):
    back = (W - np.roll(W, 1)) / ds
    fwd = (np.roll(W, -1) - W) / ds
    return np.where(a > 0, back, fwd)


def _advection_velocity(Wp, Wm, orient, sigma):
    half = 0.5 * (Wp - Wm)
    rho = 1.0 / np.tan(half)
    theta = 0.5 * (Wp + Wm)
    st, ct = np.sin(theta), np.cos(theta)
    lp, lm = st + ct * rho, st - ct * rho
    mp, mm = -ct + st * rho, -ct - st * rho
    if orient == ORIENT_X:
        return sigma * mp / lp, sigma * mm / lm
    return sigma * lp / mp, sigma * lm / mm


def row_rhs_numpy(Wp, Wm, tilde, eps, ds, orient, sigma):
    """Discrete RHS on a periodic row: centred differences plus first-order upwinding."""
    inv2 = 0.5 / ds
    dWp = (np.roll(Wp, -1) - np.roll(Wp, 1)) * inv2
    dWm = (np.roll(Wm, -1) - np.roll(Wm, 1)) * inv2
    d2Wp = (np.roll(Wp, -1) - 2.0 * Wp + np.roll(Wp, 1)) / (ds * ds)
    d2Wm = (np.roll(Wm, -1) - 2.0 * Wm + np.roll(Wm, 1)) / (ds * ds)
    ap, am = _advection_velocity(Wp, Wm, orient, sigma)
    upWp = _upwind(Wp, ap, ds)
    upWm = _upwind(Wm, am, ds)
    return assemble(Wp, Wm, dWp, dWm, d2Wp, d2Wm, upWp, upWm, tilde, eps, orient, sigma)


@njit(cache=True, fastmath=False)
def _row_rhs_numba(Wp, Wm, t111, t112, t122, t211, t212, t222, eps, ds, orient, sigma, fp, fm):
    n = Wp.shape[0]
    nu = 0.0
    adv = 0.0
    inv2 = 0.5 / ds
    invsq = 1.0 / (ds * ds)
    for i in range(n):
        il = i - 1 if i > 0 else n - 1
        ir = i + 1 if i < n - 1 else 0
        wp, wm = Wp[i], Wm[i]
        dWp = (Wp[ir] - Wp[il]) * inv2
        dWm = (Wm[ir] - Wm[il]) * inv2
        d2Wp = (Wp[ir] - 2.0 * wp + Wp[il]) * invsq
        d2Wm = (Wm[ir] - 2.0 * wm + Wm[il]) * invsq

        half = 0.5 * (wp - wm)
        ch = np.cos(half)
        sh = np.sin(half)
        q = 1.0 / ch
        c = sh / ch
        rho = 1.0 / c
        theta = 0.5 * (wp + wm)
        st = np.sin(theta)
        ct = np.cos(theta)
        lp = st + ct * rho
        lm = st - ct * rho
        mp = -ct + st * rho
        mm = -ct - st * rho
        if orient == 0:
            tp, tm, xp, xm = lp, lm, mp, mm
        else:
            tp, tm, xp, xm = mp, mm, lp, lm

        ap = sigma * xp / tp
        am = sigma * xm / tm
        if ap > 0:
            upWp = (wp - Wp[il]) / ds
        else:
            upWp = (Wp[ir] - wp) / ds
        if am > 0:
            upWm = (wm - Wm[il]) / ds
        else:
            upWm = (Wm[ir] - wm) / ds

        drq = -ch / (sh * sh) * 0.5 * (dWp - dWm)
        iq2 = 1.0 / (q * q)
        A1 = t122[i] * ct * ct - 2.0 * t112[i] * st * ct + t111[i] * st * st - (t122[i] + t111[i]) * iq2
        A2 = t222[i] * ct * ct - 2.0 * t212[i] * st * ct + t211[i] * st * st - (t222[i] + t211[i]) * iq2
        base = q * (ct * A2 - st * A1)
        pm = q * c * (ct * A1 + st * A2)

        qc = q * c
        k = 2.0 * eps * q * c
        g = eps * c
        rp = eps * d2Wp + k * dWp * drq + g * dWp * dWp + (base - pm)
        rm = -eps * d2Wm - k * dWm * drq + g * dWm * dWm - (base + pm)
        fp[i] = sigma * (rp / (qc * tp) - (xp / tp) * upWp)
        fm[i] = sigma * (rm / (qc * tm) - (xm / tm) * upWm)

        v = abs(eps / (qc * tp))
        if v > nu:
            nu = v
        v = abs(eps / (qc * tm))
        if v > nu:
            nu = v
        v = abs(xp / tp)
        if v > adv:
            adv = v
        v = abs(xm / tm)
        if v > adv:
            adv = v
    return nu, adv


def row_rhs_numba(Wp, Wm, tilde, eps, ds, orient, sigma):
    n = Wp.shape[0]
    tl = [np.ascontiguousarray(np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))) for t in tilde]
    fp = np.empty(n)
    fm = np.empty(n)
    nu, adv = _row_rhs_numba(
        np.ascontiguousarray(Wp, dtype=np.float64), np.ascontiguousarray(Wm, dtype=np.float64),
        tl[0], tl[1], tl[2], tl[3], tl[4], tl[5], float(eps), float(ds), int(orient), float(sigma), fp, fm,
    )
    return fp, fm, nu, adv


def row_rhs(Wp, Wm, tilde, eps, ds, orient, sigma, backend=None):
    """Discrete ``(dW+/dtau, dW-/dtau, nu_max, adv_max)`` on one periodic row."""
    backend = active_backend() if backend is None else backend
    if backend == "numba":
        return row_rhs_numba(Wp, Wm, tilde, eps, ds, orient, sigma)
    return row_rhs_numpy(Wp, Wm, tilde, eps, ds, orient, sigma)
