"""Hot loops: vector fields, their variational extensions and a Dormand-Prince
5(4) stepper with dense output.

Everything here is written in the numba-compatible subset of Python and is
compiled by :func:`lindblad_geo._jit.jit` unless ``LINDBLAD_GEO_PURE=1``.

State layouts (``nb`` base components followed by ``n_fields`` variational
copies of the same size):

* ``REDUCED``      (r, phi, theta, p_r, p_phi, p_theta)   par = Gamma, gamma_plus, q_min, phi_min
* ``GRUSIN``       (phi, theta, p_phi, p_theta)           par = lambda, phi_min
* ``ENERGY``       (r, phi, theta, p_r, p_phi, p_theta)   par = Gamma, gamma_plus, phi_min
* ``NORMAL_FORM``  (x, y, z)                              par = Gamma, gamma_plus, u1, u2
"""
import math

import numpy as np

from ._jit import jit

REDUCED = 0
GRUSIN = 1
ENERGY = 2
NORMAL_FORM = 3

BASE_DIM = (6, 4, 6, 3)

STATUS_END = 0
STATUS_EVENT = 1
STATUS_SWITCHING = 2
STATUS_POLAR = 3
STATUS_STEP_FAILURE = 4
STATUS_MAX_STEPS = 5

# Dormand-Prince 5(4) tableau
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
A71, A73, A74, A75, A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
C2, C3, C4, C5 = 0.2, 0.3, 0.8, 8.0 / 9.0
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
D1, D3, D4, D5, D6, D7 = (-12715105075.0 / 11282082432.0, 87487479700.0 / 32700410799.0,
                          -10690763975.0 / 1880347072.0, 701980252875.0 / 199316789632.0,
                          -1453857185.0 / 822651844.0, 69997945.0 / 29380423.0)


@jit
def reduced_jacobian(y, par, J):
    """Analytic derivative of the reduced extremal field, written into J (6x6)."""
    Gamma = par[0]
    gp = par[1]
    D = gp - Gamma
    phi = y[1]
    p_r = y[3]
    p_phi = y[4]
    p_th = y[5]
    s = math.sin(phi)
    c = math.cos(phi)
    sin2 = 2.0 * s * c
    cos2 = c * c - s * s
    cot = c / s
    cot2 = cot * cot
    Q = math.sqrt(p_phi * p_phi + p_th * p_th * cot2)
    Q3 = Q * Q * Q
    s3 = s * s * s
    w = p_th * p_th * c / s3
    dw = -p_th * p_th * (s * s + 3.0 * c * c) / (s3 * s)
    for i in range(6):
        for k in range(6):
            J[i, k] = 0.0
    # r' = -a(phi)
    J[0, 1] = D * sin2
    # phi' = c(phi) + p_phi / Q
    J[1, 1] = D * cos2 + p_phi * w / Q3
    J[1, 4] = p_th * p_th * cot2 / Q3
    J[1, 5] = -p_phi * p_th * cot2 / Q3
    # theta' = p_theta cot^2 / Q
    J[2, 1] = p_th * (-2.0 * c / (s3 * Q) + cot2 * w / Q3)
    J[2, 4] = -p_th * cot2 * p_phi / Q3
    J[2, 5] = cot2 * p_phi * p_phi / Q3
    # p_phi' = a' p_r - c' p_phi + w / Q
    J[4, 1] = -2.0 * D * cos2 * p_r + 2.0 * D * sin2 * p_phi + dw / Q + w * w / Q3
    J[4, 3] = -D * sin2
    J[4, 4] = -D * cos2 - w * p_phi / Q3
    J[4, 5] = 2.0 * p_th * c / (s3 * Q) - w * p_th * cot2 / Q3


@jit
def grusin_jacobian(y, par, J):
    lam = par[0]
    phi = y[0]
    p_th = y[3]
    s = math.sin(phi)
    c = math.cos(phi)
    s3 = s * s * s
    for i in range(4):
        for k in range(4):
            J[i, k] = 0.0
    J[0, 2] = 1.0
    J[1, 0] = -2.0 * p_th * c / s3
    J[1, 3] = 1.0 / (s * s) - lam
    J[2, 0] = -p_th * p_th * (s * s + 3.0 * c * c) / (s3 * s)
    J[2, 3] = 2.0 * p_th * c / s3


@jit
def field(kind, y, par, out, J):
    """Evaluate the field (and variational copies) of system ``kind`` into ``out``."""
    if kind == REDUCED:
        Gamma = par[0]
        gp = par[1]
        D = gp - Gamma
        phi = y[1]
        p_r = y[3]
        p_phi = y[4]
        p_th = y[5]
        s = math.sin(phi)
        c = math.cos(phi)
        sin2 = 2.0 * s * c
        cot = c / s
        Q = math.sqrt(p_phi * p_phi + p_th * p_th * cot * cot)
        out[0] = -(gp * c * c + Gamma * s * s)
        out[1] = 0.5 * D * sin2 + p_phi / Q
        out[2] = p_th * cot * cot / Q
        out[3] = 0.0
        out[4] = -D * sin2 * p_r - D * (c * c - s * s) * p_phi + p_th * p_th * c / (Q * s * s * s)
        out[5] = 0.0
        nb = 6
        if y.shape[0] > nb:
            reduced_jacobian(y, par, J)
    elif kind == GRUSIN:
        lam = par[0]
        phi = y[0]
        p_phi = y[2]
        p_th = y[3]
        s = math.sin(phi)
        c = math.cos(phi)
        out[0] = p_phi
        out[1] = p_th * (1.0 / (s * s) - lam)
        out[2] = p_th * p_th * c / (s * s * s)
        out[3] = 0.0
        nb = 4
        if y.shape[0] > nb:
            grusin_jacobian(y, par, J)
    elif kind == ENERGY:
        Gamma = par[0]
        gp = par[1]
        D = gp - Gamma
        phi = y[1]
        p_r = y[3]
        p_phi = y[4]
        p_th = y[5]
        s = math.sin(phi)
        c = math.cos(phi)
        sin2 = 2.0 * s * c
        cot = c / s
        out[0] = -(gp * c * c + Gamma * s * s)
        out[1] = 0.5 * D * sin2 + p_phi
        out[2] = p_th * cot * cot
        out[3] = 0.0
        out[4] = -D * sin2 * p_r - D * (c * c - s * s) * p_phi + p_th * p_th * c / (s * s * s)
        out[5] = 0.0
        nb = 6
    else:
        Gamma = par[0]
        gp = par[1]
        u1 = par[2]
        u2 = par[3]
        yy = y[1]
        out[0] = 1.0 + (gp - Gamma) / Gamma * yy * yy
        out[1] = (Gamma - gp) * yy + u2
        out[2] = yy * u1
        nb = 3
    n = y.shape[0]
    if n > nb:
        nf = (n - nb) // nb
        for j in range(nf):
            base = nb + nb * j
            for i in range(nb):
                acc = 0.0
                for k in range(nb):
                    acc += J[i, k] * y[base + k]
                out[base + i] = acc


@jit
def guard_status(kind, y, par):
    if kind == REDUCED:
        phi = y[1]
        phi_min = par[3]
        if not (phi >= phi_min and phi <= math.pi - phi_min):
            return STATUS_POLAR
        cot = math.cos(phi) / math.sin(phi)
        Q = math.sqrt(y[4] * y[4] + y[5] * y[5] * cot * cot)
        if Q <= par[2]:
            return STATUS_SWITCHING
    elif kind == GRUSIN:
        phi = y[0]
        if not (phi >= par[1] and phi <= math.pi - par[1]):
            return STATUS_POLAR
    elif kind == ENERGY:
        phi = y[1]
        if not (phi >= par[2] and phi <= math.pi - par[2]):
            return STATUS_POLAR
    return STATUS_END


@jit
def _err_norm(y, ynew, err, atol, rtol):
    n = y.shape[0]
    acc = 0.0
    for i in range(n):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        e = err[i] / sc
        acc += e * e
    return math.sqrt(acc / n)


@jit
def dopri5(kind, y0, t0, t1, par, atol, rtol, h_init, max_steps,
           ev_idx, ev_val, ev_dir, ev_count):
    """Integrate from t0 to t1 (either direction).

    Component events ``y[ev_idx[e]] - ev_val[e]`` crossing zero in direction
    ``ev_dir[e]`` (+1, -1, 0 for any) stop the run once they have fired
    ``ev_count[e]`` times (0 never stops).  The crossing at the start point is
    not counted.

    Returns (ts, ys, rcont, n_steps, status, n_rejected); step ``i`` spans
    ts[i]..ts[i+1] and is interpolated by rcont[i].
    """
    n = y0.shape[0]
    nb = BASE_DIM[kind]
    J = np.zeros((nb, nb))
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)

    cap = 256
    ts = np.empty(cap + 1)
    ys = np.empty((cap + 1, n))
    rc = np.empty((cap, 5, n))

    y = y0.copy()
    ts[0] = t0
    ys[0, :] = y
    n_acc = 0
    n_rej = 0
    status = STATUS_END
    if span == 0.0:
        return ts[:1], ys[:1], rc[:0], 0, status, 0

    n_ev = ev_idx.shape[0]
    hits = np.zeros(n_ev, dtype=np.int64)

    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    yt = np.empty(n)
    ynew = np.empty(n)
    err = np.empty(n)

    field(kind, y, par, k1, J)

    # initial step (Hairer's heuristic, simplified)
    if h_init > 0.0:
        h = h_init
    else:
        d0 = 0.0
        d1 = 0.0
        for i in range(n):
            sc = atol + rtol * abs(y[i])
            d0 += (y[i] / sc) ** 2
            d1 += (k1[i] / sc) ** 2
        d0 = math.sqrt(d0 / n)
        d1 = math.sqrt(d1 / n)
        if d0 < 1e-5 or d1 < 1e-5:
            h = 1e-6
        else:
            h = 0.01 * d0 / d1
        h = min(h, 0.1 * span)
        h = max(h, 1e-10)
    h = min(h, span)

    t = t0
    facold = 1e-4
    beta = 0.04
    expo1 = 0.2 - beta * 0.75
    safe = 0.9
    facc1 = 5.0
    facc2 = 0.1
    reject = False
    hmin_rel = 1e-14

    while True:
        if n_acc >= max_steps:
            status = STATUS_MAX_STEPS
            break
        remaining = span - abs(t - t0)
        if remaining <= 1e-15 * max(1.0, span):
            break
        if h > remaining:
            h = remaining
        if h < hmin_rel * max(1.0, abs(t)):
            status = STATUS_STEP_FAILURE
            break
        hs = direction * h

        for i in range(n):
            yt[i] = y[i] + hs * A21 * k1[i]
        field(kind, yt, par, k2, J)
        for i in range(n):
            yt[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
        field(kind, yt, par, k3, J)
        for i in range(n):
            yt[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        field(kind, yt, par, k4, J)
        for i in range(n):
            yt[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        field(kind, yt, par, k5, J)
        for i in range(n):
            yt[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        field(kind, yt, par, k6, J)
        for i in range(n):
            ynew[i] = y[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
        field(kind, ynew, par, k7, J)
        for i in range(n):
            err[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        e = _err_norm(y, ynew, err, atol, rtol)

        if not math.isfinite(e):
            h *= 0.2
            reject = True
            n_rej += 1
            continue

        fac11 = e ** expo1
        fac = fac11 / facold ** beta
        fac = max(facc2, min(facc1, fac / safe))
        hnew = h / fac

        if e <= 1.0:
            facold = max(e, 1e-4)
            if n_acc >= cap:
                new_cap = 2 * cap
                ts2 = np.empty(new_cap + 1)
                ys2 = np.empty((new_cap + 1, n))
                rc2 = np.empty((new_cap, 5, n))
                ts2[:cap + 1] = ts[:cap + 1]
                ys2[:cap + 1, :] = ys[:cap + 1, :]
                rc2[:cap, :, :] = rc[:cap, :, :]
                ts = ts2
                ys = ys2
                rc = rc2
                cap = new_cap
            for i in range(n):
                dy = ynew[i] - y[i]
                bspl = hs * k1[i] - dy
                rc[n_acc, 0, i] = y[i]
                rc[n_acc, 1, i] = dy
                rc[n_acc, 2, i] = bspl
                rc[n_acc, 3, i] = dy - hs * k7[i] - bspl
                rc[n_acc, 4, i] = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i]
                                        + D6 * k6[i] + D7 * k7[i])
            t_new = t + hs
            if abs(t_new - t0) > span * (1.0 - 1e-15):
                t_new = t1
            ts[n_acc + 1] = t_new
            ys[n_acc + 1, :] = ynew

            stop = False
            for ev in range(n_ev):
                g_old = y[ev_idx[ev]] - ev_val[ev]
                g_new = ynew[ev_idx[ev]] - ev_val[ev]
                up = g_old < 0.0 and g_new >= 0.0
                down = g_old > 0.0 and g_new <= 0.0
                d = ev_dir[ev]
                if (d >= 0 and up) or (d <= 0 and down):
                    hits[ev] += 1
                    if ev_count[ev] > 0 and hits[ev] >= ev_count[ev]:
                        stop = True
            n_acc += 1
            t = t_new
            for i in range(n):
                y[i] = ynew[i]
                k1[i] = k7[i]
            if stop:
                status = STATUS_EVENT
                break
            g = guard_status(kind, y, par)
            if g != STATUS_END:
                status = g
                break
            if abs(hnew) > span:
                hnew = span
            if reject:
                hnew = min(hnew, h)
            reject = False
            h = hnew
        else:
            hnew = h / min(facc1, fac11 / safe)
            reject = True
            n_rej += 1
            h = hnew

    return ts[:n_acc + 1], ys[:n_acc + 1], rc[:n_acc], n_acc, status, n_rej


@jit
def dense_eval(ts, rc, t):
    """Interpolate one time from the stored dense-output coefficients."""
    m = rc.shape[0]
    lo = 0
    hi = m - 1
    # locate segment (ts monotone in either direction)
    asc = ts[m] >= ts[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if (asc and ts[mid + 1] < t) or ((not asc) and ts[mid + 1] > t):
            lo = mid + 1
        else:
            hi = mid
    h = ts[lo + 1] - ts[lo]
    th = (t - ts[lo]) / h
    th1 = 1.0 - th
    n = rc.shape[2]
    out = np.empty(n)
    for i in range(n):
        out[i] = rc[lo, 0, i] + th * (rc[lo, 1, i] + th1 * (rc[lo, 2, i] + th * (rc[lo, 3, i] + th1 * rc[lo, 4, i])))
    return out
