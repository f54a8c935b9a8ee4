"""Pure-Python RK4 kernel; mirrors ``_rk4_ext.pyx`` operation for operation.

Both backends must produce bit-identical results, so any change to the
arithmetic here has to be repeated in the compiled kernel.
"""

import numpy as np

BLOWUP_LIMIT = 1e12

FLAG_OMEGA = 1
FLAG_P_V = 2
FLAG_C_R = 4
FLAG_H_CAKE = 8

STATUS_OK = 0
STATUS_BLOWUP = 1
STATUS_RESISTANCE = 2


def _rates(p, w, pv, cr, hc, qf, u, track):
    p_atm, j, k_d, k_c, tau_q, gas_gain, v_vat, rho_a, r_m, r_spec = p
    t_m, q_in, q_out, f_in, c_in, f_out = u
    if track:
        f_out = qf + f_out
    r_tot = r_m + r_spec * hc
    if not r_tot > 0.0:
        return None
    solids = f_in * c_in - f_out * cr
    return (
        (t_m - (k_d * w + k_c * hc)) / j,
        gas_gain * (q_in - q_out),
        solids / v_vat,
        cr * qf / rho_a - w * hc,
        ((p_atm - pv) / r_tot - qf) / tau_q,
        solids,
    )


def integrate(p, x, u, h, nsteps, fout_tracks_qf=False):
    """Advance ``x`` by ``nsteps`` RK4 steps of size ``h`` with ``u`` held.

    Returns ``(x_new, audit, flags, status)`` where ``audit`` is the RK4
    integral of the vat solids balance ``f_in*c_in - f_out*c_r``.
    """
    p = tuple(float(v) for v in p)
    u = tuple(float(v) for v in u)
    w, pv, cr, hc, qf = (float(v) for v in x)
    track = bool(fout_tracks_qf)
    half = 0.5 * h
    sixth = h / 6.0
    audit = 0.0
    flags = 0
    status = STATUS_OK
    for _ in range(nsteps):
        k1 = _rates(p, w, pv, cr, hc, qf, u, track)
        if k1 is None:
            status = STATUS_RESISTANCE
            break
        k2 = _rates(p, w + half * k1[0], pv + half * k1[1], cr + half * k1[2],
                    hc + half * k1[3], qf + half * k1[4], u, track)
        if k2 is None:
            status = STATUS_RESISTANCE
            break
        k3 = _rates(p, w + half * k2[0], pv + half * k2[1], cr + half * k2[2],
                    hc + half * k2[3], qf + half * k2[4], u, track)
        if k3 is None:
            status = STATUS_RESISTANCE
            break
        k4 = _rates(p, w + h * k3[0], pv + h * k3[1], cr + h * k3[2],
                    hc + h * k3[3], qf + h * k3[4], u, track)
        if k4 is None:
            status = STATUS_RESISTANCE
            break
        w = w + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        pv = pv + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        cr = cr + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        hc = hc + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        qf = qf + sixth * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
        audit = audit + sixth * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])
        if w < 0.0:
            flags |= FLAG_OMEGA
        if pv < 0.0:
            flags |= FLAG_P_V
        if cr < 0.0:
            flags |= FLAG_C_R
        if hc < 0.0:
            flags |= FLAG_H_CAKE
        if not (abs(w) <= BLOWUP_LIMIT and abs(pv) <= BLOWUP_LIMIT and abs(cr) <= BLOWUP_LIMIT
                and abs(hc) <= BLOWUP_LIMIT and abs(qf) <= BLOWUP_LIMIT):
            status = STATUS_BLOWUP
            break
    return np.array([w, pv, cr, hc, qf]), audit, flags, status

