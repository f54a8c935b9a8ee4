# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 kernel; arithmetic mirrors ``_rk4_py`` exactly."""

import numpy as np

from libc.math cimport fabs

cdef double BLOWUP_LIMIT = 1e12

cdef enum:
    FLAG_OMEGA = 1
    FLAG_P_V = 2
    FLAG_C_R = 4
    FLAG_H_CAKE = 8


cdef inline bint _rates(const double* p, const double* x, const double* u,
                        bint track, double* out) noexcept nogil:
    cdef double f_out = u[5]
    cdef double r_tot, solids
    if track:
        f_out = x[4] + f_out
    r_tot = p[8] + p[9] * x[3]
    if not r_tot > 0.0:
        return False
    solids = u[3] * u[4] - f_out * x[2]
    out[0] = (u[0] - (p[2] * x[0] + p[3] * x[3])) / p[1]
    out[1] = p[5] * (u[1] - u[2])
    out[2] = solids / p[6]
    out[3] = x[2] * x[4] / p[7] - x[0] * x[3]
    out[4] = ((p[0] - x[1]) / r_tot - x[4]) / p[4]
    out[5] = solids
    return True


def integrate(p, x, u, double h, long nsteps, fout_tracks_qf=False):
    """Advance ``x`` by ``nsteps`` RK4 steps of size ``h`` with ``u`` held.

    Returns ``(x_new, audit, flags, status)``.
    """
    cdef double pp[10]
    cdef double uu[6]
    cdef double xx[5]
    cdef double tmp[5]
    cdef double k1[6]
    cdef double k2[6]
    cdef double k3[6]
    cdef double k4[6]
    cdef double half = 0.5 * h
    cdef double sixth = h / 6.0
    cdef double audit = 0.0
    cdef int flags = 0
    cdef int status = 0
    cdef bint track = bool(fout_tracks_qf)
    cdef long step
    cdef int i
    for i in range(10):
        pp[i] = p[i]
    for i in range(6):
        uu[i] = u[i]
    for i in range(5):
        xx[i] = x[i]
    with nogil:
        for step in range(nsteps):
            if not _rates(pp, xx, uu, track, k1):
                status = 2
                break
            for i in range(5):
                tmp[i] = xx[i] + half * k1[i]
            if not _rates(pp, tmp, uu, track, k2):
                status = 2
                break
            for i in range(5):
                tmp[i] = xx[i] + half * k2[i]
            if not _rates(pp, tmp, uu, track, k3):
                status = 2
                break
            for i in range(5):
                tmp[i] = xx[i] + h * k3[i]
            if not _rates(pp, tmp, uu, track, k4):
                status = 2
                break
            for i in range(5):
                xx[i] = xx[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            audit = audit + sixth * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])
            if xx[0] < 0.0:
                flags |= FLAG_OMEGA
            if xx[1] < 0.0:
                flags |= FLAG_P_V
            if xx[2] < 0.0:
                flags |= FLAG_C_R
            if xx[3] < 0.0:
                flags |= FLAG_H_CAKE
            if not (fabs(xx[0]) <= BLOWUP_LIMIT and fabs(xx[1]) <= BLOWUP_LIMIT
                    and fabs(xx[2]) <= BLOWUP_LIMIT and fabs(xx[3]) <= BLOWUP_LIMIT
                    and fabs(xx[4]) <= BLOWUP_LIMIT):
                status = 1
                break
    return np.array([xx[0], xx[1], xx[2], xx[3], xx[4]]), audit, flags, status
