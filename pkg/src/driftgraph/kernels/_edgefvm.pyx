# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled single-edge solver: tridiagonal FVM marching with batched
tangent propagation.  Mirrors _edgefvm_py.edge_solve exactly."""

import numpy as np

FLUX = 0
ROBIN = 1


def edge_solve(double h, double tau, double eps, double alpha, double nu, int n_t,
               rho0, int okind, oseries, int tkind, tseries,
               d_rho0=None, d_oseries=None, d_tseries=None, d_nu=None):
    cdef double[::1] s0 = np.ascontiguousarray(rho0, dtype=np.float64)
    cdef double[::1] os_ = np.ascontiguousarray(oseries, dtype=np.float64)
    cdef double[::1] ts_ = np.ascontiguousarray(tseries, dtype=np.float64)
    cdef Py_ssize_t n1 = s0.shape[0]
    cdef Py_ssize_t nd = 0

    cdef double[:, ::1] D0, dos, dts
    cdef double[::1] dnu
    if d_rho0 is not None:
        D0 = np.ascontiguousarray(np.atleast_2d(d_rho0), dtype=np.float64)
        dos = np.ascontiguousarray(np.atleast_2d(d_oseries), dtype=np.float64)
        dts = np.ascontiguousarray(np.atleast_2d(d_tseries), dtype=np.float64)
        dnu = np.ascontiguousarray(np.atleast_1d(d_nu), dtype=np.float64)
        nd = D0.shape[0]

    traj_arr = np.empty((n_t + 1, n1))
    cdef double[:, ::1] traj = traj_arr
    dtraj_arr = None
    cdef double[:, :, ::1] dtraj
    if nd:
        dtraj_arr = np.empty((nd, n_t + 1, n1))
        dtraj = dtraj_arr

    cdef Py_ssize_t i, m, q
    for i in range(n1):
        traj[0, i] = s0[i]
    if nd:
        for q in range(nd):
            for i in range(n1):
                dtraj[q, 0, i] = D0[q, i]

    # Thomas factorization of the constant tridiagonal operator
    cdef double r = tau * eps / h
    cdef double[::1] w = np.empty(n1)
    cdef double[::1] cp = np.empty(n1)
    cdef double lo = -r
    w[0] = h + r
    cp[0] = lo / w[0]
    for i in range(1, n1 - 1):
        w[i] = h + 2.0 * r - lo * cp[i - 1]
        cp[i] = lo / w[i]
    w[n1 - 1] = h + r - lo * cp[n1 - 2]

    cdef double[::1] f = np.empty(n1)
    cdef double[::1] fp = np.empty(n1)
    cdef double[::1] F = np.empty(n1 - 1)
    cdef double[::1] dF = np.empty(n1 - 1)
    cdef double[::1] rhs = np.empty(n1)
    cdef double go, gt, dgo, dgt, s_first, s_last

    for m in range(n_t):
        for i in range(n1):
            s_first = traj[m, i]
            f[i] = s_first * (1.0 - s_first)
            fp[i] = 1.0 - 2.0 * s_first
        for i in range(n1 - 1):
            F[i] = 0.5 * nu * (f[i] + f[i + 1]) - 0.5 * alpha * (traj[m, i + 1] - traj[m, i])
        s_first = traj[m, 0]
        s_last = traj[m, n1 - 1]

        go = os_[m] if okind == FLUX else os_[m] * (1.0 - s_first)
        gt = ts_[m] if tkind == FLUX else ts_[m] * s_last
        rhs[0] = h * s_first - tau * F[0] + tau * go
        for i in range(1, n1 - 1):
            rhs[i] = h * traj[m, i] + tau * (F[i - 1] - F[i])
        rhs[n1 - 1] = h * s_last + tau * F[n1 - 2] - tau * gt

        # forward elimination / back substitution
        rhs[0] = rhs[0] / w[0]
        for i in range(1, n1):
            rhs[i] = (rhs[i] - lo * rhs[i - 1]) / w[i]
        traj[m + 1, n1 - 1] = rhs[n1 - 1]
        for i in range(n1 - 2, -1, -1):
            traj[m + 1, i] = rhs[i] - cp[i] * traj[m + 1, i + 1]

        for q in range(nd):
            for i in range(n1 - 1):
                dF[i] = (
                    0.5 * dnu[q] * (f[i] + f[i + 1])
                    + 0.5 * nu * (fp[i] * dtraj[q, m, i] + fp[i + 1] * dtraj[q, m, i + 1])
                    - 0.5 * alpha * (dtraj[q, m, i + 1] - dtraj[q, m, i])
                )
            if okind == FLUX:
                dgo = dos[q, m]
            else:
                dgo = dos[q, m] * (1.0 - s_first) - os_[m] * dtraj[q, m, 0]
            if tkind == FLUX:
                dgt = dts[q, m]
            else:
                dgt = dts[q, m] * s_last + ts_[m] * dtraj[q, m, n1 - 1]
            rhs[0] = h * dtraj[q, m, 0] - tau * dF[0] + tau * dgo
            for i in range(1, n1 - 1):
                rhs[i] = h * dtraj[q, m, i] + tau * (dF[i - 1] - dF[i])
            rhs[n1 - 1] = h * dtraj[q, m, n1 - 1] + tau * dF[n1 - 2] - tau * dgt

            rhs[0] = rhs[0] / w[0]
            for i in range(1, n1):
                rhs[i] = (rhs[i] - lo * rhs[i - 1]) / w[i]
            dtraj[q, m + 1, n1 - 1] = rhs[n1 - 1]
            for i in range(n1 - 2, -1, -1):
                dtraj[q, m + 1, i] = rhs[i] - cp[i] * dtraj[q, m + 1, i + 1]

    return traj_arr, dtraj_arr
