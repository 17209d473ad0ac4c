"""Pure-numpy single-edge solver: reference implementation of the hot kernel.

Same contract as the compiled extension; primal state and all tangent
directions are propagated together through one banded solve per step.
"""

import numpy as np
from scipy.linalg import solve_banded

FLUX = 0
ROBIN = 1


def edge_solve(h, tau, eps, alpha, nu, n_t, rho0, okind, oseries, tkind, tseries,
               d_rho0=None, d_oseries=None, d_tseries=None, d_nu=None):
    """March a single edge with n+1 cells over n_t steps.

    rho0: (n+1,) initial averages [origin patch, interior cells, target patch].
    oseries/tseries: boundary data at times t_0 .. t_{n_t-1}; kind FLUX means
    a prescribed flux value, kind ROBIN means J(0) = u (1 - rho) at the
    origin and J(L) = u rho at the target.
    Optional tangent directions (stacked along axis 0): d_rho0 (nd, n+1),
    d_oseries/d_tseries (nd, n_t), d_nu (nd,).

    Returns (traj, dtraj): (n_t+1, n+1) and (nd, n_t+1, n+1) or None.
    """
    rho0 = np.asarray(rho0, dtype=float)
    oseries = np.asarray(oseries, dtype=float)
    tseries = np.asarray(tseries, dtype=float)
    n1 = rho0.shape[0]
    r = tau * eps / h

    ab = np.zeros((3, n1))
    ab[0, 1:] = -r
    ab[1, :] = h + 2.0 * r
    ab[1, 0] = h + r
    ab[1, -1] = h + r
    ab[2, :-1] = -r

    nd = 0
    if d_rho0 is not None:
        d_rho0 = np.atleast_2d(np.asarray(d_rho0, dtype=float))
        d_oseries = np.atleast_2d(np.asarray(d_oseries, dtype=float))
        d_tseries = np.atleast_2d(np.asarray(d_tseries, dtype=float))
        d_nu = np.atleast_1d(np.asarray(d_nu, dtype=float))
        nd = d_rho0.shape[0]

    traj = np.empty((n_t + 1, n1))
    traj[0] = rho0
    dtraj = None
    s = rho0.copy()
    if nd:
        dtraj = np.empty((nd, n_t + 1, n1))
        dtraj[:, 0] = d_rho0
        D = d_rho0.copy()

    for m in range(n_t):
        f = s * (1.0 - s)
        F = 0.5 * nu * (f[:-1] + f[1:]) - 0.5 * alpha * (s[1:] - s[:-1])
        rhs = np.empty((n1, 1 + nd))
        rhs[1:-1, 0] = h * s[1:-1] + tau * (F[:-1] - F[1:])
        go = oseries[m] if okind == FLUX else oseries[m] * (1.0 - s[0])
        gt = tseries[m] if tkind == FLUX else tseries[m] * s[-1]
        rhs[0, 0] = h * s[0] - tau * F[0] + tau * go
        rhs[-1, 0] = h * s[-1] + tau * F[-1] - tau * gt
        if nd:
            fp = 1.0 - 2.0 * s
            dF = (
                0.5 * d_nu[:, None] * (f[:-1] + f[1:])[None, :]
                + 0.5 * nu * (fp[:-1] * D[:, :-1] + fp[1:] * D[:, 1:])
                - 0.5 * alpha * (D[:, 1:] - D[:, :-1])
            )
            if okind == FLUX:
                dgo = d_oseries[:, m]
            else:
                dgo = d_oseries[:, m] * (1.0 - s[0]) - oseries[m] * D[:, 0]
            if tkind == FLUX:
                dgt = d_tseries[:, m]
            else:
                dgt = d_tseries[:, m] * s[-1] + tseries[m] * D[:, -1]
            rhs[1:-1, 1:] = (h * D[:, 1:-1] + tau * (dF[:, :-1] - dF[:, 1:])).T
            rhs[0, 1:] = h * D[:, 0] - tau * dF[:, 0] + tau * dgo
            rhs[-1, 1:] = h * D[:, -1] + tau * dF[:, -1] - tau * dgt
        sol = solve_banded((1, 1), ab, rhs, overwrite_ab=False, overwrite_b=True,
                           check_finite=False)
        s = sol[:, 0].copy()
        traj[m + 1] = s
        if nd:
            D = np.ascontiguousarray(sol[:, 1:].T)
            dtraj[:, m + 1] = D
    return traj, dtraj
