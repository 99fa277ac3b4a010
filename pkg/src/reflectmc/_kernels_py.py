"""Pure-numpy implementations of the hot kernels.

Used whenever the compiled extension (``reflectmc._kernels``) is missing or
disabled via ``REFLECTMC_PURE_PYTHON=1``. Semantics match the compiled
kernels; the per-step floating point order is kept as close as practical so
branch decisions agree except at knife-edge (measure-zero) states.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

COMPILED = False

# Volume kind codes (mirrors geometry.BALL/CUBE/INTERVAL).
_BALL, _CUBE, _INTERVAL = 0, 1, 2


def _inside(Q, kind, a, b):
    if kind == _BALL:
        return np.einsum("ij,ij->i", Q, Q) <= a * a
    if kind == _CUBE:
        return np.max(np.abs(Q), axis=1) <= a
    q = Q[:, 0]
    return (q >= a) & (q <= b)


def evolve(Q, P, kind, a, b, n_steps, branches_out=None):
    """Advance every row of (Q, P) by ``n_steps`` reflective MC steps in place.

    Forward / reflect / reject branches are tried in order; the reflection
    uses the extended normal field evaluated at the overstepped point.
    Returns per-step branch counts with shape (n_steps, 3); if
    ``branches_out`` (n_steps, N) uint8 is given, the branch code taken by
    each particle is recorded (0 forward, 1 reflect, 2 reject).
    """
    counts = np.zeros((n_steps, 3), dtype=np.int64)
    for t in range(n_steps):
        Q1 = Q + P
        in1 = _inside(Q1, kind, a, b)
        fwd = np.flatnonzero(in1)
        out = np.flatnonzero(~in1)
        Q[fwd] = Q1[fwd]
        n_ref = n_rej = 0
        if out.size:
            Q1o = Q1[out]
            Po = P[out]
            if kind == _BALL:
                # p - 2(p.n)n with n = -q1/|q1| reduces to p - (2 p.q1/|q1|^2) q1
                ssq = np.einsum("ij,ij->i", Q1o, Q1o)
                dots = np.einsum("ij,ij->i", Po, Q1o)
                P1 = Po - (2.0 * dots / ssq)[:, None] * Q1o
            else:
                # cube/interval: the reflection flips the dominant coordinate
                if kind == _CUBE:
                    j = np.argmax(np.abs(Q1o), axis=1)
                else:
                    j = np.zeros(out.size, dtype=np.intp)
                P1 = Po.copy()
                P1[np.arange(out.size), j] *= -1.0
            Q2 = Q1o + P1
            in2 = _inside(Q2, kind, a, b)
            ref = out[in2]
            rej = out[~in2]
            Q[ref] = Q2[in2]
            P[ref] = P1[in2]
            P[rej] *= -1.0
            n_ref, n_rej = ref.size, rej.size
            if branches_out is not None:
                branches_out[t, :] = 0
                branches_out[t, ref] = 1
                branches_out[t, rej] = 2
        elif branches_out is not None:
            branches_out[t, :] = 0
        counts[t, 0] = fwd.size
        counts[t, 1] = n_ref
        counts[t, 2] = n_rej
    return counts


def l1_cost(X, Y):
    """Dense city-block cost matrix between two point clouds."""
    return cdist(X, Y, metric="cityblock")


def l1_cost_self(X):
    """City-block cost matrix of a cloud against itself."""
    return cdist(X, X, metric="cityblock")


def sinkhorn_log(C, log_a, log_b, eps, f, g, max_iter, tol):
    """Stabilized log-domain Sinkhorn sweeps on dual potentials.

    ``f`` and ``g`` are updated in place (g-update then f-update per
    iteration). The convergence measure is the L1 row-marginal violation of
    the plan implied by the pre-update pair, which the f-update yields for
    free. Returns (iterations_used, final_error).
    """
    a = np.exp(log_a)
    inv_eps = 1.0 / eps
    K = C * (-inv_eps)
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        col = K + (log_a + f * inv_eps)[:, None]
        mx = col.max(axis=0)
        g[:] = -eps * (np.log(np.exp(col - mx[None, :]).sum(axis=0)) + mx)
        row = K + (log_b + g * inv_eps)[None, :]
        mx = row.max(axis=1)
        f_new = -eps * (np.log(np.exp(row - mx[:, None]).sum(axis=1)) + mx)
        err = float(np.abs(a * np.expm1((f - f_new) * inv_eps)).sum())
        f[:] = f_new
        if err <= tol:
            break
    return it, err
