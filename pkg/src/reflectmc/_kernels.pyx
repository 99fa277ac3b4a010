# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: reflective MC stepping, L1 cost matrices and
log-domain Sinkhorn sweeps. Python-level API mirrors ``_kernels_py``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log

COMPILED = True

cdef int _BALL = 0
cdef int _CUBE = 1
cdef int _INTERVAL = 2


cdef inline bint _inside_row(double* q, Py_ssize_t n, int kind, double a, double b) nogil:
    cdef Py_ssize_t k
    cdef double s = 0.0
    if kind == _BALL:
        for k in range(n):
            s += q[k] * q[k]
        return s <= a * a
    if kind == _CUBE:
        for k in range(n):
            if fabs(q[k]) > a:
                return False
        return True
    return q[0] >= a and q[0] <= b


def evolve(Q, P, int kind, double a, double b, int n_steps, branches_out=None):
    """Advance every row of (Q, P) by ``n_steps`` reflective MC steps in place.

    See ``_kernels_py.evolve`` for the branch semantics. Returns
    (n_steps, 3) int64 branch counts.
    """
    cdef double[:, ::1] Qv = Q
    cdef double[:, ::1] Pv = P
    cdef Py_ssize_t N = Qv.shape[0]
    cdef Py_ssize_t n = Qv.shape[1]
    counts = np.zeros((n_steps, 3), dtype=np.int64)
    cdef long long[:, ::1] cnt = counts
    cdef unsigned char[:, ::1] br
    cdef bint record = branches_out is not None
    if record:
        br = branches_out

    q1 = np.empty(n, dtype=np.float64)
    p1 = np.empty(n, dtype=np.float64)
    q2 = np.empty(n, dtype=np.float64)
    cdef double[::1] q1v = q1
    cdef double[::1] p1v = p1
    cdef double[::1] q2v = q2

    cdef Py_ssize_t t, i, k, j
    cdef double ssq, dot, coeff, amax, centre
    cdef int branch

    with nogil:
        for t in range(n_steps):
            for i in range(N):
                for k in range(n):
                    q1v[k] = Qv[i, k] + Pv[i, k]
                if _inside_row(&q1v[0], n, kind, a, b):
                    branch = 0
                    for k in range(n):
                        Qv[i, k] = q1v[k]
                else:
                    if kind == _BALL:
                        ssq = 0.0
                        dot = 0.0
                        for k in range(n):
                            ssq += q1v[k] * q1v[k]
                            dot += Pv[i, k] * q1v[k]
                        coeff = 2.0 * dot / ssq
                        for k in range(n):
                            p1v[k] = Pv[i, k] - coeff * q1v[k]
                    else:
                        if kind == _CUBE:
                            j = 0
                            amax = fabs(q1v[0])
                            for k in range(1, n):
                                if fabs(q1v[k]) > amax:
                                    amax = fabs(q1v[k])
                                    j = k
                        else:
                            j = 0
                        for k in range(n):
                            p1v[k] = Pv[i, k]
                        p1v[j] = -p1v[j]
                    for k in range(n):
                        q2v[k] = q1v[k] + p1v[k]
                    if _inside_row(&q2v[0], n, kind, a, b):
                        branch = 1
                        for k in range(n):
                            Qv[i, k] = q2v[k]
                            Pv[i, k] = p1v[k]
                    else:
                        branch = 2
                        for k in range(n):
                            Pv[i, k] = -Pv[i, k]
                cnt[t, branch] += 1
                if record:
                    br[t, i] = <unsigned char> branch
    return counts


def l1_cost(X, Y):
    """Dense city-block cost matrix between two point clouds."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t NX = Xv.shape[0], NY = Yv.shape[0], n = Xv.shape[1]
    out = np.empty((NX, NY), dtype=np.float64)
    cdef double[:, ::1] C = out
    cdef Py_ssize_t i, j, k
    cdef double s
    with nogil:
        for i in range(NX):
            for j in range(NY):
                s = 0.0
                for k in range(n):
                    s += fabs(Xv[i, k] - Yv[j, k])
                C[i, j] = s
    return out


def l1_cost_self(X):
    """City-block cost matrix of a cloud against itself (symmetric fast path)."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], n = Xv.shape[1]
    out = np.zeros((N, N), dtype=np.float64)
    cdef double[:, ::1] C = out
    cdef Py_ssize_t i, j, k
    cdef double s
    with nogil:
        for i in range(N):
            for j in range(i + 1, N):
                s = 0.0
                for k in range(n):
                    s += fabs(Xv[i, k] - Xv[j, k])
                C[i, j] = s
                C[j, i] = s
    return out


def sinkhorn_log(C, log_a, log_b, double eps, f, g, int max_iter, double tol):
    """Stabilized log-domain Sinkhorn sweeps; see ``_kernels_py.sinkhorn_log``."""
    cdef double[:, ::1] Cv = C
    cdef double[::1] la = log_a
    cdef double[::1] lb = log_b
    cdef double[::1] fv = f
    cdef double[::1] gv = g
    cdef Py_ssize_t NA = Cv.shape[0], NB = Cv.shape[1]

    colmax = np.empty(NB, dtype=np.float64)
    colsum = np.empty(NB, dtype=np.float64)
    arga = np.empty(NA, dtype=np.float64)
    cdef double[::1] cm = colmax
    cdef double[::1] cs = colsum
    cdef double[::1] av = arga

    cdef double inv_eps = 1.0 / eps
    cdef double err = np.inf
    cdef Py_ssize_t i, j
    cdef int it = 0
    cdef double v, m, s, fn

    with nogil:
        while it < max_iter:
            it += 1
            # g update: g_j = -eps * LSE_i(log_a_i + (f_i - C_ij)/eps)
            for i in range(NA):
                av[i] = la[i] + fv[i] * inv_eps
            for j in range(NB):
                cm[j] = -1e308
            for i in range(NA):
                for j in range(NB):
                    v = av[i] - Cv[i, j] * inv_eps
                    if v > cm[j]:
                        cm[j] = v
            for j in range(NB):
                cs[j] = 0.0
            for i in range(NA):
                for j in range(NB):
                    cs[j] += exp(av[i] - Cv[i, j] * inv_eps - cm[j])
            for j in range(NB):
                gv[j] = -eps * (log(cs[j]) + cm[j])
            # f update rides along the row-marginal error of the previous pair
            err = 0.0
            for i in range(NA):
                m = -1e308
                for j in range(NB):
                    v = lb[j] + gv[j] * inv_eps - Cv[i, j] * inv_eps
                    if v > m:
                        m = v
                s = 0.0
                for j in range(NB):
                    s += exp(lb[j] + gv[j] * inv_eps - Cv[i, j] * inv_eps - m)
                fn = -eps * (log(s) + m)
                err += fabs(exp(la[i]) * (exp((fv[i] - fn) * inv_eps) - 1.0))
                fv[i] = fn
            if err <= tol:
                break
    return it, err
