"""Entropy-regularized optimal transport and the debiased divergence.

The cost is fixed to the city-block (L1) distance and the regularizer is
the KL divergence of the plan against the product of the marginals. The
divergence between two clouds alpha, beta is

    SD(alpha, beta) = OT_eps(alpha, beta)
                      - OT_eps(alpha, alpha) / 2 - OT_eps(beta, beta) / 2,

which is zero iff the clouds coincide and non-negative up to solver
tolerance.

Two numerically equivalent solvers are used behind ``ot_eps``: a
matrix-scaling form driven by BLAS matvecs whenever the cost spread over
epsilon is small enough for ``exp(-C/eps)`` to be safe, and stabilized
log-domain sweeps otherwise (tiny epsilon, e.g. the brute-force oracle
tests). Convergence is declared on the L1 marginal violation of the primal
plan, the quantity constrained by the transport polytope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend

__all__ = [
    "EmpiricalDistribution",
    "SinkhornConfig",
    "OtResult",
    "SinkhornConvergenceError",
    "l1_cost_matrix",
    "ot_eps",
    "sinkhorn_divergence",
    "transport_plan",
]

# exp((C.max-C.min)/eps) stays comfortably inside double range below this.
_SCALING_SPREAD_LIMIT = 150.0

_WEIGHT_TOL = 1e-12


class SinkhornConvergenceError(RuntimeError):
    """Raised when a transport solve does not reach the marginal tolerance.

    Carries the best available ``value`` so callers that prefer flagging
    over failing (e.g. time-series evaluation) can still record it.
    """

    def __init__(self, message: str, value: float):
        super().__init__(message)
        self.value = value


class EmpiricalDistribution:
    """Weighted point cloud; weights default to uniform 1/N."""

    def __init__(self, points, weights=None):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a non-empty (N, n) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (pts.shape[0],):
                raise ValueError("weights must have one entry per point")
            if np.any(w < 0):
                raise ValueError("weights must be non-negative")
            if abs(w.sum() - 1.0) > _WEIGHT_TOL:
                raise ValueError("weights must sum to 1")
        self.points = pts
        self.weights = w

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 4.0
    max_iterations: int = 10_000
    marginal_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.marginal_tolerance > 0:
            raise ValueError("marginal_tolerance must be positive")


@dataclass
class OtResult:
    value: float
    marginal_violation: float
    iterations: int
    converged: bool
    potentials: tuple[np.ndarray, np.ndarray] = field(repr=False, default=None)


def l1_cost_matrix(A: EmpiricalDistribution, B: EmpiricalDistribution) -> np.ndarray:
    """C[i, j] = sum_k |x_ik - y_jk|."""
    if A.dim != B.dim:
        raise ValueError(f"dimension mismatch: {A.dim} vs {B.dim}")
    if A is B:
        return _backend.l1_cost_self(A.points)
    return _backend.l1_cost(A.points, B.points)


def _solve_scaling(C, a, b, eps, max_iter, tol, init):
    """Sinkhorn matrix scaling on K = exp(-(C - C.min)/eps); BLAS-bound."""
    c0 = float(C.min())
    K = np.exp((c0 - C) / eps)
    if init is None:
        q = b.copy()
    else:
        f0, g0 = init
        q = b * np.exp(g0 / eps)
    Kq = K @ q
    p = a / Kq
    err = np.inf
    it = 0
    while it < max_iter:
        it += 1
        q = b / (K.T @ p)
        Kq = K @ q
        err = float(np.abs(p * Kq - a).sum())
        p = a / Kq
        if err <= tol:
            break
    f = eps * np.log(p / a) + c0
    g = eps * np.log(q / b)
    return f, g, it, err


def _solve_log(C, a, b, eps, max_iter, tol, init):
    log_a = np.log(a)
    log_b = np.log(b)
    if init is None:
        f = np.zeros_like(a)
        g = np.zeros_like(b)
    else:
        f = np.array(init[0], dtype=np.float64)
        g = np.array(init[1], dtype=np.float64)
    it, err = _backend.sinkhorn_log(
        np.ascontiguousarray(C), log_a, log_b, eps, f, g, max_iter, tol
    )
    return f, g, it, float(err)


def ot_eps(
    A: EmpiricalDistribution,
    B: EmpiricalDistribution,
    config: SinkhornConfig,
    initial_potentials=None,
    cost: np.ndarray | None = None,
) -> OtResult:
    """Entropy-regularized transport cost between two clouds.

    Returns the minimum of <C, pi> + eps*KL(pi | a x b), evaluated from the
    dual potentials at convergence. ``initial_potentials`` warm-starts the
    solve (useful across adjacent time steps); ``cost`` bypasses the cost
    matrix computation when the caller already holds it.
    """
    C = l1_cost_matrix(A, B) if cost is None else cost
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix contains non-finite entries")
    a, b = A.weights, B.weights
    eps = config.epsilon
    spread = float(C.max() - C.min())
    if spread / eps <= _SCALING_SPREAD_LIMIT:
        f, g, it, err = _solve_scaling(
            C, a, b, eps, config.max_iterations, config.marginal_tolerance, initial_potentials
        )
    else:
        f, g, it, err = _solve_log(
            C, a, b, eps, config.max_iterations, config.marginal_tolerance, initial_potentials
        )
    value = float(f @ a + g @ b)
    return OtResult(
        value=value,
        marginal_violation=err,
        iterations=it,
        converged=err <= config.marginal_tolerance,
        potentials=(f, g),
    )


def transport_plan(
    A: EmpiricalDistribution, B: EmpiricalDistribution, config: SinkhornConfig, result: OtResult
) -> np.ndarray:
    """Primal plan reconstructed from dual potentials (testing aid)."""
    f, g = result.potentials
    C = l1_cost_matrix(A, B)
    logits = (f[:, None] + g[None, :] - C) / config.epsilon
    return A.weights[:, None] * B.weights[None, :] * np.exp(logits)


def sinkhorn_divergence(
    A: EmpiricalDistribution,
    B: EmpiricalDistribution,
    config: SinkhornConfig | None = None,
) -> float:
    """Debiased divergence; raises SinkhornConvergenceError on failed solves."""
    config = config or SinkhornConfig()
    r_ab = ot_eps(A, B, config)
    r_aa = ot_eps(A, A, config)
    r_bb = ot_eps(B, B, config)
    value = r_ab.value - 0.5 * r_aa.value - 0.5 * r_bb.value
    if not (r_ab.converged and r_aa.converged and r_bb.converged):
        worst = max(r.marginal_violation for r in (r_ab, r_aa, r_bb))
        raise SinkhornConvergenceError(
            f"sinkhorn solve not converged (marginal violation {worst:.3e})", value
        )
    return value
