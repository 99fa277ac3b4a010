"""Lossless 2-D representation of ball trajectories.

A trajectory in the ball stays in the plane spanned by its initial position
and momentum. Rotating that plane onto the first two coordinate axes (while
keeping the initial-position axis fixed) and dropping the zeroed
coordinates compresses the n-dimensional motion to two dimensions without
losing radial or angular structure. The pushforward of an isotropic
direction onto the circle has density proportional to |sin(theta)|^(n-2),
so in high dimension the motion concentrates at right angles to the start
axis.

High-dimensional ensembles are better *prepared* directly in two dimensions
from the analytic radial/angular laws than projected state by state; the
projection here is primarily the exactness oracle for that preparation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "RotationMap",
    "AngularDensity",
    "build_rotation",
    "disk_project",
    "point_to_angle",
    "angular_density",
    "angle_concentration_std",
    "direct_2d_init",
]

_PLANE_TOL = 1e-8


@dataclass(frozen=True)
class RotationMap:
    """Orthogonal map sending a trajectory plane onto the q1-q2 plane.

    ``R`` is the full n x n orthogonal matrix (including the global
    alignment of the start axis with e1), ``P`` the 2 x n projection that
    keeps the first two coordinates, and ``sign_branch`` records which
    half-disk the momentum axis was rotated to (+1 upper, -1 lower).
    """

    R: np.ndarray
    P: np.ndarray
    sign_branch: int


def _householder_to_e1(q0: np.ndarray) -> np.ndarray:
    """Orthogonal matrix H with H q0 = |q0| e1 (identity if already aligned)."""
    n = q0.shape[0]
    r = np.linalg.norm(q0)
    e1 = np.zeros(n)
    e1[0] = 1.0
    v = q0 - r * e1
    vn = np.linalg.norm(v)
    if vn <= 1e-14 * r:
        return np.eye(n)
    v /= vn
    return np.eye(n) - 2.0 * np.outer(v, v)


def build_rotation(q0, p0) -> RotationMap:
    """Construct the rotation map for a trajectory started at (q0, p0).

    The start axis is aligned with e1 (Householder), the in-plane momentum
    direction is rotated onto +/- e2 according to the sign of its e2
    component (so isotropic ensembles fill both half-disks evenly; an
    exactly vanishing component maps to +e2).
    """
    q0 = np.asarray(q0, dtype=np.float64)
    p0 = np.asarray(p0, dtype=np.float64)
    n = q0.shape[0]
    if n < 2:
        raise ValueError("rotation map needs dimension >= 2")
    if np.linalg.norm(q0) == 0.0:
        raise ValueError("q0 must be non-zero")

    H = _householder_to_e1(q0)
    p = H @ p0
    # in-plane momentum direction, orthogonalized against the start axis
    a = p.copy()
    a[0] = 0.0
    an = np.linalg.norm(a)
    if an <= 1e-12 * np.linalg.norm(p):
        raise ValueError("p0 is parallel to q0: trajectory plane degenerate")
    a /= an

    n2 = np.zeros(n)
    n2[1] = 1.0
    c = a[1]  # a . e2
    sign = 1 if c >= 0.0 else -1

    b = a - c * n2
    bn = np.linalg.norm(b)
    if bn <= 1e-14:
        rot = np.eye(n)  # a already equals +/- e2; both cases need no rotation
    else:
        b /= bn
        phi = np.arctan2(bn, c)
        psi = -phi if sign > 0 else np.pi - phi
        outer_bn = np.outer(b, n2)
        rot = (
            np.eye(n)
            + (outer_bn - outer_bn.T) * np.sin(psi)
            + (np.outer(b, b) + np.outer(n2, n2)) * (np.cos(psi) - 1.0)
        )
    R = rot @ H
    P = np.zeros((2, n))
    P[0, 0] = 1.0
    P[1, 1] = 1.0
    return RotationMap(R=R, P=P, sign_branch=sign)


def disk_project(rmap: RotationMap, q) -> np.ndarray:
    """Project an in-plane point to its 2-D image; lengths are preserved.

    Raises if ``q`` has an out-of-plane component above tolerance; silently
    projecting arbitrary points would hide misuse.
    """
    q = np.asarray(q, dtype=np.float64)
    y = rmap.R @ q
    scale = max(1.0, float(np.linalg.norm(q)))
    if y.shape[0] > 2:
        off = float(np.max(np.abs(y[2:])))
        if off > _PLANE_TOL * scale:
            raise ValueError(
                f"point lies {off:.2e} out of the trajectory plane (tol {_PLANE_TOL:.0e})"
            )
    return y[:2]


def point_to_angle(x) -> float:
    """Angle of a point against the first axis: sgn(x2) * arccos(x1 / |x|).

    A vanishing second component counts as positive, so the antipode maps
    to +pi.
    """
    x = np.asarray(x, dtype=np.float64)
    r = np.linalg.norm(x)
    if r == 0.0:
        raise ValueError("angle undefined at the origin")
    c = np.clip(x[0] / r, -1.0, 1.0)
    sgn = 1.0 if x[1] >= 0.0 else -1.0
    return float(sgn * np.arccos(c))


class AngularDensity:
    """Pushforward density of an isotropic direction onto the circle.

    p(theta) = (1/2) (|S^(n-2)| / |S^(n-1)|) |sin theta|^(n-2) on [-pi, pi].
    Sphere areas are taken through log-gamma so any practical dimension is
    safe from overflow.
    """

    def __init__(self, n: int):
        if n < 3:
            raise ValueError("angular density requires dimension >= 3")
        self.n = int(n)
        # |S^(n-2)|/|S^(n-1)| = Gamma(n/2) / (Gamma((n-1)/2) sqrt(pi))
        self.normalization = 0.5 * float(
            np.exp(gammaln(n / 2.0) - gammaln((n - 1) / 2.0) - 0.5 * np.log(np.pi))
        )

    def pdf(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        return self.normalization * np.abs(np.sin(theta)) ** (self.n - 2)


def angular_density(theta, n: int):
    """Density value(s) of :class:`AngularDensity` at ``theta``."""
    return AngularDensity(n).pdf(theta)


def angle_concentration_std(n: int) -> float:
    """Laplace-approximation standard deviation of the start angle: (n-2)^(-1/2)."""
    if n < 3:
        raise ValueError("requires dimension >= 3")
    return float((n - 2) ** -0.5)


def direct_2d_init(n: int, sigma_p: float, rng: np.random.Generator, size: int | None = None):
    """Prepare ball walkers directly in two dimensions.

    The 2-D radius follows the n-ball radial law, the 2-D speed the norm of
    an n-dimensional Gaussian, and the angle of the momentum against the
    start axis the true pushforward law. Returns (q2, p2) with shapes
    (2,) / (2,) or (size, 2) / (size, 2).
    """
    if n < 3:
        raise ValueError("requires dimension >= 3")
    if not sigma_p > 0:
        raise ValueError("sigma_p must be positive")
    m = 1 if size is None else int(size)
    r0 = rng.random(m) ** (1.0 / n)
    q2 = np.zeros((m, 2))
    q2[:, 0] = r0
    p = sigma_p * rng.standard_normal((m, n))
    speed = np.linalg.norm(p, axis=1)
    c = np.clip(p[:, 0] / speed, -1.0, 1.0)
    s = np.where(p[:, 1] >= 0.0, 1.0, -1.0) * np.sqrt(1.0 - c * c)
    p2 = np.stack([speed * c, speed * s], axis=1)
    if size is None:
        return q2[0], p2[0]
    return q2, p2
