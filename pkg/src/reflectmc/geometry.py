"""Sampling volumes (ball, cube, interval): membership, outward-extended
normal fields, exact uniform samplers and chord-length estimates.

All volumes are centred at the origin except the interval, which may have
arbitrary bounds. Boundary points count as inside: membership is closed, so
round-off at the boundary never causes spurious rejections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Volume",
    "DegenerateNormalError",
    "BALL",
    "CUBE",
    "INTERVAL",
]

# Integer codes shared with the stepping kernels.
BALL = 0
CUBE = 1
INTERVAL = 2

_KIND_NAMES = {BALL: "ball", CUBE: "cube", INTERVAL: "interval"}


class DegenerateNormalError(ValueError):
    """The normal field is undefined at the requested point (e.g. the origin)."""


@dataclass(frozen=True)
class Volume:
    """A supported region of R^n.

    Construct through :meth:`ball`, :meth:`cube` or :meth:`interval`. The
    interval is the one-dimensional specialization of the cube with
    arbitrary bounds; when centred, its membership and normal semantics
    coincide with ``cube(1, half_width)``.
    """

    kind: int
    dim: int
    radius: float = 1.0
    half_width: float = 1.0
    bounds: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.kind not in _KIND_NAMES:
            raise ValueError(f"unknown volume kind {self.kind}")
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind == BALL and not self.radius > 0:
            raise ValueError("ball radius must be positive")
        if self.kind == CUBE and not self.half_width > 0:
            raise ValueError("cube half_width must be positive")
        if self.kind == INTERVAL:
            lo, hi = self.bounds
            if not lo < hi:
                raise ValueError("interval bounds must satisfy lo < hi")
            if self.dim != 1:
                raise ValueError("interval volumes are one-dimensional")

    # -- constructors -------------------------------------------------

    @classmethod
    def ball(cls, dim: int, radius: float = 1.0) -> "Volume":
        return cls(kind=BALL, dim=dim, radius=float(radius))

    @classmethod
    def cube(cls, dim: int, half_width: float = 1.0) -> "Volume":
        return cls(kind=CUBE, dim=dim, half_width=float(half_width))

    @classmethod
    def interval(cls, lo: float = -1.0, hi: float = 1.0) -> "Volume":
        return cls(kind=INTERVAL, dim=1, bounds=(float(lo), float(hi)))

    # -- descriptors ---------------------------------------------------

    @property
    def kind_name(self) -> str:
        return _KIND_NAMES[self.kind]

    def kernel_params(self) -> tuple[int, float, float]:
        """(kind, a, b) triple consumed by the stepping kernels."""
        if self.kind == BALL:
            return BALL, self.radius, 0.0
        if self.kind == CUBE:
            return CUBE, self.half_width, 0.0
        lo, hi = self.bounds
        return INTERVAL, lo, hi

    def to_config(self) -> dict:
        """JSON-friendly description used in experiment configs."""
        if self.kind == BALL:
            return {"kind": "ball", "dim": self.dim, "radius": self.radius}
        if self.kind == CUBE:
            return {"kind": "cube", "dim": self.dim, "half_width": self.half_width}
        return {"kind": "interval", "dim": 1, "bounds": list(self.bounds)}

    @classmethod
    def from_config(cls, spec: dict) -> "Volume":
        kind = spec.get("kind")
        if kind == "ball":
            return cls.ball(int(spec["dim"]), float(spec.get("radius", 1.0)))
        if kind == "cube":
            return cls.cube(int(spec["dim"]), float(spec.get("half_width", 1.0)))
        if kind == "interval":
            lo, hi = spec.get("bounds", (-1.0, 1.0))
            return cls.interval(float(lo), float(hi))
        raise ValueError(f"volume.kind must be ball|cube|interval, got {kind!r}")

    # -- membership and normals ----------------------------------------

    def _check_dim(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if q.shape[-1] != self.dim:
            raise ValueError(f"point has dimension {q.shape[-1]}, volume has {self.dim}")
        return q

    def contains(self, q) -> bool:
        """Closed membership test (boundary points are inside)."""
        return bool(self.contains_many(self._check_dim(q)[None, :])[0])

    def contains_many(self, Q: np.ndarray) -> np.ndarray:
        """Vectorized membership for an (m, n) array of points."""
        Q = self._check_dim(Q)
        if self.kind == BALL:
            return np.einsum("ij,ij->i", Q, Q) <= self.radius * self.radius
        if self.kind == CUBE:
            return np.max(np.abs(Q), axis=1) <= self.half_width
        lo, hi = self.bounds
        q = Q[:, 0]
        return (q >= lo) & (q <= hi)

    def normal_field(self, q) -> np.ndarray:
        """Unit vector of the inward-extended normal field at ``q``.

        Ball: -q/|q|. Cube: -sign(q_j) e_j with j = argmax_i |q_i|, ties
        broken to the lowest index. Interval: toward the centre.
        """
        return self.normals_many(self._check_dim(q)[None, :])[0]

    def normals_many(self, Q: np.ndarray) -> np.ndarray:
        Q = self._check_dim(Q)
        if self.kind == BALL:
            norms = np.sqrt(np.einsum("ij,ij->i", Q, Q))
            if np.any(norms == 0.0):
                raise DegenerateNormalError("ball normal undefined at the origin")
            return -Q / norms[:, None]
        if self.kind == CUBE:
            absQ = np.abs(Q)
            j = np.argmax(absQ, axis=1)  # first occurrence = lowest index on ties
            rows = np.arange(Q.shape[0])
            if np.any(absQ[rows, j] == 0.0):
                raise DegenerateNormalError("cube normal undefined at the origin")
            N = np.zeros_like(Q)
            N[rows, j] = -np.sign(Q[rows, j])
            return N
        lo, hi = self.bounds
        centre = 0.5 * (lo + hi)
        d = Q[:, 0] - centre
        if np.any(d == 0.0):
            raise DegenerateNormalError("interval normal undefined at the centre")
        return -np.sign(d)[:, None]

    # -- sampling -------------------------------------------------------

    def sample_uniform(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Exact uniform draw(s); shape (n,) or (size, n).

        The ball uses the radius transform R*U^(1/n) on an isotropic
        direction; rejection sampling would be hopeless in high dimension.
        """
        m = 1 if size is None else int(size)
        if self.kind == BALL:
            z = rng.standard_normal((m, self.dim))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            r = self.radius * rng.random(m) ** (1.0 / self.dim)
            out = z * r[:, None]
        elif self.kind == CUBE:
            out = rng.uniform(-self.half_width, self.half_width, (m, self.dim))
        else:
            lo, hi = self.bounds
            out = rng.uniform(lo, hi, (m, 1))
        return out[0] if size is None else out

    # -- chord lengths ---------------------------------------------------

    def chord_length(self, x0, direction) -> float:
        """Length of {x0 + s*direction} intersected with the volume.

        ``x0`` must lie inside and ``direction`` must be unit length.
        """
        x0 = self._check_dim(x0)
        d = self._check_dim(direction)
        if not self.contains(x0):
            raise ValueError("chord origin lies outside the volume")
        nrm = float(np.linalg.norm(d))
        if abs(nrm - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector")
        return float(self.chord_lengths_many(x0[None, :], d[None, :])[0])

    def chord_lengths_many(self, X0: np.ndarray, D: np.ndarray) -> np.ndarray:
        """Closed-form chords for (m, n) origins and unit directions."""
        X0 = self._check_dim(X0)
        D = self._check_dim(D)
        if self.kind == BALL:
            # roots of |x0 + s d|^2 = R^2 for unit d
            b = np.einsum("ij,ij->i", X0, D)
            c = np.einsum("ij,ij->i", X0, X0) - self.radius**2
            disc = np.maximum(b * b - c, 0.0)
            return 2.0 * np.sqrt(disc)
        if self.kind == CUBE:
            lo, hi = -self.half_width, self.half_width
        else:
            lo, hi = self.bounds
        with np.errstate(divide="ignore", invalid="ignore"):
            s1 = (lo - X0) / D
            s2 = (hi - X0) / D
        lower = np.minimum(s1, s2)
        upper = np.maximum(s1, s2)
        # axes with d_i == 0 impose no constraint (x0 inside keeps them in range)
        zero = D == 0.0
        lower = np.where(zero, -np.inf, lower)
        upper = np.where(zero, np.inf, upper)
        smin = np.max(lower, axis=1)
        smax = np.min(upper, axis=1)
        return np.maximum(smax - smin, 0.0)

    def mean_chord_length(
        self, n_samples: int, rng: np.random.Generator
    ) -> tuple[float, float]:
        """Monte Carlo mean chord (isotropic direction, uniform origin).

        Returns (mean, standard error).
        """
        if n_samples < 2:
            raise ValueError("need at least 2 samples")
        X0 = self.sample_uniform(rng, size=n_samples)
        D = rng.standard_normal((n_samples, self.dim))
        D /= np.linalg.norm(D, axis=1, keepdims=True)
        ell = self.chord_lengths_many(X0, D)
        mean = float(np.mean(ell))
        stderr = float(np.std(ell, ddof=1) / np.sqrt(n_samples))
        return mean, stderr
