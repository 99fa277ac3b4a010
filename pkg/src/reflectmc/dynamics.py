"""Reflective Monte Carlo dynamics.

A step tries, in order: move forward by the momentum; reflect the momentum
off the extended normal field at the overstepped point; reverse the
momentum in place. Time step and mass are fixed to one, so momentum,
velocity and per-step displacement coincide and the momentum scale sigma_p
is the only knob. Trajectories are deterministic; randomness enters only
through momentum draws.

Ensembles evolve many independent chains from a shared start. Each chain
owns a counter-based RNG substream spawned from the master seed, so traces
are bit-reproducible regardless of how the work is scheduled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import _backend
from .geometry import Volume

__all__ = [
    "Branch",
    "ChainState",
    "GmcParams",
    "EnsembleTrace",
    "make_rng",
    "draw_momentum",
    "gmc_step",
    "run_trajectory",
    "run_chain",
    "evolve_ensemble",
    "noisy_momentum_chain",
    "noisy_momentum_ensemble",
    "wavepacket_1d",
    "trajectory_acceptance_rate",
    "write_trace_csv",
    "read_trace_csv",
]


class Branch(IntEnum):
    """Outcome of one step.

    ``probes_*`` count boundary-membership tests consumed by the step.
    ``points_*`` count the points entering the trajectory-wise acceptance
    rate: both proposals and, for a rejected step, the retained position
    (the metric's floor of 1/3 comes from rejected steps contributing one
    inside point out of three).
    """

    FORWARD = 0
    REFLECT = 1
    REJECT = 2

    @property
    def probes_total(self) -> int:
        return 1 if self is Branch.FORWARD else 2

    @property
    def probes_inside(self) -> int:
        return 0 if self is Branch.REJECT else 1

    @property
    def points_total(self) -> int:
        return (1, 2, 3)[self.value]

    @property
    def points_inside(self) -> int:
        return 1


_POINTS_TOTAL = np.array([1, 2, 3], dtype=np.int64)
_POINTS_INSIDE = np.array([1, 1, 1], dtype=np.int64)


@dataclass
class ChainState:
    """Position and momentum of a single walker."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.q.shape != self.p.shape:
            raise ValueError("position and momentum shapes differ")


@dataclass(frozen=True)
class GmcParams:
    """Ensemble evolution parameters.

    sigma_p: per-component momentum standard deviation (the step size).
    L: steps per trajectory before the momenta are re-randomized.
    snapshot_stride: record positions every this many steps.
    """

    sigma_p: float
    L: int = 1
    snapshot_stride: int = 1
    record_momenta: bool = False

    def __post_init__(self):
        if not self.sigma_p > 0:
            raise ValueError("sigma_p must be positive")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")


@dataclass
class EnsembleTrace:
    """Snapshots of an ensemble plus the per-step branch record.

    positions has shape (n_snapshots, n_particles, dim); branches has shape
    (n_steps, n_particles) with Branch codes.
    """

    times: np.ndarray
    positions: np.ndarray
    branches: np.ndarray
    volume: Volume
    momenta: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    @property
    def n_steps(self) -> int:
        return self.branches.shape[0]

    def branch_counts(self) -> np.ndarray:
        """(n_steps, 3) count of forward/reflect/reject per step."""
        out = np.zeros((self.n_steps, 3), dtype=np.int64)
        for code in (0, 1, 2):
            out[:, code] = (self.branches == code).sum(axis=1)
        return out


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) from an integer seed or tuple of ints.

    Existing Generator / SeedSequence instances pass through unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    if isinstance(seed, (tuple, list)):
        entropy = tuple(int(s) for s in seed)
    else:
        entropy = int(seed)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def draw_momentum(n: int, sigma_p: float, rng: np.random.Generator, size: int | None = None):
    """I.i.d. zero-mean Gaussian momentum with per-component std sigma_p."""
    if not sigma_p > 0:
        raise ValueError("sigma_p must be positive")
    if size is None:
        return sigma_p * rng.standard_normal(n)
    return sigma_p * rng.standard_normal((size, n))


def _evolve_rows(Q, P, volume, n_steps, branches_out=None):
    kind, a, b = volume.kernel_params()
    return _backend.evolve(Q, P, kind, a, b, n_steps, branches_out)


def gmc_step(state: ChainState, volume: Volume) -> tuple[ChainState, Branch]:
    """One reflective MC step; returns the new state and the branch taken."""
    if not volume.contains(state.q):
        raise ValueError("state position lies outside the volume")
    Q = state.q[None, :].copy()
    P = state.p[None, :].copy()
    br = np.zeros((1, 1), dtype=np.uint8)
    _evolve_rows(Q, P, volume, 1, br)
    return ChainState(Q[0], P[0]), Branch(int(br[0, 0]))


def run_trajectory(state: ChainState, volume: Volume, L: int):
    """L deterministic steps; returns (path of L+1 states, branch array)."""
    if L < 0:
        raise ValueError("L must be non-negative")
    if not volume.contains(state.q):
        raise ValueError("state position lies outside the volume")
    path = [ChainState(state.q.copy(), state.p.copy())]
    branches = np.zeros(L, dtype=np.uint8)
    if L == 0:
        return path, branches
    Q = state.q[None, :].copy()
    P = state.p[None, :].copy()
    br = np.zeros((L, 1), dtype=np.uint8)
    for t in range(L):
        _evolve_rows(Q, P, volume, 1, br[t : t + 1])
        path.append(ChainState(Q[0].copy(), P[0].copy()))
    branches[:] = br[:, 0]
    return path, branches


def _snapshot_times(n_steps: int, stride: int) -> np.ndarray:
    return np.arange(0, n_steps + 1, stride, dtype=np.int64)


def _run_ensemble(Q, P, volume, n_steps, stride, record_momenta, redraw=None, L=None,
                  post_step=None):
    """Shared driver: advances (Q, P), records snapshots and branches.

    ``redraw`` is called as redraw(P) at every multiple of L (not at the
    final step); ``post_step`` as post_step(P, t) after each step (noisy
    momentum updates force per-step segments).
    """
    N, dim = Q.shape
    times = _snapshot_times(n_steps, stride)
    positions = np.empty((len(times), N, dim))
    momenta = np.empty((len(times), N, dim)) if record_momenta else None
    branches = np.zeros((n_steps, N), dtype=np.uint8)

    snap = 0
    positions[0] = Q
    if momenta is not None:
        momenta[0] = P
    snap += 1

    t = 0
    while t < n_steps:
        next_snap = (t // stride + 1) * stride
        bounds = [next_snap, n_steps]
        if L is not None:
            bounds.append((t // L + 1) * L)
        t_next = min(bounds)
        seg = t_next - t if post_step is None else 1
        t_next = t + seg
        _evolve_rows(Q, P, volume, seg, branches[t:t_next])
        if post_step is not None:
            post_step(P, t_next)
        t = t_next
        # re-randomize before the snapshot: the state at time t carries the
        # momentum that produces q(t+1)
        if L is not None and t < n_steps and t % L == 0:
            redraw(P)
        if t % stride == 0 and snap < len(times):
            positions[snap] = Q
            if momenta is not None:
                momenta[snap] = P
            snap += 1
    return times, positions, momenta, branches


def run_chain(q0, params: GmcParams, volume: Volume, n_trajectories: int, rng) -> EnsembleTrace:
    """Single chain: momenta freshly drawn at t = 0, L, 2L, ...

    With n_trajectories=1 this is exactly draw_momentum + run_trajectory.
    """
    rng = make_rng(rng)
    q0 = np.asarray(q0, dtype=np.float64)
    if not volume.contains(q0):
        raise ValueError("q0 lies outside the volume")
    Q = q0[None, :].copy()
    P = draw_momentum(volume.dim, params.sigma_p, rng)[None, :]
    n_steps = n_trajectories * params.L

    def redraw(Pbuf):
        Pbuf[0] = draw_momentum(volume.dim, params.sigma_p, rng)

    times, positions, momenta, branches = _run_ensemble(
        Q, P, volume, n_steps, params.snapshot_stride, params.record_momenta,
        redraw=redraw, L=params.L,
    )
    return EnsembleTrace(times, positions, branches, volume, momenta,
                         meta={"sigma_p": params.sigma_p, "L": params.L})


def evolve_ensemble(q0, n_particles: int, params: GmcParams, volume: Volume,
                    rng, n_steps: int) -> EnsembleTrace:
    """N independent chains from a shared (Dirac) start, run for n_steps.

    Chain i draws all its momenta from substream i spawned off the master
    generator, so the trace is independent of evaluation order. Momenta are
    re-randomized at t = 0 (the initial draw) and every L steps thereafter.
    """
    rng = make_rng(rng)
    q0 = np.asarray(q0, dtype=np.float64)
    if not volume.contains(q0):
        raise ValueError("q0 lies outside the volume")
    if n_particles < 1:
        raise ValueError("need at least one particle")
    streams = rng.spawn(n_particles)
    Q = np.tile(q0, (n_particles, 1))
    P = np.stack([draw_momentum(volume.dim, params.sigma_p, s) for s in streams])

    def redraw(Pbuf):
        for i, s in enumerate(streams):
            Pbuf[i] = draw_momentum(volume.dim, params.sigma_p, s)

    times, positions, momenta, branches = _run_ensemble(
        Q, P, volume, n_steps, params.snapshot_stride, params.record_momenta,
        redraw=redraw, L=params.L,
    )
    return EnsembleTrace(times, positions, branches, volume, momenta,
                         meta={"sigma_p": params.sigma_p, "L": params.L,
                               "n_particles": n_particles})


def evolve_states(Q, P, volume: Volume, n_steps: int, snapshot_stride: int = 1,
                  record_momenta: bool = False, meta: dict | None = None) -> EnsembleTrace:
    """Evolve explicitly prepared (positions, momenta) without re-randomization.

    Used when the initial phase-space ensemble is constructed analytically
    (2-D ball preparation, wave packets) or drawn stationary (acceptance
    rate measurements). Input arrays are not modified.
    """
    Q = np.array(Q, dtype=np.float64, order="C")
    P = np.array(P, dtype=np.float64, order="C")
    if Q.shape != P.shape or Q.ndim != 2:
        raise ValueError("Q and P must be matching (N, n) arrays")
    if Q.shape[1] != volume.dim:
        raise ValueError("state dimension does not match the volume")
    if not np.all(volume.contains_many(Q)):
        raise ValueError("all start positions must lie inside the volume")
    times, positions, momenta, branches = _run_ensemble(
        Q, P, volume, n_steps, snapshot_stride, record_momenta,
    )
    return EnsembleTrace(times, positions, branches, volume, momenta,
                         meta=dict(meta or {}))


def noisy_momentum_chain(q0, sigma_p: float, sigma_dp: float, n_steps: int,
                         volume: Volume, rng, snapshot_stride: int = 1,
                         record_momenta: bool = False) -> EnsembleTrace:
    """Single chain alternating a reflective step with momentum noise.

    The momentum is initialized from N(0, sigma_p^2) once; after every step
    an independent N(0, sigma_dp^2) kick is added instead of periodic full
    re-randomization. With sigma_dp = 0 this is exactly one long trajectory.
    """
    rng = make_rng(rng)
    q0 = np.asarray(q0, dtype=np.float64)
    if not volume.contains(q0):
        raise ValueError("q0 lies outside the volume")
    if sigma_dp < 0:
        raise ValueError("sigma_dp must be non-negative")
    Q = q0[None, :].copy()
    P = draw_momentum(volume.dim, sigma_p, rng)[None, :]

    post = None
    if sigma_dp > 0:
        def post(Pbuf, _t):
            Pbuf[0] += sigma_dp * rng.standard_normal(volume.dim)

    times, positions, momenta, branches = _run_ensemble(
        Q, P, volume, n_steps, snapshot_stride, record_momenta, post_step=post,
    )
    return EnsembleTrace(times, positions, branches, volume, momenta,
                         meta={"sigma_p": sigma_p, "sigma_dp": sigma_dp})


def noisy_momentum_ensemble(q0, n_particles: int, sigma_p: float, sigma_dp: float,
                            n_steps: int, volume: Volume, rng,
                            snapshot_stride: int = 1) -> EnsembleTrace:
    """N independent noisy-momentum chains from a shared start."""
    rng = make_rng(rng)
    q0 = np.asarray(q0, dtype=np.float64)
    if not volume.contains(q0):
        raise ValueError("q0 lies outside the volume")
    if sigma_dp < 0:
        raise ValueError("sigma_dp must be non-negative")
    streams = rng.spawn(n_particles)
    Q = np.tile(q0, (n_particles, 1))
    P = np.stack([draw_momentum(volume.dim, sigma_p, s) for s in streams])

    post = None
    if sigma_dp > 0:
        def post(Pbuf, _t):
            for i, s in enumerate(streams):
                Pbuf[i] += sigma_dp * s.standard_normal(volume.dim)

    times, positions, momenta, branches = _run_ensemble(
        Q, P, volume, n_steps, snapshot_stride, False, post_step=post,
    )
    return EnsembleTrace(times, positions, branches, volume, momenta,
                         meta={"sigma_p": sigma_p, "sigma_dp": sigma_dp,
                               "n_particles": n_particles})


def wavepacket_1d(x0: float, n_emulated: int, sigma_p: float, n_particles: int,
                  n_steps: int, rng, sign: int | None = None) -> EnsembleTrace:
    """1-D wave-packet model on the interval [-1, 1].

    Every particle starts at x0 with speed drawn as the norm of an
    n_emulated-dimensional Gaussian (per-component std sigma_p), emulating
    the concentrated radial momentum law of the high-dimensional problem.
    Signs are drawn uniformly unless ``sign`` (+1/-1) is given.
    """
    if not -1.0 < x0 < 1.0:
        raise ValueError("x0 must lie strictly inside (-1, 1)")
    rng = make_rng(rng)
    volume = Volume.interval(-1.0, 1.0)
    speeds = sigma_p * np.linalg.norm(
        rng.standard_normal((n_particles, n_emulated)), axis=1
    )
    if sign is None:
        signs = rng.integers(0, 2, n_particles) * 2.0 - 1.0
    else:
        signs = np.full(n_particles, float(np.sign(sign)))
    Q = np.full((n_particles, 1), float(x0))
    P = (speeds * signs)[:, None]
    times, positions, momenta, branches = _run_ensemble(
        Q, P, volume, n_steps, 1, False,
    )
    return EnsembleTrace(times, positions, branches, volume, momenta,
                         meta={"sigma_p": sigma_p, "n_emulated": n_emulated,
                               "x0": x0})


def trajectory_acceptance_rate(branches) -> float:
    """Fraction of trajectory points (proposals plus retained positions on
    rejection) lying inside the volume.

    Forward contributes 1/1, reflect 1/2, reject 1/3; the value therefore
    lives in [1/3, 1]. Accepts Branch sequences or integer code arrays of
    any shape (an ensemble's (n_steps, N) record may be passed directly).
    """
    codes = np.asarray(branches, dtype=np.int64).ravel()
    if codes.size == 0:
        raise ValueError("empty branch sequence")
    if codes.min() < 0 or codes.max() > 2:
        raise ValueError("branch codes must be 0, 1 or 2")
    counts = np.bincount(codes, minlength=3)
    inside = int((counts * _POINTS_INSIDE).sum())
    total = int((counts * _POINTS_TOTAL).sum())
    return inside / total


# -- columnar serialization -------------------------------------------------


def write_trace_csv(trace: EnsembleTrace, path) -> None:
    """Columnar trace file: commented JSON header, then one row per
    (snapshot, particle): t, particle, q components[, p components], branch.

    The branch column holds the code of the step that produced the
    snapshot (the last step before it when the stride exceeds one); -1 for
    the initial snapshot.
    """
    header = {
        "format": "reflectmc-trace",
        "version": 1,
        "volume": trace.volume.to_config(),
        "meta": trace.meta,
        "n_particles": trace.n_particles,
        "n_steps": trace.n_steps,
        "has_momenta": trace.momenta is not None,
    }
    dim = trace.dim
    cols = ["t", "particle"]
    cols += [f"q{k}" for k in range(dim)]
    if trace.momenta is not None:
        cols += [f"p{k}" for k in range(dim)]
    cols.append("branch")
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(cols) + "\n")
        for s, t in enumerate(trace.times):
            t = int(t)
            for i in range(trace.n_particles):
                row = [str(t), str(i)]
                row += [repr(float(v)) for v in trace.positions[s, i]]
                if trace.momenta is not None:
                    row += [repr(float(v)) for v in trace.momenta[s, i]]
                row.append(str(int(trace.branches[t - 1, i])) if t > 0 else "-1")
                fh.write(",".join(row) + "\n")


def read_trace_csv(path) -> EnsembleTrace:
    """Inverse of :func:`write_trace_csv`.

    The full per-step branch record is recoverable only for stride-1
    traces; otherwise the branches array is left empty.
    """
    with open(path) as fh:
        header = json.loads(fh.readline().lstrip("# "))
        fh.readline()  # column names
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    volume = Volume.from_config(header["volume"])
    n_particles = int(header["n_particles"])
    n_steps = int(header["n_steps"])
    dim = volume.dim
    times = np.unique(data[:, 0].astype(np.int64))
    S = len(times)
    order = np.lexsort((data[:, 1], data[:, 0]))
    data = data[order]
    positions = data[:, 2 : 2 + dim].reshape(S, n_particles, dim)
    momenta = None
    if header["has_momenta"]:
        momenta = data[:, 2 + dim : 2 + 2 * dim].reshape(S, n_particles, dim)
    branch_col = data[:, -1].astype(np.int64).reshape(S, n_particles)
    stride_one = S == n_steps + 1 and np.array_equal(times, np.arange(S))
    if stride_one:
        branches = branch_col[1:].astype(np.uint8)
    else:
        branches = np.zeros((0, n_particles), dtype=np.uint8)
    return EnsembleTrace(times, positions, branches, volume, momenta,
                         meta=header.get("meta", {}))
