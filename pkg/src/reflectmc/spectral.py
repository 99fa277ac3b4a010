"""Mixing diagnostics built on the divergence time series.

The divergence of the evolving ensemble against a fixed uniform reference
is evaluated at every snapshot; its one-sided periodogram carries the
resonance content. The spectral entropy of the normalized periodogram
separates fluid-like mixing (many frequencies) from the fully stuck regime
(constant divergence, entropy zero), and the entropy threshold crossing as
a function of the step size traces the critical boundary, which follows a
power law in dimension.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .geometry import Volume
from .sinkhorn import EmpiricalDistribution, SinkhornConfig, ot_eps

__all__ = [
    "SDTimeSeries",
    "Spectrum",
    "SdEngine",
    "sd_time_series",
    "psd",
    "spectral_entropy",
    "resonance_entropy",
    "f_diag",
    "f_super",
    "f_broad",
    "dominant_frequency",
    "PowerLawFit",
    "power_law_fit",
    "PhaseMapProtocol",
    "PhaseMapResult",
    "phase_map",
    "critical_sigma",
]


@dataclass
class SDTimeSeries:
    """Divergence against the reference at each snapshot time (unit steps)."""

    times: np.ndarray
    values: np.ndarray
    converged: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class Spectrum:
    """One-sided periodogram; frequencies in cycles per step, up to 0.5."""

    frequencies: np.ndarray
    power: np.ndarray
    normalized: bool = False


@dataclass
class SinkhornStats:
    """Aggregate convergence bookkeeping across many transport solves."""

    solves: int = 0
    max_iterations_used: int = 0
    not_converged: int = 0

    def update(self, result) -> None:
        self.solves += 1
        self.max_iterations_used = max(self.max_iterations_used, result.iterations)
        if not result.converged:
            self.not_converged += 1

    def merge(self, other: "SinkhornStats") -> None:
        self.solves += other.solves
        self.max_iterations_used = max(self.max_iterations_used, other.max_iterations_used)
        self.not_converged += other.not_converged

    def to_dict(self) -> dict:
        return {
            "solves": self.solves,
            "max_iterations_used": self.max_iterations_used,
            "not_converged": self.not_converged,
        }


class SdEngine:
    """Debiased divergence against a fixed reference cloud.

    Caches the reference self-transport term and warm-starts the potentials
    of consecutive evaluations, which cuts iteration counts drastically on
    slowly varying snapshot sequences.
    """

    def __init__(self, reference: EmpiricalDistribution, config: SinkhornConfig | None = None):
        self.reference = reference
        self.config = config or SinkhornConfig()
        self.stats = SinkhornStats()
        self._r_bb = ot_eps(reference, reference, self.config)
        self.stats.update(self._r_bb)
        self._warm_ab = None
        self._warm_aa = None

    def divergence(self, points) -> tuple[float, bool]:
        """(value, converged) for a cloud given as ED or (N, n) array."""
        A = points if isinstance(points, EmpiricalDistribution) else EmpiricalDistribution(points)
        r_ab = ot_eps(A, self.reference, self.config, initial_potentials=self._warm_ab)
        r_aa = ot_eps(A, A, self.config, initial_potentials=self._warm_aa)
        self._warm_ab = r_ab.potentials
        self._warm_aa = r_aa.potentials
        self.stats.update(r_ab)
        self.stats.update(r_aa)
        value = r_ab.value - 0.5 * r_aa.value - 0.5 * self._r_bb.value
        ok = r_ab.converged and r_aa.converged and self._r_bb.converged
        return value, ok


def sd_time_series(
    trace: dynamics.EnsembleTrace,
    reference: EmpiricalDistribution,
    config: SinkhornConfig | None = None,
) -> SDTimeSeries:
    """Evaluate the divergence of every snapshot against a fixed reference.

    Non-converged solves flag their time point rather than dropping it.
    """
    if trace.dim != reference.dim:
        raise ValueError("trace and reference dimensions differ")
    engine = SdEngine(reference, config)
    values = np.empty(len(trace.times))
    converged = np.empty(len(trace.times), dtype=bool)
    for s in range(len(trace.times)):
        values[s], converged[s] = engine.divergence(trace.positions[s])
    return SDTimeSeries(
        times=np.asarray(trace.times),
        values=values,
        converged=converged,
        meta={
            **trace.meta,
            "epsilon": engine.config.epsilon,
            "n_reference": reference.n_points,
            "sinkhorn": engine.stats.to_dict(),
        },
    )


def psd(series) -> Spectrum:
    """One-sided periodogram of the raw (un-detrended) series.

    Interior bins carry doubled weight so the total power equals
    sum(x^2)/T (Parseval); the DC bin is kept because a constant series
    must map to zero spectral entropy.
    """
    values = series.values if isinstance(series, SDTimeSeries) else np.asarray(series, float)
    T = len(values)
    if T < 8:
        raise ValueError("series too short for a meaningful periodogram")
    F = np.fft.rfft(values)
    power = np.abs(F) ** 2 / (T * T)
    weights = np.full(len(power), 2.0)
    weights[0] = 1.0
    if T % 2 == 0:
        weights[-1] = 1.0
    return Spectrum(frequencies=np.fft.rfftfreq(T, d=1.0), power=weights * power)


def spectral_entropy(spectrum: Spectrum) -> float:
    """Shannon entropy (nats) of the normalized periodogram, DC included.

    Zero iff the power sits in a single bin; log(K) for K equal bins.
    """
    total = float(spectrum.power.sum())
    if not total > 0.0:
        raise ValueError("spectrum has no power")
    p = spectrum.power / total
    p = p[p > 0.0]
    return float(-(p * np.log(p)).sum())


# Oscillation power below this fraction of the raw mean square counts as a
# constant series; well above solver tolerance noise (~1e-14 relative) and
# far below any physical resonance (>= 1e-6 relative).
_VARIATION_FLOOR = 1e-10


def resonance_entropy(values) -> float:
    """Spectral entropy of the series with its mean removed.

    The divergence of an unmixed ensemble sits on a large plateau; entropy
    of the raw periodogram is then dominated by the DC bin and carries no
    frequency information. Removing the mean leaves the resonance content,
    while a (numerically) constant series still maps to exactly zero.
    """
    values = np.asarray(values, dtype=np.float64)
    x = values - values.mean()
    spectrum = psd(x)
    if spectrum.power.sum() <= _VARIATION_FLOOR * float(np.mean(values**2)):
        return 0.0
    return spectral_entropy(spectrum)


def f_diag(sigma_p: float, n: int, R: float = 1.0) -> float:
    """Antipodal straight-line oscillation frequency: sigma_p sqrt(n) / (2R)."""
    return sigma_p * math.sqrt(n) / (2.0 * R)


def f_super(sigma_p: float, n: int, R: float = 1.0) -> float:
    """Boundary-skimming oscillation frequency.

    (1/pi) * (atan(u) + acos(1/sqrt(1+u^2))) with u = sigma_p sqrt(n) / R;
    exceeds f_diag because reflected steps advance twice per step.
    """
    u = sigma_p * math.sqrt(n) / R
    return (math.atan(u) + math.acos(1.0 / math.sqrt(1.0 + u * u))) / math.pi


def f_broad(sigma_p: float) -> float:
    """Spectral broadening scale from wave-front dispersion: sigma_p / sqrt(2)."""
    if not sigma_p > 0:
        raise ValueError("sigma_p must be positive")
    return sigma_p / math.sqrt(2.0)


def dominant_frequency(spectrum: Spectrum, exclude_dc: bool = False) -> tuple[float, float]:
    """(frequency, power) of the strongest bin; ties go to the lowest bin."""
    power = spectrum.power
    freqs = spectrum.frequencies
    if len(power) == 0:
        raise ValueError("empty spectrum")
    if exclude_dc:
        power = power[1:]
        freqs = freqs[1:]
        if len(power) == 0:
            raise ValueError("spectrum has only the DC bin")
    k = int(np.argmax(power))
    return float(freqs[k]), float(power[k])


@dataclass
class PowerLawFit:
    exponent: float
    stderr: float
    prefactor: float


def power_law_fit(xs, ys) -> PowerLawFit:
    """OLS fit of log(y) = exponent * log(x) + log(prefactor)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.size < 3:
        raise ValueError("need at least 3 matching points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit requires positive inputs")
    lx = np.log(xs)
    ly = np.log(ys)
    dx = lx - lx.mean()
    denom = float(np.dot(dx, dx))
    slope = float(np.dot(dx, ly - ly.mean()) / denom)
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (slope * lx + intercept)
    s2 = float(np.dot(resid, resid)) / (xs.size - 2)
    return PowerLawFit(
        exponent=slope,
        stderr=math.sqrt(s2 / denom),
        prefactor=math.exp(intercept),
    )


# -- phase map ---------------------------------------------------------------


@dataclass(frozen=True)
class PhaseMapProtocol:
    """Per-cell ensemble protocol for the entropy map.

    Each (n, sigma_p) cell runs ``seeds_per_cell`` independent ensembles
    (fresh start point and momenta), averages their mean-removed
    periodograms and takes the spectral entropy of the average. L defaults
    to the full step count: the resonances of interest live inside a
    single trajectory.

    The default threshold of 1.2 nats detects the collapse of the spectrum
    onto the single quarter-frequency line (the rejection-dominated
    crossover, which scales with the mean chord length over sqrt(n)); the
    fully frozen phase sits at exactly zero entropy.
    """

    n_particles: int = 300
    n_steps: int = 128
    seeds_per_cell: int = 8
    epsilon: float = 4.0
    entropy_threshold: float = 1.2
    base_seed: int = 0
    L: int | None = None
    volume_kind: str = "cube"


@dataclass
class PhaseMapResult:
    n_grid: np.ndarray
    sigma_grid: np.ndarray
    entropy: np.ndarray  # (len(n_grid), len(sigma_grid))
    critical_sigma: np.ndarray  # grid-snapped: first sigma with H < threshold
    critical_sigma_interp: np.ndarray  # log-interpolated threshold crossing
    fit: PowerLawFit | None
    threshold: float
    sinkhorn: dict


def _phase_cell_seed(base_seed: int, i_n: int, i_s: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((int(base_seed), int(i_n), int(i_s), int(rep)))


def _phase_reference_seed(base_seed: int, i_n: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((int(base_seed), int(i_n), 0x5EED))


def _phase_map_cell(args) -> tuple[int, int, float, dict]:
    """Worker: averaged mean-removed-periodogram entropy of one cell."""
    i_n, i_s, n, sigma, proto_dict = args
    proto = PhaseMapProtocol(**proto_dict)
    if proto.volume_kind == "cube":
        volume = Volume.cube(n)
    else:
        volume = Volume.ball(n)
    config = SinkhornConfig(epsilon=proto.epsilon)
    ref_rng = dynamics.make_rng(_phase_reference_seed(proto.base_seed, i_n))
    reference = EmpiricalDistribution(volume.sample_uniform(ref_rng, size=proto.n_particles))
    L = proto.L if proto.L is not None else proto.n_steps
    params = dynamics.GmcParams(sigma_p=sigma, L=L)
    power_sum = None
    raw_scale = 0.0
    stats = SinkhornStats()
    for rep in range(proto.seeds_per_cell):
        rng = dynamics.make_rng(_phase_cell_seed(proto.base_seed, i_n, i_s, rep))
        q0 = volume.sample_uniform(rng)
        trace = dynamics.evolve_ensemble(
            q0, proto.n_particles, params, volume, rng, n_steps=proto.n_steps
        )
        engine = SdEngine(reference, config)
        values = np.array([engine.divergence(trace.positions[s])[0]
                           for s in range(len(trace.times))])
        stats.merge(engine.stats)
        spec = psd(values - values.mean())
        power_sum = spec.power if power_sum is None else power_sum + spec.power
        raw_scale += float(np.mean(values**2))
    power = power_sum / proto.seeds_per_cell
    raw_scale /= proto.seeds_per_cell
    if power.sum() <= _VARIATION_FLOOR * raw_scale:
        H = 0.0
    else:
        freqs = np.fft.rfftfreq(proto.n_steps + 1, d=1.0)
        H = spectral_entropy(Spectrum(freqs, power))
    return i_n, i_s, H, stats.to_dict()


def critical_sigma(sigmas, entropies, threshold: float):
    """First threshold crossing of H(sigma), scanned by increasing sigma.

    Returns (grid value, log-interpolated value); (nan, nan) when the
    entropy never drops below the threshold.
    """
    sigmas = np.asarray(sigmas, dtype=np.float64)
    H = np.asarray(entropies, dtype=np.float64)
    order = np.argsort(sigmas)
    sigmas, H = sigmas[order], H[order]
    below = np.flatnonzero(H < threshold)
    if below.size == 0:
        return math.nan, math.nan
    i = int(below[0])
    snapped = float(sigmas[i])
    if i == 0:
        return snapped, snapped
    # log-linear interpolation between the bracketing grid points
    h0, h1 = H[i - 1], H[i]
    t = (threshold - h0) / (h1 - h0)
    interp = float(np.exp(np.log(sigmas[i - 1]) + t * (np.log(sigmas[i]) - np.log(sigmas[i - 1]))))
    return snapped, interp


def phase_map(
    sigma_grid,
    n_grid,
    protocol: PhaseMapProtocol,
    workers: int = 1,
) -> PhaseMapResult:
    """Entropy H(sigma_p, n) over a grid plus the critical-boundary fit.

    Cells are independent jobs with self-contained seeds, so the result is
    identical for any worker count. The boundary exponent is fitted on the
    log-interpolated threshold crossings.
    """
    sigma_grid = np.asarray(sigma_grid, dtype=np.float64)
    n_grid = np.asarray(n_grid, dtype=np.int64)
    proto_dict = {k: getattr(protocol, k) for k in protocol.__dataclass_fields__}
    jobs = [
        (i_n, i_s, int(n), float(s), proto_dict)
        for i_n, n in enumerate(n_grid)
        for i_s, s in enumerate(sigma_grid)
    ]
    H = np.zeros((len(n_grid), len(sigma_grid)))
    stats = SinkhornStats()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i_n, i_s, h, st in pool.map(_phase_map_cell, jobs):
                H[i_n, i_s] = h
                stats.merge(SinkhornStats(**st))
    else:
        for job in jobs:
            i_n, i_s, h, st = _phase_map_cell(job)
            H[i_n, i_s] = h
            stats.merge(SinkhornStats(**st))

    snapped = np.empty(len(n_grid))
    interp = np.empty(len(n_grid))
    for i_n in range(len(n_grid)):
        snapped[i_n], interp[i_n] = critical_sigma(
            sigma_grid, H[i_n], protocol.entropy_threshold
        )
    good = np.isfinite(interp)
    fit = None
    if good.sum() >= 3:
        fit = power_law_fit(n_grid[good], interp[good])
    return PhaseMapResult(
        n_grid=n_grid,
        sigma_grid=sigma_grid,
        entropy=H,
        critical_sigma=snapped,
        critical_sigma_interp=interp,
        fit=fit,
        threshold=protocol.entropy_threshold,
        sinkhorn=stats.to_dict(),
    )
