"""Declarative experiment runner.

An experiment is a single JSON object: a kind, a seed and kind-specific
parameters. Running one produces a self-describing directory holding a copy
of the config, fixed-schema CSV outputs (each starting with a one-line JSON
comment header) and a manifest written last, so an interrupted run can
never claim success. Identical configs reproduce byte-identical data files.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _version
from . import _backend, dynamics, spectral
from .diskmap import direct_2d_init
from .geometry import Volume
from .sinkhorn import EmpiricalDistribution, SinkhornConfig

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunManifest",
    "load_config",
    "validate_config",
    "run",
    "kde_density_series",
    "density_autocorrelation",
    "EXPERIMENT_KINDS",
]

EXPERIMENT_KINDS = (
    "sd-series",
    "psd-sweep",
    "phase-map",
    "chordlen",
    "diskmap-density",
    "wavepacket",
    "noisy-chain",
    "acceptance-rate",
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    params: dict
    volume: Volume | None = None
    output_dir: str | None = None

    def resolved(self) -> dict:
        out = {"kind": self.kind, "seed": self.seed, **self.params}
        if self.volume is not None:
            out["volume"] = self.volume.to_config()
        return out


@dataclass
class RunManifest:
    path: str
    data: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return self.data.get("status", "unknown")

    @property
    def output_dir(self) -> str:
        return os.path.dirname(os.path.abspath(self.path))

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls(path=str(path), data=json.load(fh))


# -- config validation --------------------------------------------------------


def _need(cfg: dict, key: str, types, where: str = ""):
    path = f"{where}{key}"
    if key not in cfg:
        raise ConfigError(f"{path}: required field is missing")
    val = cfg[key]
    bad_bool = isinstance(val, bool) and types is not bool
    if bad_bool or not isinstance(val, types):
        names = getattr(types, "__name__", None) or "/".join(t.__name__ for t in types)
        raise ConfigError(f"{path}: expected {names}, got {type(val).__name__}")
    return val


def _opt(cfg: dict, key: str, types, default, where: str = ""):
    if key not in cfg:
        return default
    return _need(cfg, key, types, where)


def _positive(val, path):
    if not val > 0:
        raise ConfigError(f"{path}: must be positive")
    return val


def _number_list(cfg, key, where="", required=True, allow_scalar=True):
    if key not in cfg:
        if required:
            raise ConfigError(f"{where}{key}: required field is missing")
        return None
    val = cfg[key]
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        if not allow_scalar:
            raise ConfigError(f"{where}{key}: expected a list")
        val = [val]
    if not isinstance(val, list) or not val:
        raise ConfigError(f"{where}{key}: expected a non-empty number or list")
    out = []
    for i, v in enumerate(val):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}{key}[{i}]: expected a number")
        out.append(_positive(float(v), f"{where}{key}[{i}]"))
    return out


def _parse_volume(cfg: dict) -> Volume:
    spec = _need(cfg, "volume", dict)
    kind = _need(spec, "kind", str, "volume.")
    if kind not in ("ball", "cube", "interval"):
        raise ConfigError(f"volume.kind: must be ball|cube|interval, got {kind!r}")
    if kind in ("ball", "cube"):
        dim = _need(spec, "dim", int, "volume.")
        _positive(dim, "volume.dim")
    try:
        return Volume.from_config(spec)
    except ValueError as exc:
        raise ConfigError(f"volume: {exc}") from exc


def validate_config(cfg: dict) -> ExperimentConfig:
    """Normalize and validate a raw config dict; raises ConfigError."""
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a JSON object")
    kind = _need(cfg, "kind", str)
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"kind: unknown experiment kind {kind!r}")
    seed = _need(cfg, "seed", int)
    output_dir = _opt(cfg, "output_dir", str, None)

    p: dict = {}
    volume = None
    if kind in ("sd-series", "psd-sweep", "noisy-chain", "acceptance-rate"):
        volume = _parse_volume(cfg)
        p["sigma_p"] = _number_list(cfg, "sigma_p")
        p["epsilon"] = _positive(float(_opt(cfg, "epsilon", (int, float), 4.0)), "epsilon")
        if _opt(cfg, "rescale_sigma", bool, False):
            # values are given at the 100-dimensional reference scale
            scale = float(np.sqrt(100.0 / volume.dim))
            p["sigma_p"] = [s * scale for s in p["sigma_p"]]
            p["rescale_sigma"] = True

    if kind == "sd-series":
        p["L"] = _positive(_opt(cfg, "L", int, 400), "L")
        p["n_particles"] = _positive(_opt(cfg, "n_particles", int, 1000), "n_particles")
        p["n_reference"] = _positive(
            _opt(cfg, "n_reference", int, p["n_particles"]), "n_reference"
        )
        p["n_steps"] = _positive(_opt(cfg, "n_steps", int, 1200), "n_steps")
        p["sd_stride"] = _opt(cfg, "sd_stride", int, None)
        q0 = _opt(cfg, "q0", list, None)
        if q0 is not None and len(q0) != volume.dim:
            raise ConfigError("q0: length must equal volume.dim")
        p["q0"] = q0
    elif kind == "psd-sweep":
        p["n_particles"] = _positive(_opt(cfg, "n_particles", int, 500), "n_particles")
        p["n_reference"] = _positive(
            _opt(cfg, "n_reference", int, p["n_particles"]), "n_reference"
        )
        p["n_steps"] = _positive(_opt(cfg, "n_steps", int, 256), "n_steps")
        p["L"] = _positive(_opt(cfg, "L", int, p["n_steps"]), "L")
        p["sd_stride"] = _opt(cfg, "sd_stride", int, None)
    elif kind == "phase-map":
        p["n_grid"] = [int(v) for v in _number_list(cfg, "n_grid", allow_scalar=False)]
        p["sigma_p"] = _number_list(cfg, "sigma_p", allow_scalar=False)
        p["n_particles"] = _positive(_opt(cfg, "n_particles", int, 300), "n_particles")
        p["n_steps"] = _positive(_opt(cfg, "n_steps", int, 128), "n_steps")
        p["seeds_per_cell"] = _positive(_opt(cfg, "seeds_per_cell", int, 8), "seeds_per_cell")
        p["epsilon"] = _positive(float(_opt(cfg, "epsilon", (int, float), 4.0)), "epsilon")
        p["entropy_threshold"] = _positive(
            float(_opt(cfg, "entropy_threshold", (int, float), 1.2)), "entropy_threshold"
        )
        p["volume_kind"] = _opt(cfg, "volume_kind", str, "cube")
        if p["volume_kind"] not in ("cube", "ball"):
            raise ConfigError("volume_kind: must be cube or ball")
    elif kind == "chordlen":
        p["n_grid"] = [int(v) for v in _number_list(cfg, "n_grid", allow_scalar=False)]
        p["n_samples"] = _positive(_opt(cfg, "n_samples", int, 10_000), "n_samples")
        p["volume_kind"] = _opt(cfg, "volume_kind", str, "cube")
        if p["volume_kind"] not in ("cube", "ball"):
            raise ConfigError("volume_kind: must be cube or ball")
        p["half_width"] = _positive(
            float(_opt(cfg, "half_width", (int, float), 1.0)), "half_width"
        )
    elif kind == "diskmap-density":
        n = _need(cfg, "n", int)
        if n < 3:
            raise ConfigError("n: direct 2-D preparation requires n >= 3")
        p["n"] = n
        sig = _positive(float(_need(cfg, "sigma_p", (int, float))), "sigma_p")
        if _opt(cfg, "rescale_sigma", bool, False):
            sig *= float(np.sqrt(100.0 / n))
            p["rescale_sigma"] = True
        p["sigma_p"] = sig
        p["n_particles"] = _positive(_opt(cfg, "n_particles", int, 100_000), "n_particles")
        p["n_steps"] = _positive(_opt(cfg, "n_steps", int, 30), "n_steps")
        p["snapshot_stride"] = _positive(_opt(cfg, "snapshot_stride", int, 1), "snapshot_stride")
    elif kind == "wavepacket":
        x0 = float(_opt(cfg, "x0", (int, float), -0.9))
        if not -1.0 < x0 < 1.0:
            raise ConfigError("x0: must lie strictly inside (-1, 1)")
        p["x0"] = x0
        p["n_emulated"] = _positive(_opt(cfg, "n_emulated", int, 100), "n_emulated")
        p["sigma_p"] = _positive(float(_need(cfg, "sigma_p", (int, float))), "sigma_p")
        p["n_particles"] = _positive(_opt(cfg, "n_particles", int, 5000), "n_particles")
        p["n_steps"] = _positive(_opt(cfg, "n_steps", int, 60), "n_steps")
        sign = _opt(cfg, "sign", int, None)
        if sign not in (None, 1, -1):
            raise ConfigError("sign: must be 1 or -1 when given")
        p["sign"] = sign
        p["kde_bandwidth"] = _positive(
            float(_opt(cfg, "kde_bandwidth", (int, float), 0.02)), "kde_bandwidth"
        )
        p["kde_grid"] = _positive(_opt(cfg, "kde_grid", int, 256), "kde_grid")
    elif kind == "noisy-chain":
        p["sigma_dp"] = _number_list(cfg, "sigma_dp")
        # relative mode: entries are factors of sigma_p (e.g. 1/sqrt(L))
        p["sigma_dp_relative"] = _opt(cfg, "sigma_dp_relative", bool, False)
        p["n_particles"] = _positive(_opt(cfg, "n_particles", int, 1000), "n_particles")
        p["n_reference"] = _positive(
            _opt(cfg, "n_reference", int, p["n_particles"]), "n_reference"
        )
        p["n_steps"] = _positive(_opt(cfg, "n_steps", int, 800), "n_steps")
        p["sd_stride"] = _opt(cfg, "sd_stride", int, None)
    elif kind == "acceptance-rate":
        p["n_chains"] = _positive(_opt(cfg, "n_chains", int, 200), "n_chains")
        p["n_steps"] = _positive(_opt(cfg, "n_steps", int, 200), "n_steps")
        p.pop("epsilon", None)

    return ExperimentConfig(kind=kind, seed=seed, params=p, volume=volume,
                            output_dir=output_dir)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: not valid JSON ({exc})") from exc
    return validate_config(raw)


# -- output helpers -----------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, header: dict, columns: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path):
    """(header dict, column names, data array) of a run output file."""
    with open(path) as fh:
        header = json.loads(fh.readline().lstrip("# "))
        columns = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, columns, data


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _auto_stride(n_steps: int, requested) -> int:
    if requested is not None:
        return int(requested)
    return 1 if n_steps <= 512 else 4


def _sd_series_csv(out_dir, name, series, extra_header) -> str:
    path = os.path.join(out_dir, name)
    header = {"columns": ["t", "sd", "converged"], **extra_header}
    rows = zip(series.times.tolist(), series.values.tolist(),
               series.converged.astype(int).tolist())
    _write_csv(path, header, ["t", "sd", "converged"], rows)
    return path


# -- density helpers (wave packet) -------------------------------------------


def kde_density_series(trace: dynamics.EnsembleTrace, grid_size: int = 256,
                       bandwidth: float = 0.02):
    """Fixed-bandwidth Gaussian KDE of a 1-D trace over [-1, 1] per snapshot.

    A fixed bandwidth keeps densities comparable across time. Returns
    (grid, density) with density shaped (n_snapshots, grid_size).
    """
    if trace.dim != 1:
        raise ValueError("density series requires a 1-D trace")
    grid = np.linspace(-1.0, 1.0, grid_size)
    norm = 1.0 / (np.sqrt(2.0 * np.pi) * bandwidth * trace.n_particles)
    density = np.empty((len(trace.times), grid_size))
    for s in range(len(trace.times)):
        z = (grid[:, None] - trace.positions[s, :, 0][None, :]) / bandwidth
        density[s] = norm * np.exp(-0.5 * z * z).sum(axis=1)
    return grid, density


def density_autocorrelation(density: np.ndarray, max_lag: int) -> np.ndarray:
    """Pearson autocorrelation of the mean-removed density field over time lags.

    Columns (positions) are centred by their time average first, so the
    static profile does not mask the recurrence structure. Returns the
    correlations for lags 1..max_lag.
    """
    D = density - density.mean(axis=0, keepdims=True)
    out = np.empty(max_lag)
    for lag in range(1, max_lag + 1):
        a = D[:-lag].ravel()
        b = D[lag:].ravel()
        denom = np.sqrt((a * a).sum() * (b * b).sum())
        out[lag - 1] = float((a * b).sum() / denom) if denom > 0 else 0.0
    return out


# -- experiment handlers ------------------------------------------------------


def _run_sd_like(config: ExperimentConfig, out_dir: str):
    """Shared body of sd-series and psd-sweep."""
    p = config.params
    volume = config.volume
    sink = SinkhornConfig(epsilon=p["epsilon"])
    stride = _auto_stride(p["n_steps"], p.get("sd_stride"))
    ref_rng = dynamics.make_rng((config.seed, 1))
    reference = EmpiricalDistribution(volume.sample_uniform(ref_rng, size=p["n_reference"]))
    if p.get("q0") is not None:
        q0 = np.asarray(p["q0"], dtype=np.float64)
    else:
        q0 = volume.sample_uniform(dynamics.make_rng((config.seed, 2)))
    outputs, series_list, stats = [], [], spectral.SinkhornStats()
    for i_s, sigma in enumerate(p["sigma_p"]):
        rng = dynamics.make_rng((config.seed, 3, i_s))
        params = dynamics.GmcParams(sigma_p=sigma, L=p["L"], snapshot_stride=stride)
        trace = dynamics.evolve_ensemble(
            q0, p["n_particles"], params, volume, rng, n_steps=p["n_steps"]
        )
        series = spectral.sd_time_series(trace, reference, sink)
        stats.merge(spectral.SinkhornStats(**series.meta["sinkhorn"]))
        name = f"sd_series_{i_s:02d}.csv"
        outputs.append(_sd_series_csv(out_dir, name, series, {
            "sigma_p": sigma, "L": p["L"], "n_particles": p["n_particles"],
            "epsilon": p["epsilon"], "stride": stride,
        }))
        series_list.append(series)
    return outputs, series_list, stats


def _handle_sd_series(config: ExperimentConfig, out_dir: str, workers: int):
    outputs, series_list, stats = _run_sd_like(config, out_dir)
    summary = {"sigma_p": config.params["sigma_p"],
               "sd_initial": [float(s.values[0]) for s in series_list],
               "sd_final": [float(s.values[-1]) for s in series_list]}
    return outputs, summary, stats


def _handle_psd_sweep(config: ExperimentConfig, out_dir: str, workers: int):
    p = config.params
    outputs, series_list, stats = _run_sd_like(config, out_dir)
    n = config.volume.dim
    R = config.volume.radius if config.volume.kind_name == "ball" else config.volume.half_width
    psd_rows = []
    dominant = []
    for sigma, series in zip(p["sigma_p"], series_list):
        spec = spectral.psd(series)
        stride = int(series.times[1] - series.times[0]) if len(series.times) > 1 else 1
        freqs = spec.frequencies / stride  # snapshot stride rescales the axis
        for f, pw in zip(freqs, spec.power):
            psd_rows.append((sigma, f, pw))
        f_dom, p_dom = spectral.dominant_frequency(spec, exclude_dc=True)
        dominant.append({
            "sigma_p": sigma,
            "dominant_frequency": f_dom / stride,
            "dominant_power": p_dom,
            "f_diag": spectral.f_diag(sigma, n, R),
            "f_super": spectral.f_super(sigma, n, R),
            "f_broad": spectral.f_broad(sigma),
            "bin_width": float(freqs[1] - freqs[0]),
        })
    path = os.path.join(out_dir, "psd.csv")
    _write_csv(path, {"volume": config.volume.to_config(), "epsilon": p["epsilon"]},
               ["sigma_p", "frequency", "power"], psd_rows)
    outputs.append(path)
    return outputs, {"dominant": dominant}, stats


def _handle_phase_map(config: ExperimentConfig, out_dir: str, workers: int):
    p = config.params
    proto = spectral.PhaseMapProtocol(
        n_particles=p["n_particles"], n_steps=p["n_steps"],
        seeds_per_cell=p["seeds_per_cell"], epsilon=p["epsilon"],
        entropy_threshold=p["entropy_threshold"], base_seed=config.seed,
        volume_kind=p["volume_kind"],
    )
    result = spectral.phase_map(p["sigma_p"], p["n_grid"], proto, workers=workers)
    rows = []
    for i_n, n in enumerate(result.n_grid):
        for i_s, s in enumerate(result.sigma_grid):
            rows.append((int(n), float(s), float(result.entropy[i_n, i_s]), config.seed))
    map_path = os.path.join(out_dir, "entropy_map.csv")
    _write_csv(map_path, {"threshold": result.threshold,
                          "seeds_per_cell": p["seeds_per_cell"]},
               ["n", "sigma_p", "entropy", "seed"], rows)
    fit_path = os.path.join(out_dir, "boundary_fit.json")

    def _finite(v):
        return float(v) if np.isfinite(v) else None

    fit = {
        "threshold": result.threshold,
        "n_grid": [int(v) for v in result.n_grid],
        "critical_sigma": [_finite(v) for v in result.critical_sigma],
        "critical_sigma_interp": [_finite(v) for v in result.critical_sigma_interp],
        "exponent": None if result.fit is None else result.fit.exponent,
        "exponent_stderr": None if result.fit is None else result.fit.stderr,
        "prefactor": None if result.fit is None else result.fit.prefactor,
    }
    with open(fit_path, "w") as fh:
        json.dump(fit, fh, indent=2, sort_keys=True)
    stats = spectral.SinkhornStats(**result.sinkhorn)
    return [map_path, fit_path], fit, stats


def _handle_chordlen(config: ExperimentConfig, out_dir: str, workers: int):
    p = config.params
    rows = []
    means = []
    for i, n in enumerate(p["n_grid"]):
        if p["volume_kind"] == "cube":
            vol = Volume.cube(n, p["half_width"])
        else:
            vol = Volume.ball(n, p["half_width"])
        rng = dynamics.make_rng((config.seed, i))
        mean, stderr = vol.mean_chord_length(p["n_samples"], rng)
        rows.append((n, mean, stderr, p["n_samples"]))
        means.append(mean)
    path = os.path.join(out_dir, "chords.csv")
    _write_csv(path, {"volume_kind": p["volume_kind"], "half_width": p["half_width"]},
               ["n", "mean_chord", "stderr", "n_samples"], rows)
    fit = spectral.power_law_fit(p["n_grid"], means)
    fit_path = os.path.join(out_dir, "fit.json")
    summary = {"exponent": fit.exponent, "exponent_stderr": fit.stderr,
               "prefactor": fit.prefactor,
               "means": {str(n): m for n, m in zip(p["n_grid"], means)}}
    with open(fit_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return [path, fit_path], summary, spectral.SinkhornStats()


def _handle_diskmap(config: ExperimentConfig, out_dir: str, workers: int):
    p = config.params
    rng = dynamics.make_rng((config.seed, 1))
    q2, p2 = direct_2d_init(p["n"], p["sigma_p"], rng, size=p["n_particles"])
    trace = dynamics.evolve_states(
        q2, p2, Volume.ball(2), p["n_steps"], snapshot_stride=p["snapshot_stride"],
        meta={"n": p["n"], "sigma_p": p["sigma_p"]},
    )
    rows = []
    for s, t in enumerate(trace.times):
        radii = np.linalg.norm(trace.positions[s], axis=1)
        signs = np.where(trace.positions[s][:, 1] >= 0.0, 1.0, -1.0)
        thetas = signs * np.arccos(np.clip(trace.positions[s][:, 0] / radii, -1.0, 1.0))
        for i in range(trace.n_particles):
            rows.append((int(t), i, thetas[i], radii[i]))
    path = os.path.join(out_dir, "diskmap.csv")
    _write_csv(path, {"n": p["n"], "sigma_p": p["sigma_p"],
                      "n_particles": p["n_particles"]},
               ["t", "particle", "theta", "r"], rows)
    drift = np.abs(np.linalg.norm(trace.positions[-1], axis=1)
                   - np.linalg.norm(trace.positions[0], axis=1))
    stuck = float(np.mean(drift < 1e-12))
    return [path], {"fraction_at_initial_radius": stuck}, spectral.SinkhornStats()


def _handle_wavepacket(config: ExperimentConfig, out_dir: str, workers: int):
    p = config.params
    rng = dynamics.make_rng((config.seed, 1))
    trace = dynamics.wavepacket_1d(
        p["x0"], p["n_emulated"], p["sigma_p"], p["n_particles"], p["n_steps"],
        rng, sign=p["sign"],
    )
    pos_path = os.path.join(out_dir, "wavepacket.csv")
    rows = ((int(t), i, trace.positions[s, i, 0])
            for s, t in enumerate(trace.times) for i in range(trace.n_particles))
    _write_csv(pos_path, {"x0": p["x0"], "sigma_p": p["sigma_p"],
                          "n_emulated": p["n_emulated"]},
               ["t", "particle", "x"], rows)
    grid, density = kde_density_series(trace, p["kde_grid"], p["kde_bandwidth"])
    den_path = os.path.join(out_dir, "density.csv")
    rows = ((int(t), grid[g], density[s, g])
            for s, t in enumerate(trace.times) for g in range(len(grid)))
    _write_csv(den_path, {"bandwidth": p["kde_bandwidth"], "clip_note":
                          "densities are unclipped; plots clip at 2"},
               ["t", "x", "density"], rows)
    acf = density_autocorrelation(density, max_lag=min(12, p["n_steps"] - 1))
    summary = {
        "density_max_series": [float(v) for v in density.max(axis=1)],
        "autocorrelation": [float(v) for v in acf],
        "autocorrelation_peak_lag": int(np.argmax(acf) + 1),
    }
    return [pos_path, den_path], summary, spectral.SinkhornStats()


def _handle_noisy_chain(config: ExperimentConfig, out_dir: str, workers: int):
    p = config.params
    volume = config.volume
    sink = SinkhornConfig(epsilon=p["epsilon"])
    stride = _auto_stride(p["n_steps"], p.get("sd_stride"))
    ref_rng = dynamics.make_rng((config.seed, 1))
    reference = EmpiricalDistribution(volume.sample_uniform(ref_rng, size=p["n_reference"]))
    q0 = volume.sample_uniform(dynamics.make_rng((config.seed, 2)))
    outputs = []
    stats = spectral.SinkhornStats()
    combos = []
    for i_s, sigma in enumerate(p["sigma_p"]):
        for i_d, dp in enumerate(p["sigma_dp"]):
            sigma_dp = dp * sigma if p.get("sigma_dp_relative") else dp
            rng = dynamics.make_rng((config.seed, 3, i_s, i_d))
            trace = dynamics.noisy_momentum_ensemble(
                q0, p["n_particles"], sigma, sigma_dp, p["n_steps"], volume, rng,
                snapshot_stride=stride,
            )
            series = spectral.sd_time_series(trace, reference, sink)
            stats.merge(spectral.SinkhornStats(**series.meta["sinkhorn"]))
            name = f"sd_series_noisy_{i_s:02d}_{i_d:02d}.csv"
            outputs.append(_sd_series_csv(out_dir, name, series, {
                "sigma_p": sigma, "sigma_dp": sigma_dp,
                "n_particles": p["n_particles"], "epsilon": p["epsilon"],
                "stride": stride,
            }))
            combos.append({"sigma_p": sigma, "sigma_dp": sigma_dp,
                           "sd_final": float(series.values[-1])})
    return outputs, {"combos": combos}, stats


def _handle_acceptance(config: ExperimentConfig, out_dir: str, workers: int):
    p = config.params
    volume = config.volume
    rows = []
    for i_s, sigma in enumerate(p["sigma_p"]):
        rng = dynamics.make_rng((config.seed, i_s))
        Q = volume.sample_uniform(rng, size=p["n_chains"])
        P = dynamics.draw_momentum(volume.dim, sigma, rng, size=p["n_chains"])
        trace = dynamics.evolve_states(Q, P, volume, p["n_steps"],
                                       snapshot_stride=p["n_steps"])
        rate = dynamics.trajectory_acceptance_rate(trace.branches)
        rows.append((volume.kind_name, volume.dim, sigma, rate,
                     p["n_chains"], p["n_steps"]))
    path = os.path.join(out_dir, "acceptance.csv")
    _write_csv(path, {"volume": volume.to_config()},
               ["volume_kind", "n", "sigma_p", "rate", "n_chains", "n_steps"], rows)
    summary = {"rates": {repr(float(r[2])): float(r[3]) for r in rows}}
    return [path], summary, spectral.SinkhornStats()


_HANDLERS = {
    "sd-series": _handle_sd_series,
    "psd-sweep": _handle_psd_sweep,
    "phase-map": _handle_phase_map,
    "chordlen": _handle_chordlen,
    "diskmap-density": _handle_diskmap,
    "wavepacket": _handle_wavepacket,
    "noisy-chain": _handle_noisy_chain,
    "acceptance-rate": _handle_acceptance,
}


def run(config: ExperimentConfig, out_dir=None, workers: int | None = None) -> RunManifest:
    """Execute an experiment; returns the manifest (written last, atomically)."""
    out_dir = out_dir or config.output_dir
    if out_dir is None:
        raise ConfigError("output_dir: not set in config and no --out given")
    out_dir = os.path.abspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    workers = workers if workers and workers > 0 else (os.cpu_count() or 1)

    resolved = config.resolved()
    config_path = os.path.join(out_dir, "config.json")
    with open(config_path, "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
    config_blob = json.dumps(resolved, sort_keys=True).encode()

    started = time.time()
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": _version,
        "backend": _backend.BACKEND_NAME,
        "kind": config.kind,
        "config": resolved,
        "config_sha256": hashlib.sha256(config_blob).hexdigest(),
        "status": "failed",
        "outputs": [],
        "summary": {},
        "error": None,
    }
    try:
        outputs, summary, stats = _HANDLERS[config.kind](config, out_dir, workers)
        manifest["outputs"] = [
            {"path": os.path.relpath(path, out_dir), "sha256": _sha256(path),
             "bytes": os.path.getsize(path)}
            for path in outputs
        ]
        manifest["summary"] = summary
        manifest["sinkhorn"] = stats.to_dict()
        manifest["status"] = "success"
    except Exception as exc:  # record the failure, then re-raise
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["wall_time_s"] = time.time() - started
        _write_manifest(out_dir, manifest)
        raise
    manifest["wall_time_s"] = time.time() - started
    path = _write_manifest(out_dir, manifest)
    return RunManifest(path=path, data=manifest)


def _write_manifest(out_dir: str, manifest: dict) -> str:
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path
