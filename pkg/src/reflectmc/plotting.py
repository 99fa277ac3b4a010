"""Static plots rendered from run outputs.

Plots are a convenience layer over the CSV files; nothing downstream
depends on the images. Conventions follow the measurement semantics:
divergence on a log axis, periodogram sweeps as sigma_p-frequency
heatmaps, wave-packet densities clipped at 2 with the clip marked.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiments import RunManifest, read_csv

__all__ = ["plot"]


def _outputs(manifest: RunManifest, suffix: str) -> list[str]:
    base = manifest.output_dir
    found = [
        os.path.join(base, o["path"])
        for o in manifest.data.get("outputs", [])
        if o["path"].endswith(suffix)
    ]
    missing = [p for p in found if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError(f"missing run outputs: {missing}")
    return found


def _plot_sd_series(manifest, out_dir):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for path in sorted(_outputs(manifest, ".csv")):
        name = os.path.basename(path)
        if not name.startswith("sd_series"):
            continue
        header, _, data = read_csv(path)
        label = f"sigma_p={header.get('sigma_p'):g}"
        if "sigma_dp" in header:
            label += f", sigma_dp={header['sigma_dp']:g}"
        ax.plot(data[:, 0], data[:, 1], label=label, lw=1.0)
    ax.set_yscale("log")
    ax.set_xlabel("t [steps]")
    ax.set_ylabel("divergence")
    ax.legend(fontsize=8)
    out = os.path.join(out_dir, "sd_series.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return [out]


def _plot_psd_sweep(manifest, out_dir):
    path = _outputs(manifest, "psd.csv")[0]
    _, _, data = read_csv(path)
    sigmas = np.unique(data[:, 0])
    freqs = np.unique(data[:, 1])
    grid = np.full((len(freqs), len(sigmas)), np.nan)
    si = {s: i for i, s in enumerate(sigmas)}
    fi = {f: i for i, f in enumerate(freqs)}
    for s, f, p in data:
        grid[fi[f], si[s]] = p
    fig, ax = plt.subplots(figsize=(7, 4.5))
    with np.errstate(divide="ignore"):
        img = np.log10(np.maximum(grid, 1e-300))
    mesh = ax.pcolormesh(sigmas, freqs, img, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="log10 power")
    dom = manifest.data.get("summary", {}).get("dominant", [])
    if dom:
        xs = [d["sigma_p"] for d in dom]
        ax.plot(xs, [d["f_super"] for d in dom], "w--", lw=1, label="f_super")
        ax.plot(xs, [d["f_diag"] for d in dom], "w:", lw=1, label="f_diag")
        ax.legend(fontsize=8)
    ax.set_xscale("log")
    ax.set_xlabel("sigma_p")
    ax.set_ylabel("frequency [1/step]")
    out = os.path.join(out_dir, "psd_sweep.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return [out]


def _plot_phase_map(manifest, out_dir):
    path = _outputs(manifest, "entropy_map.csv")[0]
    _, _, data = read_csv(path)
    ns = np.unique(data[:, 0])
    sigmas = np.unique(data[:, 1])
    grid = np.zeros((len(sigmas), len(ns)))
    for n, s, h, _seed in data:
        grid[np.searchsorted(sigmas, s), np.searchsorted(ns, n)] = h
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    mesh = ax.pcolormesh(ns, sigmas, grid, shading="nearest", cmap="magma")
    fig.colorbar(mesh, ax=ax, label="spectral entropy [nats]")
    summary = manifest.data.get("summary", {})
    if summary.get("exponent") is not None:
        n_line = np.array(summary["n_grid"], dtype=float)
        ax.plot(n_line, summary["prefactor"] * n_line ** summary["exponent"],
                "c-", lw=1.5,
                label=f"critical sigma_p ~ n^{summary['exponent']:.3f}")
        ax.legend(fontsize=8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("dimension n")
    ax.set_ylabel("sigma_p")
    out = os.path.join(out_dir, "phase_map.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return [out]


def _plot_chordlen(manifest, out_dir):
    path = _outputs(manifest, "chords.csv")[0]
    _, _, data = read_csv(path)
    summary = manifest.data.get("summary", {})
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(data[:, 0], data[:, 1], yerr=data[:, 2], fmt="o", ms=4)
    if summary.get("exponent") is not None:
        ns = np.geomspace(data[:, 0].min(), data[:, 0].max(), 50)
        ax.plot(ns, summary["prefactor"] * ns ** summary["exponent"], "-",
                label=f"n^{summary['exponent']:.3f}")
        ax.legend(fontsize=8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("dimension n")
    ax.set_ylabel("mean chord length")
    out = os.path.join(out_dir, "chordlen.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return [out]


def _plot_diskmap(manifest, out_dir):
    path = _outputs(manifest, "diskmap.csv")[0]
    _, _, data = read_csv(path)
    times = np.unique(data[:, 0])
    pick = times[:: max(1, len(times) // 6)][:6]
    fig, axes = plt.subplots(2, len(pick), figsize=(2.2 * len(pick), 4.2),
                             sharex="row")
    for k, t in enumerate(pick):
        rows = data[data[:, 0] == t]
        axes[0, k].hist(rows[:, 2], bins=60, range=(-np.pi, np.pi),
                        density=True, color="tab:blue")
        axes[0, k].set_title(f"t={int(t)}", fontsize=8)
        axes[1, k].hist(rows[:, 3], bins=60, density=True, color="tab:orange")
    axes[0, 0].set_ylabel("p(theta)")
    axes[1, 0].set_ylabel("p(r)")
    out = os.path.join(out_dir, "diskmap_density.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return [out]


def _plot_wavepacket(manifest, out_dir):
    path = _outputs(manifest, "density.csv")[0]
    _, _, data = read_csv(path)
    times = np.unique(data[:, 0])
    xs = np.unique(data[:, 1])
    grid = np.zeros((len(xs), len(times)))
    for t, x, d in data:
        grid[np.searchsorted(xs, x), np.searchsorted(times, t)] = d
    clipped = np.minimum(grid, 2.0)
    fig, ax = plt.subplots(figsize=(7, 4))
    mesh = ax.pcolormesh(times, xs, clipped, shading="nearest", cmap="inferno",
                         vmin=0.0, vmax=2.0)
    cbar = fig.colorbar(mesh, ax=ax, label="density (clipped)")
    # mark the clip level on the colorbar
    cbar.ax.plot([0.5], [2.0], marker="v", color="w", clip_on=False)
    ax.set_xlabel("t [steps]")
    ax.set_ylabel("x")
    out = os.path.join(out_dir, "wavepacket.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return [out]


def _plot_acceptance(manifest, out_dir):
    path = _outputs(manifest, "acceptance.csv")[0]
    with open(path) as fh:
        fh.readline()
        fh.readline()
        rows = [line.strip().split(",") for line in fh if line.strip()]
    sigmas = np.array([float(r[2]) for r in rows])
    rates = np.array([float(r[3]) for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sigmas, rates, "o-")
    ax.axhline(0.5, color="gray", ls="--", lw=0.8)
    ax.axhline(1.0 / 3.0, color="gray", ls=":", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("sigma_p")
    ax.set_ylabel("trajectory acceptance rate")
    ax.set_ylim(0.25, 1.05)
    out = os.path.join(out_dir, "acceptance.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return [out]


_PLOTTERS = {
    "sd-series": _plot_sd_series,
    "noisy-chain": _plot_sd_series,
    "psd-sweep": _plot_psd_sweep,
    "phase-map": _plot_phase_map,
    "chordlen": _plot_chordlen,
    "diskmap-density": _plot_diskmap,
    "wavepacket": _plot_wavepacket,
    "acceptance-rate": _plot_acceptance,
}


def plot(manifest, which: str | None = None, out_dir=None) -> list[str]:
    """Render the plot(s) for a finished run; returns the image paths."""
    if not isinstance(manifest, RunManifest):
        manifest = RunManifest.load(manifest)
    kind = which or manifest.data.get("kind")
    if kind not in _PLOTTERS:
        raise ValueError(f"no plotter for kind {kind!r}")
    out_dir = out_dir or manifest.output_dir
    os.makedirs(out_dir, exist_ok=True)
    return _PLOTTERS[kind](manifest, out_dir)
