"""reflectmc: reflective (Galilean) Monte Carlo in balls, cubes and
intervals, with Sinkhorn-divergence mixing diagnostics, spectral analysis
and a declarative experiment runner.
"""

from ._backend import BACKEND_NAME, COMPILED
from .dynamics import (
    Branch,
    ChainState,
    EnsembleTrace,
    GmcParams,
    draw_momentum,
    evolve_ensemble,
    evolve_states,
    gmc_step,
    make_rng,
    noisy_momentum_chain,
    noisy_momentum_ensemble,
    run_chain,
    run_trajectory,
    trajectory_acceptance_rate,
    wavepacket_1d,
)
from .geometry import Volume
from .sinkhorn import (
    EmpiricalDistribution,
    SinkhornConfig,
    l1_cost_matrix,
    ot_eps,
    sinkhorn_divergence,
)
from .spectral import (
    Spectrum,
    SDTimeSeries,
    dominant_frequency,
    f_broad,
    f_diag,
    f_super,
    phase_map,
    power_law_fit,
    psd,
    sd_time_series,
    spectral_entropy,
)
from .diskmap import (
    angle_concentration_std,
    angular_density,
    build_rotation,
    direct_2d_init,
    disk_project,
    point_to_angle,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BACKEND_NAME",
    "COMPILED",
    "Volume",
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
    "evolve_states",
    "noisy_momentum_chain",
    "noisy_momentum_ensemble",
    "wavepacket_1d",
    "trajectory_acceptance_rate",
    "EmpiricalDistribution",
    "SinkhornConfig",
    "l1_cost_matrix",
    "ot_eps",
    "sinkhorn_divergence",
    "SDTimeSeries",
    "Spectrum",
    "sd_time_series",
    "psd",
    "spectral_entropy",
    "f_diag",
    "f_super",
    "f_broad",
    "dominant_frequency",
    "power_law_fit",
    "phase_map",
    "build_rotation",
    "disk_project",
    "point_to_angle",
    "angular_density",
    "angle_concentration_std",
    "direct_2d_init",
]
