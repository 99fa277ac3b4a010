"""Kernel backend selection.

The compiled extension is preferred where it measures faster; set
``REFLECTMC_PURE_PYTHON=1`` to force the numpy fallback throughout (used by
the benchmark and for debugging). Both backend modules expose all four
kernels with identical semantics.

Per-kernel choice (see benchmarks/bench_kernels.py): the branchy stepping
loop and the symmetric self-cost matrix are much faster compiled; the
cross cost matrix is fastest through scipy's cdist and the log-domain
sweeps through numpy's vectorized exp, so those two stay on the fallback
implementations even when the extension is built.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("REFLECTMC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

COMPILED: bool = bool(getattr(_impl, "COMPILED", False))
BACKEND_NAME: str = "compiled" if COMPILED else "python"

evolve = _impl.evolve
l1_cost_self = _impl.l1_cost_self
l1_cost = _kernels_py.l1_cost
sinkhorn_log = _kernels_py.sinkhorn_log


def get_backend(name: str | None = None):
    """Return a kernel module by name ('compiled' or 'python').

    With no argument, returns the module selected at import time.
    """
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels  # raises ImportError if not built

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
