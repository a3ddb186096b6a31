"""Deterministic 2-D mass-spring simulator for cloth and rope scenes.

The substep kernel is compiled (Cython) when available; set
``DEFOSIM_PURE=1`` to force the pure-Python fallback.
"""

import os

from . import _ref

if os.environ.get("DEFOSIM_PURE") == "1":
    _kernel = _ref
else:
    try:
        from . import _core as _kernel
    except ImportError:  # extension not built
        _kernel = _ref

BACKEND = _kernel.BACKEND
run_substeps = _kernel.run_substeps

from .scene import (  # noqa: E402
    SCENARIOS,
    DeformableMesh,
    SceneConfigError,
    ScriptedMotion,
    SimConfig,
    build_scene,
)
from .engine import (  # noqa: E402
    SimulationDivergedError,
    Trajectory,
    rollout,
    step,
)

__all__ = [
    "BACKEND",
    "SCENARIOS",
    "DeformableMesh",
    "SceneConfigError",
    "ScriptedMotion",
    "SimConfig",
    "SimulationDivergedError",
    "Trajectory",
    "build_scene",
    "rollout",
    "run_substeps",
    "step",
]
