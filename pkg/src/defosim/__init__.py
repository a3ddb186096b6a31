"""defosim: posterior inference of deformable-object simulation parameters.

A 2-D mass-spring simulator, a noisy keypoint observation model, random
Fourier feature kernel mean embeddings, hand-written mixture density /
regression / GP conditional models, a sequential likelihood-free inference
loop with proposal-prior correction, and a Chamfer-distance benchmark.
"""

from .chamfer import chamfer, trajectory_chamfer
from .params import PriorBox, SimParams, default_prior
from .rkhs import (
    RFFBasis,
    mean_embed,
    median_heuristic,
    mmd,
    rbf_kernel,
    rff_map,
    sample_basis,
)
from .sim import (
    BACKEND,
    SimConfig,
    SimulationDivergedError,
    Trajectory,
    build_scene,
    rollout,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "PriorBox",
    "RFFBasis",
    "SimConfig",
    "SimParams",
    "SimulationDivergedError",
    "Trajectory",
    "build_scene",
    "chamfer",
    "default_prior",
    "mean_embed",
    "median_heuristic",
    "mmd",
    "rbf_kernel",
    "rff_map",
    "rollout",
    "sample_basis",
    "trajectory_chamfer",
    "__version__",
]
