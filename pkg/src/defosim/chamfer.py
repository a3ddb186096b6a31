"""Bidirectional Chamfer distance between 2-D point sets."""

from __future__ import annotations

import numpy as np


def chamfer(a, b) -> float:
    """Sum of the two directed mean nearest-neighbor distances.

    Exact brute-force nearest neighbors; fine at desk scale.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("chamfer requires non-empty point sets")
    d2 = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    d = np.sqrt(np.maximum(d2, 0.0))
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def trajectory_chamfer(particles_a: np.ndarray, particles_b: np.ndarray) -> float:
    """Mean Chamfer distance across timesteps of two particle records."""
    if particles_a.shape[0] != particles_b.shape[0]:
        raise ValueError("trajectories must have equal length")
    return float(
        np.mean([chamfer(pa, pb) for pa, pb in zip(particles_a, particles_b)])
    )
