"""Pure-numpy substep kernel, the fallback for the compiled core.

Semantics must match ``_core.pyx`` (same force model and update order);
small floating-point drift between the backends is acceptable.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def run_substeps(
    pos: np.ndarray,
    vel: np.ndarray,
    mass: np.ndarray,
    edges_i: np.ndarray,
    edges_j: np.ndarray,
    rest: np.ndarray,
    stiffness: np.ndarray,
    anchor_idx: np.ndarray,
    anchor_to: np.ndarray,
    nsub: int,
    h: float,
    damping: float,
    gravity: float,
    table_y: float,
    friction: float,
    pole_x: float,
    pole_y: float,
    pole_r: float,
) -> int:
    """Advance `nsub` semi-implicit Euler substeps in place.

    Anchors are driven kinematically from their current positions to
    `anchor_to` by linear interpolation across the substeps.
    Returns 0 on success, 1 if a non-finite value appeared.
    """
    free = np.ones(pos.shape[0], dtype=bool)
    free[anchor_idx] = False
    anchor_from = pos[anchor_idx].copy()
    inv_m = 1.0 / mass

    for s in range(nsub):
        force = -damping * mass[:, None] * vel
        force[:, 1] -= mass * gravity

        delta = pos[edges_j] - pos[edges_i]
        length = np.sqrt(np.sum(delta * delta, axis=1))
        safe = np.where(length > 0.0, length, 1.0)
        fvec = (stiffness * (length - rest) / safe)[:, None] * delta
        fvec[length == 0.0] = 0.0
        np.add.at(force, edges_i, fvec)
        np.subtract.at(force, edges_j, fvec)

        # Coulomb friction for particles in table contact: the tangential
        # force that would stop the particle this substep, clamped to mu*|fn|.
        contact = pos[:, 1] <= table_y + 1e-9
        fn = np.where(contact, np.maximum(0.0, -force[:, 1]), 0.0)
        fstop = -mass * vel[:, 0] / h - force[:, 0]
        ft = np.clip(fstop, -friction * fn, friction * fn)
        force[:, 0] += np.where(contact, ft, 0.0)

        vel[free] += h * force[free] * inv_m[free, None]
        pos[free] += h * vel[free]

        below = free & (pos[:, 1] < table_y)
        pos[below, 1] = table_y
        vel[below, 1] = np.maximum(vel[below, 1], 0.0)

        if pole_r > 0.0:
            dp = pos - np.array([pole_x, pole_y])
            dist = np.sqrt(np.sum(dp * dp, axis=1))
            inside = free & (dist < pole_r) & (dist > 0.0)
            if np.any(inside):
                nrm = dp[inside] / dist[inside, None]
                pos[inside] = np.array([pole_x, pole_y]) + pole_r * nrm
                vn = np.sum(vel[inside] * nrm, axis=1)
                vel[inside] -= np.minimum(vn, 0.0)[:, None] * nrm

        alpha = (s + 1.0) / nsub
        target = anchor_from + alpha * (anchor_to - anchor_from)
        vel[anchor_idx] = (target - pos[anchor_idx]) / h
        pos[anchor_idx] = target

    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
        return 1
    return 0
