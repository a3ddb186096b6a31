"""Stepping and rollout on top of the substep kernel."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..params import SimParams
from . import scene as _scene
from .scene import DeformableMesh, ScriptedMotion, SimConfig, build_scene


class SimulationDivergedError(RuntimeError):
    def __init__(self, step_index: int):
        super().__init__(f"simulation diverged at step {step_index}")
        self.step_index = step_index


def _kernel_args(mesh: DeformableMesh):
    edges = np.concatenate([mesh.struct_edges, mesh.bend_edges], axis=0)
    rest = np.concatenate([mesh.struct_rest, mesh.bend_rest])
    ks = np.concatenate([
        np.full(len(mesh.struct_rest), mesh.struct_k),
        np.full(len(mesh.bend_rest), mesh.bend_k),
    ])
    px, py, pr = mesh.pole if mesh.pole is not None else (0.0, 0.0, 0.0)
    return (
        np.ascontiguousarray(edges[:, 0]),
        np.ascontiguousarray(edges[:, 1]),
        np.ascontiguousarray(rest),
        np.ascontiguousarray(ks),
        px, py, pr,
    )


def step(
    mesh: DeformableMesh,
    anchor_target,
    config: SimConfig,
    step_index: int = 0,
) -> DeformableMesh:
    """One control step toward `anchor_target`; returns the updated mesh."""
    from . import run_substeps

    out = mesh.copy()
    ei, ej, rest, ks, px, py, pr = _kernel_args(out)
    target = np.broadcast_to(
        np.asarray(anchor_target, dtype=np.float64).reshape(-1, 2),
        (len(out.anchor_indices), 2),
    )
    status = run_substeps(
        out.positions, out.velocities, np.ascontiguousarray(out.masses),
        ei, ej, rest, ks,
        np.ascontiguousarray(out.anchor_indices),
        np.array(target, dtype=np.float64),
        config.substeps, config.dt, config.damping, config.gravity,
        config.table_height, out.friction, px, py, pr,
    )
    if status != 0 or np.max(np.abs(out.positions)) > out.workspace_bound:
        raise SimulationDivergedError(step_index)
    return out


@dataclass
class Trajectory:
    """Time-indexed record of one rollout.

    `gripper` holds the anchor pose per step (the simulated gripper),
    `actions` the commanded anchor targets, `particles` the full particle
    field kept for evaluation only.
    """

    scenario: str
    params: SimParams
    gripper: np.ndarray  # (T, 2)
    actions: np.ndarray  # (T, 2)
    particles: np.ndarray  # (T, P, 2)
    diverged: bool = False
    diverged_step: int | None = None

    @property
    def length(self) -> int:
        return self.gripper.shape[0]

    def dump_jsonl(self, path):
        with open(path, "w") as f:
            for t in range(self.length):
                rec = {
                    "t": t,
                    "gripper_pose": self.gripper[t].tolist(),
                    "action": self.actions[t].tolist(),
                    "particles": self.particles[t].tolist(),
                }
                f.write(json.dumps(rec) + "\n")


def rollout(
    scenario: str,
    params: SimParams,
    T: int = 200,
    config: SimConfig | None = None,
    cloth_n: int = _scene.CLOTH_N,
    rope_n: int = _scene.ROPE_N,
) -> Trajectory:
    """Roll out a scripted scene for T control steps.

    Pure function of its arguments: identical inputs give bit-identical
    trajectories. A diverged simulation is flagged, not dropped; the state
    is frozen at the last finite configuration.
    """
    from . import run_substeps

    if T < 2:
        raise ValueError("rollout needs T >= 2")
    config = config or SimConfig()
    mesh, motion = build_scene(
        scenario, params, T=T, cloth_n=cloth_n, rope_n=rope_n,
        table_height=config.table_height,
    )
    # seeded symmetry-breaking jitter, small enough not to move observables
    rng = np.random.default_rng(config.seed)
    free = np.ones(mesh.n_particles, dtype=bool)
    free[mesh.anchor_indices] = False
    mesh.positions[free] += 1e-8 * rng.standard_normal((int(free.sum()), 2))

    ei, ej, rest, ks, px, py, pr = _kernel_args(mesh)
    pos, vel = mesh.positions, mesh.velocities
    masses = np.ascontiguousarray(mesh.masses)
    anchors = np.ascontiguousarray(mesh.anchor_indices)

    gripper = np.empty((T, 2))
    particles = np.empty((T, mesh.n_particles, 2))
    diverged = False
    diverged_step = None

    for t in range(T):
        gripper[t] = pos[anchors].mean(axis=0)
        particles[t] = pos
        if diverged:
            continue
        target = np.broadcast_to(motion.waypoints[t], (len(anchors), 2))
        status = run_substeps(
            pos, vel, masses, ei, ej, rest, ks, anchors,
            np.array(target, dtype=np.float64),
            config.substeps, config.dt, config.damping, config.gravity,
            config.table_height, mesh.friction, px, py, pr,
        )
        bad = status != 0 or np.max(np.abs(pos)) > mesh.workspace_bound
        if bad:
            diverged = True
            diverged_step = t
            # freeze at the last finite configuration
            pos[...] = particles[t]
            vel[...] = 0.0

    return Trajectory(
        scenario=scenario,
        params=params,
        gripper=gripper,
        actions=motion.waypoints.copy(),
        particles=particles,
        diverged=diverged,
        diverged_step=diverged_step,
    )
