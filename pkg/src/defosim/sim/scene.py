"""Scene templates: cloth/rope meshes and scripted anchor motions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..params import SimParams

SCENARIOS = ("wipe", "wind", "fling")

CLOTH_N = 8
ROPE_N = 16
SPACING = 0.03  # m, template rest spacing
PARTICLE_MASS = 0.01  # kg

POLE_CENTER = (0.0, 0.25)
POLE_RADIUS = 0.04


class SceneConfigError(ValueError):
    """Raised for unknown scenarios or inconsistent scene setup."""


@dataclass
class SimConfig:
    dt: float = 1.0 / 960.0  # physics substep, s
    substeps: int = 32  # substeps per control step (32 x 1/960 s = 30 Hz control)
    damping: float = 0.5  # 1/s
    gravity: float = 9.81  # m/s^2
    table_height: float = 0.0  # m
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise SceneConfigError("dt must be positive")
        if self.substeps < 1:
            raise SceneConfigError("substeps must be >= 1")
        if self.damping < 0:
            raise SceneConfigError("damping must be >= 0")


@dataclass
class DeformableMesh:
    positions: np.ndarray  # (P, 2)
    velocities: np.ndarray  # (P, 2)
    masses: np.ndarray  # (P,)
    struct_edges: np.ndarray  # (Ss, 2) int
    struct_rest: np.ndarray  # (Ss,)
    bend_edges: np.ndarray  # (Sb, 2) int
    bend_rest: np.ndarray  # (Sb,)
    struct_k: float
    bend_k: float
    friction: float
    anchor_indices: np.ndarray  # (A,) int
    keypoint_anchors: dict = field(default_factory=dict)  # K -> particle indices
    pole: tuple | None = None  # (x, y, radius) fixed circular obstacle
    workspace_bound: float = 1.0  # m, divergence threshold on |coordinate|

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    def validate(self):
        p = self.n_particles
        for edges, rest in ((self.struct_edges, self.struct_rest),
                            (self.bend_edges, self.bend_rest)):
            if edges.size:
                if edges.min() < 0 or edges.max() >= p:
                    raise SceneConfigError("spring endpoint out of range")
                if np.any(edges[:, 0] == edges[:, 1]):
                    raise SceneConfigError("degenerate spring i == j")
                if np.any(rest <= 0):
                    raise SceneConfigError("rest lengths must be positive")
        if self.anchor_indices.size == 0:
            raise SceneConfigError("anchor set must be non-empty")

    def copy(self) -> "DeformableMesh":
        return DeformableMesh(
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            masses=self.masses,
            struct_edges=self.struct_edges,
            struct_rest=self.struct_rest,
            bend_edges=self.bend_edges,
            bend_rest=self.bend_rest,
            struct_k=self.struct_k,
            bend_k=self.bend_k,
            friction=self.friction,
            anchor_indices=self.anchor_indices,
            keypoint_anchors=self.keypoint_anchors,
            pole=self.pole,
            workspace_bound=self.workspace_bound,
        )


@dataclass
class ScriptedMotion:
    scenario: str
    waypoints: np.ndarray  # (T, 2) anchor targets
    duration: int

    def __post_init__(self):
        if self.waypoints.shape != (self.duration, 2):
            raise SceneConfigError("waypoint count must equal trajectory length")


def _cloth_mesh(params: SimParams, n: int, table_height: float) -> DeformableMesh:
    sp = SPACING * params.scale
    xs = (np.arange(n) - (n - 1) / 2.0) * sp
    ys = table_height + 0.005 + np.arange(n) * sp  # row 0 at the bottom
    gx, gy = np.meshgrid(xs, ys)
    pos = np.stack([gx.ravel(), gy.ravel()], axis=1)

    def idx(r, c):
        return r * n + c

    struct, srest = [], []
    bend, brest = [], []
    for r in range(n):
        for c in range(n):
            if c + 1 < n:
                struct.append((idx(r, c), idx(r, c + 1))); srest.append(sp)
            if r + 1 < n:
                struct.append((idx(r, c), idx(r + 1, c))); srest.append(sp)
            # shear diagonals keep the grid from collapsing sideways
            if r + 1 < n and c + 1 < n:
                struct.append((idx(r, c), idx(r + 1, c + 1))); srest.append(sp * np.sqrt(2))
                struct.append((idx(r, c + 1), idx(r + 1, c))); srest.append(sp * np.sqrt(2))
            if c + 2 < n:
                bend.append((idx(r, c), idx(r, c + 2))); brest.append(2 * sp)
            if r + 2 < n:
                bend.append((idx(r, c), idx(r + 2, c))); brest.append(2 * sp)

    corners = [idx(0, 0), idx(0, n - 1), idx(n - 1, 0), idx(n - 1, n - 1)]
    midpoints = [idx(0, n // 2), idx(n - 1, n // 2), idx(n // 2, 0), idx(n // 2, n - 1)]
    diagonal = np.sqrt(2) * (n - 1) * sp
    return DeformableMesh(
        positions=pos,
        velocities=np.zeros_like(pos),
        masses=np.full(n * n, PARTICLE_MASS),
        struct_edges=np.array(struct, dtype=np.int64),
        struct_rest=np.array(srest),
        bend_edges=np.array(bend, dtype=np.int64),
        bend_rest=np.array(brest),
        struct_k=params.elastic_stiffness,
        bend_k=params.bend_stiffness,
        friction=params.friction,
        anchor_indices=np.array([idx(n - 1, n // 2)], dtype=np.int64),
        keypoint_anchors={4: corners, 8: corners + midpoints},
        workspace_bound=10.0 * diagonal,
    )


def _rope_mesh(params: SimParams, p: int) -> DeformableMesh:
    sp = SPACING * params.scale
    px, py = POLE_CENTER
    orbit = POLE_RADIUS + 0.02
    pos = np.stack(
        [px + orbit + np.arange(p) * sp, np.full(p, py)], axis=1
    )
    struct = np.stack([np.arange(p - 1), np.arange(1, p)], axis=1)
    bend = np.stack([np.arange(p - 2), np.arange(2, p)], axis=1)
    length = (p - 1) * sp
    kp = {
        k: np.round(np.linspace(0, p - 1, k)).astype(int).tolist()
        for k in (4, 8)
    }
    return DeformableMesh(
        positions=pos,
        velocities=np.zeros_like(pos),
        masses=np.full(p, PARTICLE_MASS),
        struct_edges=struct.astype(np.int64),
        struct_rest=np.full(p - 1, sp),
        bend_edges=bend.astype(np.int64),
        bend_rest=np.full(p - 2, 2 * sp),
        struct_k=params.elastic_stiffness,
        bend_k=params.bend_stiffness,
        friction=params.friction,
        anchor_indices=np.array([0], dtype=np.int64),
        keypoint_anchors=kp,
        pole=(px, py, POLE_RADIUS),
        workspace_bound=10.0 * length,
    )


def _wipe_waypoints(start: np.ndarray, T: int) -> np.ndarray:
    # back-and-forth scrub; the reversals keep the cloth slipping over the
    # table across the whole friction range instead of sticking outright
    frac = np.linspace(0.0, 1.0, T)
    x = np.where(
        frac < 0.4,
        0.5 * frac / 0.4,
        np.where(
            frac < 0.7,
            0.5 - 0.35 * (frac - 0.4) / 0.3,
            0.15 + 0.35 * (frac - 0.7) / 0.3,
        ),
    )
    # periodic wrist lift: unloading and reloading the table contact makes
    # the stick-slip transitions, and hence the friction level, observable
    y = 0.01 * 0.5 * (1.0 - np.cos(2.0 * np.pi * 5.0 * frac))
    wp = np.tile(start, (T, 1))
    wp[:, 0] += x
    wp[:, 1] += y
    return wp


def _fling_waypoints(start: np.ndarray, T: int) -> np.ndarray:
    # rise, lower, then drag along the table
    t1, t2 = int(0.3 * T), int(0.6 * T)
    wp = np.tile(start, (T, 1))
    rise, lower, drag = 0.25, 0.25, 0.4
    for t in range(T):
        if t < t1:
            wp[t, 1] += rise * t / max(t1 - 1, 1)
        elif t < t2:
            wp[t, 1] += rise - lower * (t - t1) / max(t2 - t1 - 1, 1)
        else:
            wp[t, 1] += rise - lower
            wp[t, 0] += drag * (t - t2) / max(T - t2 - 1, 1)
    return wp


def _wind_waypoints(T: int) -> np.ndarray:
    # circular path around the pole, 2 turns
    px, py = POLE_CENTER
    orbit = POLE_RADIUS + 0.02
    phi = -2.0 * np.pi * 2.0 * np.linspace(0.0, 1.0, T)
    return np.stack([px + orbit * np.cos(phi), py + orbit * np.sin(phi)], axis=1)


def build_scene(
    scenario: str,
    params: SimParams,
    T: int = 200,
    cloth_n: int = CLOTH_N,
    rope_n: int = ROPE_N,
    table_height: float = 0.0,
) -> tuple[DeformableMesh, ScriptedMotion]:
    """Build the canonical mesh for a scenario plus its scripted anchor motion."""
    if scenario in ("wipe", "fling"):
        mesh = _cloth_mesh(params, cloth_n, table_height)
        start = mesh.positions[mesh.anchor_indices[0]].copy()
        wp = _wipe_waypoints(start, T) if scenario == "wipe" else _fling_waypoints(start, T)
    elif scenario == "wind":
        mesh = _rope_mesh(params, rope_n)
        wp = _wind_waypoints(T)
    else:
        raise SceneConfigError(f"unknown scenario {scenario!r}")
    mesh.validate()
    return mesh, ScriptedMotion(scenario=scenario, waypoints=wp, duration=T)
