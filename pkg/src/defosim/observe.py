"""Keypoint observations: noisy, permuted samples of the particle field.

Emulates the documented behavior of learned keypoint extractors: keypoints
are unordered, can relocate between frames, and carry Gaussian jitter. The
full particle field is exposed separately for evaluation only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class ObservationConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ObservationNoise:
    gaussian_std: float = 0.0  # m
    permute: bool = False
    relocation_prob: float = 0.0  # per keypoint per frame
    dropout_resample_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.gaussian_std < 0:
            raise ObservationConfigError("gaussian_std must be >= 0")
        for p in (self.relocation_prob, self.dropout_resample_prob):
            if not 0.0 <= p <= 1.0:
                raise ObservationConfigError("probabilities must lie in [0, 1]")


# Calibrated guesses for the two extractor families; std is a fraction of
# the object diameter and resolved against the scene by `resolve_noise`.
NOISE_PROFILES = {
    "none": dict(gaussian_std_frac=0.0, permute=False,
                 relocation_prob=0.0, dropout_resample_prob=0.0),
    "supervised": dict(gaussian_std_frac=0.01, permute=True,
                       relocation_prob=0.02, dropout_resample_prob=0.0),
    "unsupervised": dict(gaussian_std_frac=0.02, permute=True,
                         relocation_prob=0.1, dropout_resample_prob=0.0),
}


def resolve_noise(profile, object_diameter: float, seed: int = 0) -> ObservationNoise:
    """Turn a named profile (or explicit field dict) into ObservationNoise."""
    if isinstance(profile, ObservationNoise):
        return profile
    if isinstance(profile, str):
        try:
            spec = dict(NOISE_PROFILES[profile])
        except KeyError:
            raise ObservationConfigError(f"unknown noise profile {profile!r}") from None
    else:
        spec = dict(profile)
    frac = spec.pop("gaussian_std_frac", None)
    if frac is not None:
        spec["gaussian_std"] = frac * object_diameter
    return ObservationNoise(seed=seed, **spec)


@dataclass(frozen=True)
class KeypointObservation:
    points: np.ndarray  # (K, 2), unordered

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ObservationConfigError("keypoints must be (K, 2)")
        if not np.all(np.isfinite(self.points)):
            raise ObservationConfigError("keypoints must be finite")

    @property
    def k(self) -> int:
        return self.points.shape[0]


def extract_keypoints(
    particle_positions: np.ndarray,
    mode: str,
    K: int,
    noise: ObservationNoise,
    frame_rng: np.random.Generator,
    semantic_indices=None,
) -> KeypointObservation:
    """Extract K keypoints from one frame's particle field.

    `semantic` mode anchors keypoints at fixed template particles (pass
    `semantic_indices`, e.g. mesh.keypoint_anchors[K]); `diffuse` samples
    particles uniformly per frame. Noise is drawn from `frame_rng`.
    """
    pts = np.asarray(particle_positions, dtype=np.float64)
    P = pts.shape[0]
    if K > P:
        raise ObservationConfigError(f"K={K} exceeds particle count {P}")
    if mode == "semantic":
        if semantic_indices is None or len(semantic_indices) != K:
            raise ObservationConfigError("semantic mode needs K anchor indices")
        kp = pts[np.asarray(semantic_indices, dtype=int)].copy()
    elif mode == "diffuse":
        kp = pts[frame_rng.choice(P, size=K, replace=False)].copy()
    else:
        raise ObservationConfigError(f"unknown keypoint mode {mode!r}")

    if noise.relocation_prob > 0.0:
        jump = frame_rng.random(K) < noise.relocation_prob
        kp[jump] = pts[frame_rng.integers(0, P, size=int(jump.sum()))]
    if noise.dropout_resample_prob > 0.0:
        drop = frame_rng.random(K) < noise.dropout_resample_prob
        kp[drop] = pts[frame_rng.integers(0, P, size=int(drop.sum()))]
    if noise.gaussian_std > 0.0:
        kp += noise.gaussian_std * frame_rng.standard_normal(kp.shape)
    if noise.permute:
        kp = kp[frame_rng.permutation(K)]
    return KeypointObservation(points=kp)


def assemble_state(gripper_pose, keypoints: KeypointObservation) -> np.ndarray:
    """Flatten gripper pose followed by keypoints into one state vector."""
    pose = np.asarray(gripper_pose, dtype=np.float64).reshape(2)
    if not np.all(np.isfinite(pose)):
        raise ObservationConfigError("gripper pose must be finite")
    return np.concatenate([pose, keypoints.points.ravel()])


def disassemble_state(state: np.ndarray) -> tuple[np.ndarray, KeypointObservation]:
    state = np.asarray(state, dtype=np.float64)
    return state[:2], KeypointObservation(points=state[2:].reshape(-1, 2))


def ground_truth_points(particle_positions: np.ndarray) -> np.ndarray:
    """The full particle cloud. Evaluation-only; never fed to inference."""
    return np.asarray(particle_positions, dtype=np.float64).copy()


def observe_trajectory(
    trajectory,
    mode: str,
    K: int,
    noise: ObservationNoise,
    semantic_indices=None,
):
    """Per-frame keypoint observations for a whole trajectory.

    Returns (states, actions): states is (T, 2 + 2K) with per-frame noise
    draws from independent, seed-derived streams.
    """
    T = trajectory.length
    streams = np.random.SeedSequence(noise.seed).spawn(T)
    states = np.empty((T, 2 + 2 * K))
    for t in range(T):
        rng = np.random.default_rng(streams[t])
        obs = extract_keypoints(
            trajectory.particles[t], mode, K, noise, rng,
            semantic_indices=semantic_indices,
        )
        states[t] = assemble_state(trajectory.gripper[t], obs)
    return states, trajectory.actions.copy()


def dump_observations_jsonl(path, states: np.ndarray):
    with open(path, "w") as f:
        for t in range(states.shape[0]):
            rec = {
                "t": t,
                "gripper_pose": states[t, :2].tolist(),
                "keypoints": states[t, 2:].reshape(-1, 2).tolist(),
            }
            f.write(json.dumps(rec) + "\n")
