"""Feature pipelines turning observed trajectories into model inputs.

Three variants: classic summary statistics, a fixed RFF map over the whole
flattened trajectory, and per-frame raw blocks for the trainable RKHS-net
frontend (which embeds keypoints inside the model).
"""

from __future__ import annotations

import numpy as np

from .rkhs import RFFBasis, rff_map


def summary_stats(states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Time-series statistics of state differences.

    tau_t = s_t - s_{t-1}; features are all inner products <tau_i, a_j>
    over time (actions aligned with the step that produced each
    difference), then per-dimension mean and population variance of tau.
    Length: D_s * D_a + 2 * D_s.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    T = states.shape[0]
    if T < 2:
        raise ValueError("summary_stats needs at least 2 states")
    tau = np.diff(states, axis=0)  # (T-1, D_s)
    if actions.shape[0] == T:
        act = actions[1:]
    elif actions.shape[0] == T - 1:
        act = actions
    else:
        raise ValueError("actions must have length T or T-1")
    inner = tau.T @ act  # (D_s, D_a)
    return np.concatenate([inner.ravel(), tau.mean(axis=0), tau.var(axis=0)])


def subsample_indices(T: int, n_frames: int) -> np.ndarray:
    """Endpoint-inclusive uniform frame selection: round(j*(T-1)/(n-1))."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if T < n_frames:
        raise ValueError(f"trajectory length {T} < requested frames {n_frames}")
    if n_frames == 1:
        return np.array([0])
    return np.round(np.arange(n_frames) * (T - 1) / (n_frames - 1)).astype(int)


def frame_blocks(states: np.ndarray, actions: np.ndarray, n_frames: int) -> np.ndarray:
    """Subsampled raw frames [pose(2), action(2), keypoints(2K)], flattened.

    This is the input layout the RKHS frontend consumes.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    idx = subsample_indices(states.shape[0], n_frames)
    frames = np.concatenate(
        [states[idx, :2], actions[idx], states[idx, 2:]], axis=1
    )
    return frames.ravel()


def rkhs_features(
    states: np.ndarray,
    actions: np.ndarray,
    basis: RFFBasis,
    n_frames: int,
) -> np.ndarray:
    """Per-frame [pose, action, keypoint mean embedding], concatenated.

    Permutation-invariant in the keypoints of every frame.
    Length: n_frames * (2 + 2 + 2M).
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    idx = subsample_indices(states.shape[0], n_frames)
    out = []
    for t in idx:
        kp = states[t, 2:].reshape(-1, 2)
        emb = rff_map(kp, basis).mean(axis=0)
        out.append(np.concatenate([states[t, :2], actions[t], emb]))
    return np.concatenate(out)


def mdrff_features(states: np.ndarray, actions: np.ndarray, basis: RFFBasis) -> np.ndarray:
    """One fixed (non-trainable) RFF map of the flattened trajectory.

    Not permutation-invariant: swapping keypoints within a frame changes
    the flattened vector and hence the features.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    flat = np.concatenate([states.ravel(), actions.ravel()])
    if flat.size != basis.d:
        raise ValueError(
            f"flattened trajectory length {flat.size} does not match basis dim {basis.d}"
        )
    return rff_map(flat, basis)
