"""Random Fourier feature bases and kernel mean embeddings of point sets.

Convention: k(x, x') = exp(-||x - x'||^2 / (2 sigma^2)), realized by
frequencies omega ~ N(0, I) applied as omega / sigma. Feature layout is
interleaved [cos_1, sin_1, ..., cos_M, sin_M] / sqrt(M).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RFFBasis:
    frequencies: np.ndarray  # (M, d), unitless
    sigma: float  # length scale > 0
    trainable: bool = False
    seed: int = 0

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=np.float64)
        if self.frequencies.ndim != 2:
            raise ValueError("frequencies must be an (M, d) matrix")
        if not np.all(np.isfinite(self.frequencies)):
            raise ValueError("frequencies must be finite")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def m(self) -> int:
        return self.frequencies.shape[0]

    @property
    def d(self) -> int:
        return self.frequencies.shape[1]

    @property
    def feature_dim(self) -> int:
        return 2 * self.m

    def to_dict(self) -> dict:
        return {
            "M": self.m,
            "d": self.d,
            "sigma": self.sigma,
            "frequencies": self.frequencies.ravel().tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RFFBasis":
        freq = np.array(d["frequencies"], dtype=np.float64).reshape(d["M"], d["d"])
        return cls(frequencies=freq, sigma=d["sigma"], seed=d.get("seed", 0))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "RFFBasis":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def sample_basis(M: int, d: int, sigma: float, seed: int, trainable: bool = False) -> RFFBasis:
    """Draw M i.i.d. standard-normal frequency rows (Bochner sampling)."""
    if M < 1 or d < 1:
        raise ValueError("M and d must be >= 1")
    rng = np.random.default_rng(seed)
    return RFFBasis(
        frequencies=rng.standard_normal((M, d)),
        sigma=float(sigma),
        trainable=trainable,
        seed=seed,
    )


def rff_map(x, basis: RFFBasis) -> np.ndarray:
    """Feature map; accepts a single (d,) point or an (n, d) batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    proj = np.atleast_2d(x) @ (basis.frequencies.T / basis.sigma)  # (n, M)
    out = np.empty((proj.shape[0], 2 * basis.m))
    out[:, 0::2] = np.cos(proj)
    out[:, 1::2] = np.sin(proj)
    out /= np.sqrt(basis.m)
    return out[0] if single else out


def mean_embed(points, basis: RFFBasis) -> np.ndarray:
    """Empirical kernel mean embedding: the mean feature of the point set."""
    pts = _point_array(points)
    return rff_map(pts, basis).mean(axis=0)


def mmd(a, b, basis: RFFBasis) -> float:
    """Approximate maximum mean discrepancy between two point sets."""
    return float(np.linalg.norm(mean_embed(a, basis) - mean_embed(b, basis)))


def embed_gradients(points, basis: RFFBasis):
    """Analytic partials of every embedding coordinate.

    Returns (d_omega, d_sigma, d_points) with shapes
    (2M, M, d), (2M,) and (2M, K, d).
    """
    pts = _point_array(points)
    K, d = pts.shape
    M = basis.m
    scale = 1.0 / (K * np.sqrt(M))
    proj = pts @ (basis.frequencies.T / basis.sigma)  # (K, M)
    sin_p, cos_p = np.sin(proj), np.cos(proj)

    d_omega = np.zeros((2 * M, M, d))
    # each cos/sin coordinate depends only on its own frequency row
    d_omega[0::2][np.arange(M), np.arange(M)] = -scale * (sin_p.T @ pts) / basis.sigma
    d_omega[1::2][np.arange(M), np.arange(M)] = scale * (cos_p.T @ pts) / basis.sigma

    d_sigma = np.empty(2 * M)
    d_sigma[0::2] = scale * np.sum(sin_p * proj, axis=0) / basis.sigma
    d_sigma[1::2] = -scale * np.sum(cos_p * proj, axis=0) / basis.sigma

    d_points = np.empty((2 * M, K, d))
    om = basis.frequencies / basis.sigma  # (M, d)
    d_points[0::2] = -scale * sin_p.T[:, :, None] * om[:, None, :]
    d_points[1::2] = scale * cos_p.T[:, :, None] * om[:, None, :]
    return d_omega, d_sigma, d_points


def rbf_kernel(x, y, sigma: float) -> np.ndarray:
    """Exact RBF Gram matrix, the oracle the RFF map approximates."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    sq = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(y * y, axis=1)[None, :]
        - 2.0 * x @ y.T
    )
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * sigma**2))


def median_heuristic(points) -> float:
    """Median pairwise distance, the standard bandwidth initializer."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = pts.shape[0]
    if n < 2:
        return 1.0
    iu = np.triu_indices(n, k=1)
    dists = np.sqrt(
        np.maximum(
            np.sum(pts * pts, axis=1)[:, None]
            + np.sum(pts * pts, axis=1)[None, :]
            - 2 * pts @ pts.T,
            0.0,
        )
    )[iu]
    med = float(np.median(dists))
    return med if med > 0 else 1.0


def _point_array(points) -> np.ndarray:
    pts = getattr(points, "points", points)
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    if pts.shape[0] < 1 or pts.size == 0:
        raise ValueError("point set must be non-empty")
    return pts
