"""Simulation parameter vector and its uniform prior box."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("bend_stiffness", "elastic_stiffness", "friction", "scale")
PARAM_DIM = 4


@dataclass(frozen=True)
class SimParams:
    """Physical parameters of a deformable scene.

    Stiffnesses are spring constants in N/m, friction is a dimensionless
    Coulomb coefficient, scale multiplies the rest geometry.
    """

    bend_stiffness: float
    elastic_stiffness: float
    friction: float
    scale: float

    def __post_init__(self):
        vec = self.as_array()
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"non-finite simulation parameters: {vec}")
        if self.bend_stiffness <= 0 or self.elastic_stiffness <= 0:
            raise ValueError("stiffnesses must be positive")
        if self.friction < 0:
            raise ValueError("friction must be >= 0")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.bend_stiffness, self.elastic_stiffness, self.friction, self.scale],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, vec) -> "SimParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (PARAM_DIM,):
            raise ValueError(f"expected {PARAM_DIM} parameters, got shape {vec.shape}")
        return cls(*(float(v) for v in vec))


class PriorBox:
    """Uniform product prior over a parameter box."""

    def __init__(self, low, high, names=PARAM_NAMES):
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.names = tuple(names)[: self.low.size]
        if self.low.shape != self.high.shape or self.low.ndim != 1:
            raise ValueError("low/high must be 1-D arrays of equal length")
        if np.any(self.low >= self.high):
            raise ValueError("prior box requires low < high per dimension")

    @property
    def dim(self) -> int:
        return self.low.size

    @property
    def widths(self) -> np.ndarray:
        return self.high - self.low

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.low + self.high)

    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, theta) -> np.ndarray:
        """Elementwise membership for a (n, d) batch or single (d,) vector."""
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        return np.all((theta >= self.low) & (theta <= self.high), axis=1)

    def logpdf(self, theta) -> np.ndarray:
        inside = self.contains(theta)
        out = np.full(inside.shape, -np.inf)
        out[inside] = -np.log(self.volume())
        return out

    def pdf(self, theta) -> np.ndarray:
        return np.exp(self.logpdf(theta))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=(n, self.dim))

    def marginal_std(self) -> np.ndarray:
        return self.widths / np.sqrt(12.0)

    def to_dict(self) -> dict:
        return {
            "low": self.low.tolist(),
            "high": self.high.tolist(),
            "names": list(self.names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorBox":
        return cls(d["low"], d["high"], d.get("names", PARAM_NAMES))


def default_prior() -> PriorBox:
    """Default box: wide enough to cover both stable and crumpling regimes."""
    return PriorBox(
        low=[0.1, 10.0, 0.05, 0.5],
        high=[50.0, 500.0, 1.5, 2.0],
    )
