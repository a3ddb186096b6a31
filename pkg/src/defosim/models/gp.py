"""Exact Gaussian-process regression with grid-searched hyperparameters.

One independent GP per target dimension; the joint posterior is the
product of the per-dimension Gaussians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .mdn import MixturePosterior

JITTER_START = 1e-6
JITTER_MAX = 1e-3


class GPNumericalError(RuntimeError):
    pass


@dataclass
class GPModel:
    x: np.ndarray  # (n, f) training inputs
    y: np.ndarray  # (n,) targets for one dimension
    lengthscale: float
    signal_var: float
    noise_var: float
    chol: tuple  # cho_factor of K + noise*I
    alpha: np.ndarray  # (K + noise*I)^-1 y
    log_marginal: float


def _kernel(a: np.ndarray, b: np.ndarray, ell: float, s2: float) -> np.ndarray:
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    return s2 * np.exp(-np.maximum(sq, 0.0) / (2.0 * ell**2))


def _factor(gram: np.ndarray, noise: float):
    jitter = JITTER_START
    while jitter <= JITTER_MAX:
        try:
            return cho_factor(gram + (noise + jitter) * np.eye(gram.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise GPNumericalError("Gram factorization failed after jitter escalation")


def default_hyper_grid(x: np.ndarray, y: np.ndarray) -> list[tuple[float, float, float]]:
    """ell/signal/noise grid scaled to the data, per dimension-free heuristics."""
    x = np.atleast_2d(x)
    n = x.shape[0]
    if n > 1:
        iu = np.triu_indices(n, k=1)
        d = np.sqrt(
            np.maximum(
                np.sum(x * x, axis=1)[:, None]
                + np.sum(x * x, axis=1)[None, :]
                - 2 * x @ x.T,
                0.0,
            )
        )[iu]
        med = float(np.median(d)) or 1.0
    else:
        med = 1.0
    var_y = float(np.var(y)) or 1.0
    grid = []
    for lf in (0.1, 0.3, 1.0, 3.0, 10.0):
        for sf in (0.5, 1.0, 2.0):
            for nf in (1e-4, 1e-2, 1e-1):
                grid.append((lf * med, sf * var_y, nf * var_y))
    return grid


def gp_fit(x, y, hyper_grid=None) -> GPModel:
    """Exact GP fit, hyperparameters by maximum log marginal likelihood."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    n = x.shape[0]
    if n < 1:
        raise ValueError("GP fit needs at least 1 point")
    grid = hyper_grid if hyper_grid is not None else default_hyper_grid(x, y)
    if not grid:
        raise ValueError("hyper_grid must be non-empty")

    best = None
    for ell, s2, noise in grid:
        gram = _kernel(x, x, ell, s2)
        chol = _factor(gram, noise)
        alpha = cho_solve(chol, y)
        logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
        lml = -0.5 * float(y @ alpha) - 0.5 * logdet - 0.5 * n * np.log(2 * np.pi)
        if best is None or lml > best.log_marginal:
            best = GPModel(x, y, ell, s2, noise, chol, alpha, lml)
    return best


def gp_predict(model: GPModel, x_star) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and (latent) variance at query points."""
    xq = np.atleast_2d(np.asarray(x_star, dtype=np.float64))
    k_star = _kernel(xq, model.x, model.lengthscale, model.signal_var)  # (q, n)
    mean = k_star @ model.alpha
    v = cho_solve(model.chol, k_star.T)  # (n, q)
    var = model.signal_var - np.sum(k_star * v.T, axis=1)
    return mean, np.maximum(var, 0.0)


def gp_posterior(models: list[GPModel], features) -> MixturePosterior:
    """Joint posterior over parameters: product of per-dimension GPs."""
    means, stds = [], []
    for m in models:
        mu, var = gp_predict(m, features)
        means.append(mu[0])
        stds.append(np.sqrt(max(var[0], 1e-16)))
    return MixturePosterior(
        weights=np.array([1.0]),
        means=np.array(means)[None],
        scales=np.diag(stds)[None],
    )
