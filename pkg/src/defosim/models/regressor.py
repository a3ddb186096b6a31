"""Unimodal-posterior regressor: predicts the parameter mean, with the
posterior spread set from per-dimension validation L1 error."""

from __future__ import annotations

import numpy as np

from .mdn import DimensionError, MixturePosterior, TrainConfig, train
from .net import Dense, build_backbone


class RegressorModel:
    """3-layer backbone with a linear head regressing normalized parameters.

    Trains with L1 loss; `loss_and_grads` matches the interface the shared
    train loop expects. `val_l1` (original units) is filled by
    `regressor_train` and defines the posterior's diagonal std.
    """

    def __init__(
        self,
        input_dim: int,
        theta_dim: int = 4,
        hidden=(1024, 1024, 1024),
        frontend=None,
        box_low=None,
        box_high=None,
        standardize: bool = True,
        seed: int = 0,
    ):
        rng = np.random.default_rng(seed)
        self.frontend = frontend
        self.input_dim = frontend.in_dim if frontend is not None else input_dim
        self.theta_dim = theta_dim
        self.hidden = tuple(hidden)
        backbone_in = frontend.out_dim if frontend is not None else input_dim
        self.backbone, width = build_backbone(backbone_in, hidden, rng)
        self.head = Dense(width, theta_dim, rng)
        self.box_low = (
            np.zeros(theta_dim) if box_low is None else np.asarray(box_low, dtype=np.float64)
        )
        self.box_high = (
            np.ones(theta_dim) if box_high is None else np.asarray(box_high, dtype=np.float64)
        )
        self.standardize = standardize and frontend is None
        self.feat_mean = np.zeros(backbone_in)
        self.feat_std = np.ones(backbone_in)
        self.val_l1 = np.full(theta_dim, np.nan)

    def layers(self):
        front = [self.frontend] if self.frontend is not None else []
        return front + self.backbone + [self.head]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise DimensionError(
                f"feature length {x.shape[1]} does not match model input {self.input_dim}"
            )
        if self.frontend is not None:
            x = self.frontend.forward(x)
        if self.standardize:
            x = (x - self.feat_mean) / self.feat_std
        for layer in self.backbone:
            x = layer.forward(x)
        return self.head.forward(x)

    def backward(self, dout: np.ndarray):
        dy = self.head.backward(dout)
        for layer in reversed(self.backbone):
            dy = layer.backward(dy)
        if self.standardize:
            dy = dy / self.feat_std
        if self.frontend is not None:
            self.frontend.backward(dy)

    def parameters(self):
        return [p for layer in self.layers() for _, p in layer.params()]

    def gradients(self):
        return [g for layer in self.layers() for g in layer.grads()]

    def _normalize_theta(self, theta):
        return (np.atleast_2d(theta) - self.box_low) / (self.box_high - self.box_low)

    def loss_and_grads(self, x, theta):
        out = self.forward(x)
        u = self._normalize_theta(np.asarray(theta, dtype=np.float64))
        r = out - u
        loss = float(np.mean(np.abs(r)))
        self.backward(np.sign(r) / r.size)
        return loss, self.gradients()

    def mean_nll(self, x, theta) -> float:
        # validation metric for the shared train loop: mean L1 in normalized space
        out = self.forward(x)
        u = self._normalize_theta(np.asarray(theta, dtype=np.float64))
        return float(np.mean(np.abs(out - u)))

    def predict(self, x) -> np.ndarray:
        u = self.forward(np.atleast_2d(x))
        return self.box_low + (self.box_high - self.box_low) * u


def regressor_train(model: RegressorModel, x, theta, config: TrainConfig):
    """Train with L1 loss, then estimate per-dimension std from validation L1."""
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    result = train(model, x, theta, config)
    xv, tv = np.asarray(x)[result.val_idx], theta[result.val_idx]
    pred = model.predict(xv)
    model.val_l1 = np.mean(np.abs(pred - tv), axis=0)
    return result


def regressor_posterior(model: RegressorModel, features) -> MixturePosterior:
    """Unimodal Gaussian: mean = prediction, std = validation L1 per dimension."""
    if np.any(~np.isfinite(model.val_l1)):
        raise RuntimeError("model has no validation L1 estimate; train it first")
    mean = model.predict(features)[0]
    std = np.maximum(model.val_l1, 1e-8)
    return MixturePosterior(
        weights=np.array([1.0]),
        means=mean[None],
        scales=np.diag(std)[None],
    )
