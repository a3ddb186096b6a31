"""Mixture-density network with full-covariance Gaussian components."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .net import Adam, Dense, RKHSFrontend, build_backbone

LOG_2PI = np.log(2.0 * np.pi)
DIAG_FLOOR = 1e-4  # floor on Cholesky diagonals, prevents collapse


class DimensionError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged at epoch {epoch}")
        self.epoch = epoch


@dataclass
class MixturePosterior:
    """Gaussian mixture over parameters, Cholesky-parameterized (Sigma = L L^T)."""

    weights: np.ndarray  # (C,)
    means: np.ndarray  # (C, D)
    scales: np.ndarray  # (C, D, D) lower-triangular, positive diagonal

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.scales = np.asarray(self.scales, dtype=np.float64)
        if self.scales.ndim == 2:
            self.scales = self.scales[None]
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        if np.any(np.diagonal(self.scales, axis1=1, axis2=2) <= 0):
            raise ValueError("Cholesky diagonals must be positive")

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def covariances(self) -> np.ndarray:
        return self.scales @ np.transpose(self.scales, (0, 2, 1))

    def component_logpdfs(self, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        if theta.shape[1] != self.dim:
            raise DimensionError(f"theta dim {theta.shape[1]} != {self.dim}")
        r = theta[:, None, :] - self.means[None]  # (n, C, D)
        z = np.linalg.solve(self.scales[None], r[..., None])[..., 0]
        logdet = np.log(np.diagonal(self.scales, axis1=1, axis2=2)).sum(axis=1)
        return -0.5 * np.sum(z * z, axis=2) - logdet - 0.5 * self.dim * LOG_2PI

    def logpdf(self, theta) -> np.ndarray:
        comp = self.component_logpdfs(theta) + np.log(self.weights)[None]
        m = comp.max(axis=1, keepdims=True)
        return (m + np.log(np.sum(np.exp(comp - m), axis=1, keepdims=True)))[:, 0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        eps = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.einsum("nij,nj->ni", self.scales[comp], eps)

    def marginal_std(self) -> np.ndarray:
        """Per-dimension standard deviation of the full mixture."""
        cov = self.covariances()
        var_within = np.sum(self.weights[:, None] * np.diagonal(cov, axis1=1, axis2=2), axis=0)
        mean = np.sum(self.weights[:, None] * self.means, axis=0)
        var_between = np.sum(self.weights[:, None] * (self.means - mean) ** 2, axis=0)
        return np.sqrt(var_within + var_between)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixturePosterior":
        cov = np.asarray(d["covariances"], dtype=np.float64)
        return cls(
            weights=np.asarray(d["weights"]),
            means=np.asarray(d["means"]),
            scales=np.linalg.cholesky(cov),
        )


def mixture_nll(posterior: MixturePosterior, theta) -> float | np.ndarray:
    """Negative log density of the mixture at theta."""
    theta_arr = np.asarray(theta, dtype=np.float64)
    out = -posterior.logpdf(theta_arr)
    return float(out[0]) if theta_arr.ndim == 1 else out


def mixture_sample(posterior: MixturePosterior, n: int, rng: np.random.Generator) -> np.ndarray:
    """Ancestral sampling: component by weight, then Gaussian via its scale."""
    return posterior.sample(n, rng)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-6
    epochs: int = 200
    batch_size: int = 64
    validation_fraction: float = 0.2
    weight_decay: float = 0.0
    lr_min: float | None = None  # set to enable per-epoch cosine decay
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.lr_min is not None and not 0 < self.lr_min <= self.learning_rate:
            raise ValueError("lr_min must lie in (0, learning_rate]")
        if not 0.0 < self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must lie in (0, 0.5]")


class MDNModel:
    """Backbone + mixture head; optionally fronted by a trainable RKHS layer.

    Internally the target is normalized to the unit box of `box_low/high`,
    and an affine de-normalization is applied when exporting posteriors, so
    training losses are in normalized space.
    """

    def __init__(
        self,
        input_dim: int,
        theta_dim: int = 4,
        n_components: int = 4,
        hidden=(1024, 1024, 1024),
        frontend: RKHSFrontend | None = None,
        box_low=None,
        box_high=None,
        standardize: bool = True,
        seed: int = 0,
    ):
        rng = np.random.default_rng(seed)
        self.frontend = frontend
        self.input_dim = frontend.in_dim if frontend is not None else input_dim
        self.theta_dim = theta_dim
        self.n_components = n_components
        self.hidden = tuple(hidden)
        backbone_in = frontend.out_dim if frontend is not None else input_dim
        self.backbone, width = build_backbone(backbone_in, hidden, rng)
        self._n_off = theta_dim * (theta_dim - 1) // 2
        head_dim = n_components * (1 + 2 * theta_dim + self._n_off)
        self.head = Dense(width, head_dim, rng)
        self.box_low = (
            np.zeros(theta_dim) if box_low is None else np.asarray(box_low, dtype=np.float64)
        )
        self.box_high = (
            np.ones(theta_dim) if box_high is None else np.asarray(box_high, dtype=np.float64)
        )
        self.standardize = standardize and frontend is None
        self.feat_mean = np.zeros(backbone_in)
        self.feat_std = np.ones(backbone_in)
        self._tril = np.tril_indices(theta_dim, k=-1)

    # -- forward/backward ---------------------------------------------------

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

    def named_parameters(self):
        out = []
        for i, layer in enumerate(self.layers()):
            for name, arr in layer.params():
                out.append((f"layer{i}.{name}", arr))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def gradients(self):
        out = []
        for layer in self.layers():
            out.extend(layer.grads())
        return out

    # -- mixture head -------------------------------------------------------

    def _unpack(self, out: np.ndarray):
        B = out.shape[0]
        C, D, noff = self.n_components, self.theta_dim, self._n_off
        i = 0
        logits = out[:, i:i + C]; i += C
        mu = out[:, i:i + C * D].reshape(B, C, D); i += C * D
        diag_raw = out[:, i:i + C * D].reshape(B, C, D); i += C * D
        off_raw = out[:, i:i + C * noff].reshape(B, C, noff)
        L = np.zeros((B, C, D, D))
        L[:, :, self._tril[0], self._tril[1]] = off_raw
        diag = np.logaddexp(0.0, diag_raw) + DIAG_FLOOR  # softplus + floor
        rng_d = np.arange(D)
        L[:, :, rng_d, rng_d] = diag
        return logits, mu, L, diag_raw

    def _mixture_from(self, logits, mu, L) -> MixturePosterior:
        w = np.exp(logits - logits.max())
        w = w / w.sum()
        width = self.box_high - self.box_low
        means = self.box_low + width * mu
        scales = width[:, None] * L  # diag(width) @ L
        return MixturePosterior(weights=w, means=means, scales=scales)

    def posterior(self, x) -> MixturePosterior:
        out = self.forward(np.atleast_2d(x))
        logits, mu, L, _ = self._unpack(out)
        return self._mixture_from(logits[0], mu[0], L[0])

    def _normalize_theta(self, theta):
        return (np.atleast_2d(theta) - self.box_low) / (self.box_high - self.box_low)

    def loss_and_grads(self, x, theta):
        """Mean mixture NLL (normalized space) and grads for all parameters."""
        out = self.forward(x)
        B = out.shape[0]
        C, D = self.n_components, self.theta_dim
        logits, mu, L, diag_raw = self._unpack(out)
        u = self._normalize_theta(np.asarray(theta, dtype=np.float64))

        r = u[:, None, :] - mu  # (B, C, D)
        z = np.linalg.solve(L, r[..., None])[..., 0]
        diag = np.diagonal(L, axis1=2, axis2=3)
        logdet = np.log(diag).sum(axis=2)
        log_n = -0.5 * np.sum(z * z, axis=2) - logdet - 0.5 * D * LOG_2PI
        la = logits - _logsumexp(logits)
        s = la + log_n
        lse = _logsumexp(s)
        loss = float(np.mean(-lse))

        w = np.exp(s - lse)  # responsibilities (B, C)
        alpha = np.exp(la)
        dlogits = (alpha - w) / B
        g = np.linalg.solve(np.transpose(L, (0, 1, 3, 2)), z[..., None])[..., 0]
        dmu = -w[..., None] * g / B
        outer = g[..., :, None] * z[..., None, :]
        dL = -w[..., None, None] * outer / B
        rng_d = np.arange(D)
        ddiag = dL[:, :, rng_d, rng_d] + w[..., None] / diag / B
        sig = 1.0 / (1.0 + np.exp(-diag_raw))
        ddiag_raw = ddiag * sig
        doff = dL[:, :, self._tril[0], self._tril[1]]

        dout = np.concatenate(
            [
                dlogits,
                dmu.reshape(B, C * D),
                ddiag_raw.reshape(B, C * D),
                doff.reshape(B, C * self._n_off),
            ],
            axis=1,
        )
        self.backward(dout)
        return loss, self.gradients()

    def mean_nll(self, x, theta) -> float:
        out = self.forward(x)
        logits, mu, L, _ = self._unpack(out)
        u = self._normalize_theta(np.asarray(theta, dtype=np.float64))
        r = u[:, None, :] - mu
        z = np.linalg.solve(L, r[..., None])[..., 0]
        logdet = np.log(np.diagonal(L, axis1=2, axis2=3)).sum(axis=2)
        log_n = -0.5 * np.sum(z * z, axis=2) - logdet - 0.5 * self.theta_dim * LOG_2PI
        s = logits - _logsumexp(logits) + log_n
        return float(np.mean(-_logsumexp(s)))

    # -- persistence --------------------------------------------------------

    def checkpoint(self) -> dict:
        d = {
            "architecture": {
                "input_dim": self.input_dim,
                "theta_dim": self.theta_dim,
                "n_components": self.n_components,
                "hidden": list(self.hidden),
                "standardize": self.standardize,
            },
            "box_low": self.box_low.tolist(),
            "box_high": self.box_high.tolist(),
            "feat_mean": self.feat_mean.tolist(),
            "feat_std": self.feat_std.tolist(),
            "weights": {n: p.ravel().tolist() for n, p in self.named_parameters()},
            "shapes": {n: list(p.shape) for n, p in self.named_parameters()},
        }
        if self.frontend is not None:
            d["rkhs_basis"] = {
                "M": self.frontend.m,
                "d": 2,
                "sigma": float(self.frontend.sigma[0]),
                "frequencies": self.frontend.omega.ravel().tolist(),
                "n_frames": self.frontend.n_frames,
                "n_keypoints": self.frontend.n_keypoints,
            }
        return d

    def save(self, path, extra: dict | None = None):
        d = self.checkpoint()
        if extra:
            d.update(extra)
        with open(path, "w") as f:
            json.dump(d, f)

    def load_weights(self, d: dict):
        shapes = d["shapes"]
        for name, p in self.named_parameters():
            p[...] = np.array(d["weights"][name]).reshape(shapes[name])
        self.feat_mean = np.array(d["feat_mean"])
        self.feat_std = np.array(d["feat_std"])


def mdn_forward(features, model: MDNModel) -> MixturePosterior:
    """Conditional mixture posterior for one feature vector."""
    return model.posterior(features)


@dataclass
class TrainResult:
    train_nll: list = field(default_factory=list)
    val_nll: list = field(default_factory=list)
    train_idx: np.ndarray | None = None
    val_idx: np.ndarray | None = None
    best_epoch: int = 0

    @property
    def final_val_nll(self) -> float:
        """Validation loss of the weights the model ends up with."""
        return self.val_nll[self.best_epoch]


def train(model, x, theta, config: TrainConfig) -> TrainResult:
    """Adam on the model's loss over (features, theta) pairs.

    Deterministic under a fixed config seed and data order. The RKHS
    frontend's frequencies and bandwidth, when present, are updated in the
    same pass as the network weights.
    """
    x = np.asarray(x, dtype=np.float64)
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    n = x.shape[0]
    if n == 0:
        raise ValueError("dataset must be non-empty")
    n_val = max(1, int(round(n * config.validation_fraction)))
    if n_val >= n:
        raise ValueError("validation split leaves no training data")
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    xt, tt = x[tr_idx], theta[tr_idx]
    xv, tv = x[val_idx], theta[val_idx]

    if getattr(model, "standardize", False):
        feats = xt
        model.feat_mean = feats.mean(axis=0)
        model.feat_std = feats.std(axis=0) + 1e-8

    opt = Adam(model.parameters(), lr=config.learning_rate,
               weight_decay=config.weight_decay)
    result = TrainResult(train_idx=tr_idx, val_idx=val_idx)
    n_tr = xt.shape[0]
    best_val = np.inf
    best_params = None
    for epoch in range(config.epochs):
        if config.lr_min is not None:  # cosine decay across epochs
            opt.lr = config.lr_min + 0.5 * (config.learning_rate - config.lr_min) * (
                1.0 + np.cos(np.pi * epoch / config.epochs)
            )
        order = rng.permutation(n_tr)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_tr, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = model.loss_and_grads(xt[idx], tt[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            opt.step(grads)
            if model.frontend is not None:
                model.frontend.clamp()
            epoch_loss += loss
            n_batches += 1
        result.train_nll.append(epoch_loss / n_batches)
        val = model.mean_nll(xv, tv)
        result.val_nll.append(val)
        if val < best_val:
            best_val = val
            best_params = [p.copy() for p in model.parameters()]
            result.best_epoch = epoch
    # keep the best-validation weights, not the last epoch's
    if best_params is not None:
        for p, b in zip(model.parameters(), best_params):
            p[...] = b
    return result


def fit_mixture_em(
    samples: np.ndarray,
    n_components: int,
    seed: int = 0,
    n_iter: int = 100,
    reg: float = 1e-6,
    tol: float = 1e-8,
) -> MixturePosterior:
    """Expectation-maximization fit of a full-covariance mixture to samples."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n, d = x.shape
    rng = np.random.default_rng(seed)
    C = min(n_components, n)
    # k-means++-style seeding: spread initial means across the sample cloud
    # so well-separated modes each receive a component
    first = int(rng.integers(n))
    chosen = [first]
    d2 = np.sum((x - x[first]) ** 2, axis=1)
    for _ in range(C - 1):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        nxt = int(rng.choice(n, p=probs))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((x - x[nxt]) ** 2, axis=1))
    means = x[chosen].copy()
    cov0 = np.cov(x.T) + reg * np.eye(d) if n > 1 else np.eye(d)
    covs = np.tile(np.atleast_2d(cov0), (C, 1, 1))
    weights = np.full(C, 1.0 / C)
    prev = -np.inf
    for _ in range(n_iter):
        post = MixturePosterior(weights, means, np.linalg.cholesky(covs))
        comp = post.component_logpdfs(x) + np.log(weights)[None]
        m = comp.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(comp - m).sum(axis=1, keepdims=True))
        ll = float(lse.mean())
        resp = np.exp(comp - lse)  # (n, C)
        nk = resp.sum(axis=0) + 1e-12
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        for c in range(C):
            r = x - means[c]
            covs[c] = (resp[:, c, None] * r).T @ r / nk[c] + reg * np.eye(d)
        if abs(ll - prev) < tol:
            break
        prev = ll
    weights = weights / weights.sum()
    return MixturePosterior(weights, means, np.linalg.cholesky(covs))


def _logsumexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return m + np.log(np.sum(np.exp(a - m), axis=1, keepdims=True))
