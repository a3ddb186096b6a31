"""Minimal dense-network substrate with hand-written backprop.

The networks here are small and fixed-shape; the only gradient contract is
agreement with central finite differences.
"""

from __future__ import annotations

import numpy as np

from ..rkhs import RFFBasis


class Dense:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        limit = np.sqrt(6.0 / (n_in + n_out))
        self.w = rng.uniform(-limit, limit, size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.dw = self._x.T @ dy
        self.db = dy.sum(axis=0)
        return dy @ self.w.T

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]


class Tanh:
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * (1.0 - self._y**2)

    def params(self):
        return []

    def grads(self):
        return []


class RKHSFrontend:
    """Trainable mean-embedding layer over the keypoint block of each frame.

    Input rows are flattened frames [pose(2), action(2), keypoints(2K)] x
    n_frames; the keypoint block of each frame is replaced by its RFF mean
    embedding. Frequencies and bandwidth are trained with the rest of the
    network.
    """

    SIGMA_FLOOR = 1e-3

    def __init__(self, basis: RFFBasis, n_frames: int, n_keypoints: int):
        if basis.d != 2:
            raise ValueError("keypoint embedding basis must have d=2")
        self.omega = basis.frequencies.copy()
        self.sigma = np.array([basis.sigma])  # 1-element array so Adam can update it
        self.n_frames = n_frames
        self.n_keypoints = n_keypoints
        self.m = basis.m

    @property
    def in_dim(self) -> int:
        return self.n_frames * (4 + 2 * self.n_keypoints)

    @property
    def out_dim(self) -> int:
        return self.n_frames * (4 + 2 * self.m)

    def forward(self, x: np.ndarray) -> np.ndarray:
        B = x.shape[0]
        Tf, K, M = self.n_frames, self.n_keypoints, self.m
        frames = x.reshape(B, Tf, 4 + 2 * K)
        self._pose_act = frames[:, :, :4]
        self._kp = frames[:, :, 4:].reshape(B, Tf, K, 2)
        self._proj = np.einsum(
            "btkj,mj->btkm", self._kp, self.omega / self.sigma[0]
        )
        self._cos = np.cos(self._proj)
        self._sin = np.sin(self._proj)
        scale = 1.0 / (K * np.sqrt(M))
        emb = np.empty((B, Tf, 2 * M))
        emb[:, :, 0::2] = scale * self._cos.sum(axis=2)
        emb[:, :, 1::2] = scale * self._sin.sum(axis=2)
        return np.concatenate([self._pose_act, emb], axis=2).reshape(B, self.out_dim)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        B = dy.shape[0]
        Tf, K, M = self.n_frames, self.n_keypoints, self.m
        dframes = dy.reshape(B, Tf, 4 + 2 * M)
        dc = dframes[:, :, 4 + 0::2]
        ds = dframes[:, :, 4 + 1::2]
        scale = 1.0 / (K * np.sqrt(M))
        dproj = scale * (-dc[:, :, None, :] * self._sin + ds[:, :, None, :] * self._cos)
        self.domega = np.einsum("btkm,btkj->mj", dproj, self._kp) / self.sigma[0]
        self.dsigma = np.array([-np.sum(dproj * self._proj) / self.sigma[0]])
        dkp = np.einsum("btkm,mj->btkj", dproj, self.omega / self.sigma[0])
        dx = np.concatenate(
            [dframes[:, :, :4], dkp.reshape(B, Tf, 2 * K)], axis=2
        )
        return dx.reshape(B, self.in_dim)

    def params(self):
        return [("omega", self.omega), ("sigma", self.sigma)]

    def grads(self):
        return [self.domega, self.dsigma]

    def clamp(self):
        # keep the bandwidth positive after optimizer updates
        self.sigma[0] = max(self.sigma[0], self.SIGMA_FLOOR)


class Adam:
    def __init__(self, params, lr: float = 1e-6, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            if self.weight_decay:
                p -= self.lr * self.weight_decay * p  # decoupled decay


def build_backbone(n_in: int, hidden, rng: np.random.Generator):
    """Fully connected stack with tanh between layers; returns (layers, out_dim)."""
    layers = []
    prev = n_in
    for width in hidden:
        layers.append(Dense(prev, width, rng))
        layers.append(Tanh())
        prev = width
    return layers, prev
