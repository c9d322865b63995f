"""Small dense networks with hand-written backprop, and Adam."""
from __future__ import annotations

import numpy as np

from .. import kernels

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


class Mlp:
    """Two hidden tanh layers followed by a linear head."""

    def __init__(self, params):
        self.params = [np.ascontiguousarray(p, dtype=float) for p in params]

    @classmethod
    def init(cls, n_in, n_out, hidden=(64, 64), rng=None, out_scale=1.0):
        rng = np.random.default_rng(rng)
        sizes = (n_in,) + tuple(hidden) + (n_out,)
        params = []
        for k in range(3):
            fan_in, fan_out = sizes[k], sizes[k + 1]
            scale = np.sqrt(2.0 / (fan_in + fan_out)) * (out_scale if k == 2 else 1.0)
            params.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            params.append(np.zeros(fan_out))
        return cls(params)

    @property
    def n_params(self):
        return sum(p.size for p in self.params)

    def forward(self, x):
        return kernels.mlp_forward(np.ascontiguousarray(x, dtype=float), *self.params)

    def __call__(self, x):
        return self.forward(x)[2]

    def backward(self, x, h1, h2, dout):
        w2, w3 = self.params[2], self.params[4]
        return list(kernels.mlp_backward(np.ascontiguousarray(x, dtype=float), h1, h2, w2, w3,
                                         np.ascontiguousarray(dout)))


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads, max_norm):
    norm = global_norm(grads)
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = [g * scale for g in grads]
    return grads, norm


class Adam:
    def __init__(self, params, lr=5e-4, betas=(0.9, 0.999), eps=1e-5):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
