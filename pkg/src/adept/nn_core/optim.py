"""Gradient-descent optimizers with explicit, inspectable state."""

from __future__ import annotations

import numpy as np

from adept.errors import DimensionError


class SGD:
    def __init__(self, params, lr: float = 0.1):
        self.params = list(params)
        self.lr = lr
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, grads=None):
        grads = _grads(self.params, grads)
        self.t += 1
        for p, g in zip(self.params, grads):
            p.data -= self.lr * g


class Adam:
    """Adam with bias-corrected moments (Kingma & Ba defaults)."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, grads=None):
        grads = _grads(self.params, grads)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _grads(params, grads):
    if grads is None:
        grads = [p.grad for p in params]
    if len(grads) != len(params):
        raise DimensionError(f"{len(grads)} gradients for {len(params)} parameters")
    for p, g in zip(params, grads):
        if np.shape(g) != p.shape:
            raise DimensionError(f"gradient shape {np.shape(g)} does not match parameter {p.shape}")
    return grads


def clip_grad_norm(params, max_norm: float) -> float:
    """Rescale all gradients jointly so their global L2 norm is <= max_norm."""
    total = float(np.sqrt(sum(float((p.grad * p.grad).sum()) for p in params)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for p in params:
            p.grad *= scale
    return total


def make_optimizer(name: str, params, lr: float):
    if name == "adam":
        return Adam(params, lr=lr)
    if name == "sgd":
        return SGD(params, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")
