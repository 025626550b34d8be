"""Central finite-difference oracle for checking analytic gradients."""

from __future__ import annotations

import numpy as np

from adept.nn_core.tensor import no_grad


def numerical_grad(loss_fn, param, h: float = 1e-5) -> np.ndarray:
    """d loss / d param by central differences; ``loss_fn()`` returns a float."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), with a tiny floor for all-zero gradients."""
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-10)
    return float(num / den)


def check_gradients(build_loss, params, h: float = 1e-5) -> dict:
    """Compare autodiff against finite differences for every tensor in ``params``.

    ``build_loss()`` must run a fresh forward pass and return a scalar Tensor.
    Returns ``{index: relative_error}``.
    """
    for p in params:
        p.zero_grad()
    build_loss().backward()
    analytic = [p.grad.copy() for p in params]

    def value():
        with no_grad():
            return float(build_loss().data)

    return {i: relative_error(a, numerical_grad(value, p, h)) for i, (p, a) in enumerate(zip(params, analytic))}
