"""Layer primitives built on the tape: lookup, LSTM cell, losses, clipping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from adept.errors import ContractError, DimensionError
from adept.nn_core.tensor import Tensor, _make, _sigmoid, as_tensor, matmul


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table``; backward scatter-adds into those rows only."""
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    bad = (ids < 0) | (ids >= vocab)
    if bad.any():
        raise IndexError(f"embedding id {int(ids[bad].flat[0])} outside [0, {vocab})")
    data = table.data[ids]

    def back(g):
        out = np.zeros_like(table.data)
        np.add.at(out, ids, g)
        return (out,)

    return _make(data, (table,), back)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return out + bias if bias is not None else out


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits: Tensor, target, weights=None, reduction: str = "sum") -> Tensor:
    """-log softmax(logits)[target], stabilised by max subtraction.

    ``logits`` is ``(K,)`` with an integer target or ``(N, K)`` with ``N``
    targets.  ``weights`` (length N) masks or reweights rows; ``reduction``
    is ``"sum"`` or ``"mean"`` (mean divides by the total weight).
    """
    logits = as_tensor(logits)
    single = logits.ndim == 1
    z = logits.data[None, :] if single else logits.data
    if z.ndim != 2:
        raise DimensionError(f"logits must be (K,) or (N, K), got {logits.shape}")
    n, k = z.shape
    if k < 2:
        raise ContractError(f"need at least 2 classes, got {k}")
    t = np.atleast_1d(np.asarray(target, dtype=np.int64))
    if t.shape != (n,):
        raise DimensionError(f"{t.shape[0]} targets for {n} rows of logits")
    bad = (t < 0) | (t >= k)
    if bad.any():
        raise IndexError(f"target {int(t[bad][0])} outside [0, {k})")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)

    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    per_row = lse - shifted[rows, t]
    total = float(w.sum()) if reduction == "mean" else 1.0
    if reduction not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {reduction!r}")
    if total <= 0:
        raise ContractError("cross-entropy weights sum to zero")
    loss = np.asarray((per_row * w).sum() / total)

    def back(g):
        p = np.exp(shifted - lse[:, None])
        p[rows, t] -= 1.0
        p *= (w / total)[:, None] * g
        return (p[0] if single else p,)

    return _make(loss, (logits,), back)


def clip_rows(r: Tensor, radius: float) -> Tensor:
    """Scale each row of ``r`` by ``min(1, radius / ||row||_2)``.

    Differentiable everywhere except on the sphere itself; rows with norm
    exactly ``radius`` take the projected branch.
    """
    if radius <= 0:
        raise ContractError(f"clip radius must be positive, got {radius}")
    x = r.data
    flat = x.reshape(1, -1) if x.ndim == 1 else x
    norms = np.sqrt((flat * flat).sum(axis=1, keepdims=True))
    over = norms >= radius
    scale = np.where(over & (norms > 0), radius / np.where(norms > 0, norms, 1.0), 1.0)
    data = (flat * scale).reshape(x.shape)

    def back(g):
        gf = g.reshape(flat.shape)
        # on clipped rows: (C/n) (g - r (r.g)/n^2)
        rg = (flat * gf).sum(axis=1, keepdims=True)
        safe = np.where(over, norms, 1.0)
        proj = scale * (gf - flat * rg / (safe * safe))
        out = np.where(over, proj, gf)
        return (out.reshape(x.shape),)

    return _make(data, (r,), back)


# -- LSTM ------------------------------------------------------------------
@dataclass
class LSTMParams:
    """Gate weights in [input | forget | candidate | output] column blocks."""

    w_x: Tensor  # (d_in, 4d)
    w_h: Tensor  # (d, 4d)
    b: Tensor  # (4d,)

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_x.shape[0]

    def tensors(self):
        return [self.w_x, self.w_h, self.b]


def lstm_gates(x: Tensor, h: Tensor, p: LSTMParams) -> Tensor:
    """Pre-activation gates ``x Wx + h Wh + b`` as one fused node."""
    if x.ndim != 2 or h.ndim != 2:
        raise DimensionError(f"lstm inputs must be batched 2-D, got {x.shape} and {h.shape}")
    if x.shape[1] != p.input_size or h.shape[1] != p.hidden_size or x.shape[0] != h.shape[0]:
        raise DimensionError(
            f"lstm shape mismatch: x {x.shape}, h {h.shape}, "
            f"w_x {p.w_x.shape}, w_h {p.w_h.shape}"
        )
    wx, wh = p.w_x.data, p.w_h.data
    data = x.data @ wx + h.data @ wh + p.b.data

    def back(g):
        return (g @ wx.T, g @ wh.T, x.data.T @ g, h.data.T @ g, g.sum(axis=0))

    return _make(data, (x, h, p.w_x, p.w_h, p.b), back)


def _lstm_activate(z: Tensor) -> Tensor:
    d = z.shape[1] // 4
    a = _sigmoid(z.data)
    a[:, 2 * d : 3 * d] = np.tanh(z.data[:, 2 * d : 3 * d])

    def back(g):
        da = a * (1.0 - a)
        cand = a[:, 2 * d : 3 * d]
        da[:, 2 * d : 3 * d] = 1.0 - cand * cand
        return (g * da,)

    return _make(a, (z,), back)


def _lstm_cell_state(a: Tensor, c: Tensor) -> Tensor:
    d = c.shape[1]
    i, f, g_ = a.data[:, :d], a.data[:, d : 2 * d], a.data[:, 2 * d : 3 * d]
    data = f * c.data + i * g_

    def back(g):
        ga = np.zeros_like(a.data)
        ga[:, :d] = g * g_
        ga[:, d : 2 * d] = g * c.data
        ga[:, 2 * d : 3 * d] = g * i
        return (ga, g * f)

    return _make(data, (a, c), back)


def _lstm_hidden(a: Tensor, c_new: Tensor) -> Tensor:
    d = c_new.shape[1]
    o = a.data[:, 3 * d :]
    tc = np.tanh(c_new.data)

    def back(g):
        ga = np.zeros_like(a.data)
        ga[:, 3 * d :] = g * tc
        return (ga, g * o * (1.0 - tc * tc))

    return _make(o * tc, (a, c_new), back)


def lstm_cell_step(x: Tensor, h: Tensor, c: Tensor, params: LSTMParams):
    """One LSTM step; accepts a single vector or a batch of row vectors.

    Returns ``(h', c')`` with ``c' = f*c + i*g`` and ``h' = o*tanh(c')``.
    """
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    single = x.ndim == 1
    if single:
        x, h, c = x.reshape(1, -1), h.reshape(1, -1), c.reshape(1, -1)
    if c.shape != h.shape:
        raise DimensionError(f"cell state {c.shape} does not match hidden {h.shape}")
    a = _lstm_activate(lstm_gates(x, h, params))
    c_new = _lstm_cell_state(a, c)
    h_new = _lstm_hidden(a, c_new)
    if single:
        return h_new.reshape(-1), c_new.reshape(-1)
    return h_new, c_new


def lstm_sequence(xs: Tensor, h0: Tensor, params: LSTMParams, c0: Tensor | None = None) -> Tensor:
    """Unrolled LSTM over ``xs`` of shape ``(T, B, d_in)`` as a single node.

    Returns all hidden states ``(T, B, d)``.  Numerically identical to
    chaining :func:`lstm_cell_step`; the backward pass is hand-written
    backpropagation through time, which keeps the tape short.
    """
    xs, h0 = as_tensor(xs), as_tensor(h0)
    if xs.ndim != 3:
        raise DimensionError(f"sequence input must be (T, B, d_in), got {xs.shape}")
    n_steps, batch, d_in = xs.shape
    d = params.hidden_size
    if d_in != params.input_size or h0.shape != (batch, d):
        raise DimensionError(
            f"lstm shape mismatch: xs {xs.shape}, h0 {h0.shape}, w_x {params.w_x.shape}, w_h {params.w_h.shape}"
        )
    c0 = None if c0 is None else as_tensor(c0)
    if c0 is not None and c0.shape != (batch, d):
        raise DimensionError(f"lstm shape mismatch: c0 {c0.shape}, expected {(batch, d)}")
    c_init = np.zeros((batch, d)) if c0 is None else c0.data
    wx, wh, b = params.w_x.data, params.w_h.data, params.b.data

    xw = (xs.data.reshape(n_steps * batch, d_in) @ wx).reshape(n_steps, batch, 4 * d) + b
    acts = np.empty((n_steps, batch, 4 * d))
    cs = np.empty((n_steps + 1, batch, d))
    hs = np.empty((n_steps + 1, batch, d))
    tcs = np.empty((n_steps, batch, d))
    hs[0], cs[0] = h0.data, c_init
    for t in range(n_steps):
        z = xw[t] + hs[t] @ wh
        acts[t] = _sigmoid(z)
        acts[t][:, 2 * d : 3 * d] = np.tanh(z[:, 2 * d : 3 * d])
        i, f, g, o = (acts[t][:, k * d : (k + 1) * d] for k in range(4))
        cs[t + 1] = f * cs[t] + i * g
        tcs[t] = np.tanh(cs[t + 1])
        hs[t + 1] = o * tcs[t]

    def back(grad):
        dz_all = np.empty((n_steps, batch, 4 * d))
        dwh = np.zeros_like(wh)
        dh_next = np.zeros((batch, d))
        dc_next = np.zeros((batch, d))
        for t in range(n_steps - 1, -1, -1):
            i, f, g, o = (acts[t][:, k * d : (k + 1) * d] for k in range(4))
            dh = grad[t] + dh_next
            tc = tcs[t]
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dz_all[t]
            dz[:, :d] = dc * g * i * (1.0 - i)
            dz[:, d : 2 * d] = dc * cs[t] * f * (1.0 - f)
            dz[:, 2 * d : 3 * d] = dc * i * (1.0 - g * g)
            dz[:, 3 * d :] = dh * tc * o * (1.0 - o)
            dwh += hs[t].T @ dz
            dh_next = dz @ wh.T
            dc_next = dc * f
        flat = dz_all.reshape(n_steps * batch, 4 * d)
        dxs = (flat @ wx.T).reshape(xs.shape)
        dwx = xs.data.reshape(n_steps * batch, d_in).T @ flat
        grads = (dxs, dh_next, dwx, dwh, flat.sum(axis=0))
        return grads if c0 is None else grads + (dc_next,)

    parents = (xs, h0, params.w_x, params.w_h, params.b)
    return _make(hs[1:].copy(), parents if c0 is None else parents + (c0,), back)


def ball_penalty(r: Tensor, radius: float) -> Tensor:
    """Mean over rows of ``max(0, ||row||_2 - radius)^2``."""
    x = r.data
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    excess = np.maximum(norms - radius, 0.0)
    n = x.shape[0]

    def back(g):
        safe = np.where(norms > 0, norms, 1.0)
        return (g * 2.0 * excess * x / safe / n,)

    return _make(np.asarray((excess**2).sum() / n), (r,), back)
