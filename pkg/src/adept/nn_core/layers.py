"""Parameter construction and sequence runners."""

from __future__ import annotations

import numpy as np

from adept.nn_core.functional import LSTMParams, lstm_cell_step
from adept.nn_core.tensor import Tensor, stack


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def embedding_table(rng, vocab_size: int, dim: int) -> Tensor:
    # a lookup is a one-hot matmul, so fan_in is 1
    return uniform_init(rng, (vocab_size, dim), fan_in=1)


def lstm_params(rng, input_size: int, hidden_size: int) -> LSTMParams:
    return LSTMParams(
        w_x=uniform_init(rng, (input_size, 4 * hidden_size), input_size),
        w_h=uniform_init(rng, (hidden_size, 4 * hidden_size), hidden_size),
        b=uniform_init(rng, (4 * hidden_size,), hidden_size),
    )


def run_lstm(params: LSTMParams, inputs, h0: Tensor, c0: Tensor | None = None) -> Tensor:
    """Unroll over ``inputs`` (a list of ``(B, d_in)`` tensors).

    Returns the stacked hidden states, shape ``(T, B, d)``.
    """
    h = h0
    c = c0 if c0 is not None else Tensor(np.zeros(h0.shape))
    states = []
    for x in inputs:
        h, c = lstm_cell_step(x, h, c, params)
        states.append(h)
    return stack(states, axis=0)


def final_states(states: Tensor, lengths) -> Tensor:
    """Pick ``states[len_b - 1, b]`` for each batch row."""
    lengths = np.asarray(lengths, dtype=np.int64)
    return states[lengths - 1, np.arange(len(lengths))]


def padding_mask(lengths, max_len: int) -> np.ndarray:
    """Boolean ``(T, B)`` array, True on real positions."""
    lengths = np.asarray(lengths)
    return np.arange(max_len)[:, None] < lengths[None, :]
