"""Minimal numpy tensor engine with reverse-mode autodiff."""

from adept.nn_core.functional import (
    LSTMParams,
    ball_penalty,
    clip_rows,
    embedding_lookup,
    linear,
    lstm_cell_step,
    lstm_sequence,
    softmax,
    softmax_cross_entropy,
)
from adept.nn_core.layers import (
    embedding_table,
    final_states,
    lstm_params,
    padding_mask,
    run_lstm,
    uniform_init,
)
from adept.nn_core.optim import SGD, Adam, clip_grad_norm, make_optimizer
from adept.nn_core.tensor import (
    Tensor,
    add,
    concat,
    exp,
    log,
    matmul,
    mul,
    no_grad,
    reshape,
    sigmoid,
    stack,
    sub,
    take,
    tanh,
    tmax,
    tsum,
)

__all__ = [
    "Adam",
    "LSTMParams",
    "ball_penalty",
    "SGD",
    "Tensor",
    "add",
    "clip_grad_norm",
    "clip_rows",
    "concat",
    "embedding_lookup",
    "embedding_table",
    "exp",
    "final_states",
    "linear",
    "log",
    "lstm_cell_step",
    "lstm_params",
    "lstm_sequence",
    "make_optimizer",
    "matmul",
    "mul",
    "no_grad",
    "padding_mask",
    "reshape",
    "run_lstm",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
    "stack",
    "sub",
    "take",
    "tanh",
    "tmax",
    "tsum",
    "uniform_init",
]
