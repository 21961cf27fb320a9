"""LSTM cell and sequence layer with backpropagation through time.

Gate weights act on the concatenation [x, h_prev]; forget/input/output
gates are sigmoid, the candidate is tanh:

    f = sigmoid(z Wf + bf)   i = sigmoid(z Wi + bi)
    o = sigmoid(z Wo + bo)   g = tanh(z Wg + bg)
    c = f * c_prev + i * g   h = o * tanh(c)
"""

from dataclasses import dataclass

import numpy as np

from . import tensor
from .errors import ArgumentError, DimensionError


@dataclass
class LSTMParams:
    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray

    @property
    def hidden_size(self):
        return self.W_f.shape[1]

    @property
    def input_size(self):
        return self.W_f.shape[0] - self.W_f.shape[1]

    def names(self):
        return ["W_f", "W_i", "W_o", "W_g", "b_f", "b_i", "b_o", "b_g"]


@dataclass
class LSTMState:
    h: np.ndarray
    c: np.ndarray


def init_lstm_params(input_size, hidden_size, rng):
    """Xavier gate weights; forget bias 1.0 to keep early cell memory alive."""
    z = input_size + hidden_size
    def w():
        return tensor.xavier_uniform((z, hidden_size), z, hidden_size, rng)
    return LSTMParams(
        W_f=w(), W_i=w(), W_o=w(), W_g=w(),
        b_f=tensor.full((hidden_size,), 1.0),
        b_i=tensor.zeros((hidden_size,)),
        b_o=tensor.zeros((hidden_size,)),
        b_g=tensor.zeros((hidden_size,)),
    )


def zero_state(n, hidden_size, dtype=None):
    dtype = dtype or tensor.get_default_dtype()
    return LSTMState(h=np.zeros((n, hidden_size), dtype=dtype),
                     c=np.zeros((n, hidden_size), dtype=dtype))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_cell_step(x, state, p: LSTMParams):
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != p.input_size:
        raise DimensionError(
            f"lstm cell: input shape {x.shape} incompatible with input size {p.input_size}")
    if state.h.shape != (x.shape[0], p.hidden_size):
        raise DimensionError(
            f"lstm cell: state shape {state.h.shape} incompatible with "
            f"batch {x.shape[0]}, hidden {p.hidden_size}")
    z = np.concatenate([x, state.h], axis=1)
    f = _sigmoid(z @ p.W_f + p.b_f)
    i = _sigmoid(z @ p.W_i + p.b_i)
    o = _sigmoid(z @ p.W_o + p.b_o)
    g = np.tanh(z @ p.W_g + p.b_g)
    c = f * state.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = (z, f, i, o, g, state.c, tanh_c, p)
    return LSTMState(h=h, c=c), cache


def lstm_cell_backward(cache, dh, dc):
    """Gradients of one step given dL/dh and dL/dc of its outputs."""
    z, f, i, o, g, c_prev, tanh_c, p = cache
    input_size = p.input_size
    do = dh * tanh_c
    dc_total = dc + dh * o * (1.0 - tanh_c ** 2)
    df = dc_total * c_prev
    di = dc_total * g
    dg = dc_total * i
    dc_prev = dc_total * f
    da_f = df * f * (1.0 - f)
    da_i = di * i * (1.0 - i)
    da_o = do * o * (1.0 - o)
    da_g = dg * (1.0 - g ** 2)
    dz = da_f @ p.W_f.T + da_i @ p.W_i.T + da_o @ p.W_o.T + da_g @ p.W_g.T
    grads = {
        "W_f": z.T @ da_f, "W_i": z.T @ da_i, "W_o": z.T @ da_o, "W_g": z.T @ da_g,
        "b_f": da_f.sum(axis=0), "b_i": da_i.sum(axis=0),
        "b_o": da_o.sum(axis=0), "b_g": da_g.sum(axis=0),
    }
    dx = dz[:, :input_size]
    dh_prev = dz[:, input_size:]
    return dx, dh_prev, dc_prev, grads


def lstm_forward(seq, p: LSTMParams, initial=None):
    seq = np.asarray(seq)
    if seq.ndim != 3:
        raise DimensionError(f"lstm: expected (n, T, input) sequence, got {seq.shape}")
    n, T, _ = seq.shape
    if T < 1:
        raise ArgumentError("lstm: sequence length must be >= 1")
    state = initial or zero_state(n, p.hidden_size, dtype=seq.dtype)
    outputs = np.empty((n, T, p.hidden_size), dtype=seq.dtype)
    step_caches = []
    for t in range(T):
        state, c = lstm_cell_step(seq[:, t, :], state, p)
        outputs[:, t, :] = state.h
        step_caches.append(c)
    cache = (step_caches, seq.shape)
    return outputs, state, cache


def lstm_backward(cache, upstream_outputs):
    """BPTT: gradients of lstm_forward wrt inputs, params, and initial state."""
    step_caches, seq_shape = cache
    upstream = np.asarray(upstream_outputs)
    n, T, _ = seq_shape
    hidden = step_caches[0][-1].hidden_size
    if upstream.shape != (n, T, hidden):
        raise DimensionError(
            f"lstm backward: upstream shape {upstream.shape} != {(n, T, hidden)}")
    p = step_caches[0][-1]
    grad_seq = np.empty(seq_shape, dtype=upstream.dtype)
    grad_params = {k: np.zeros_like(getattr(p, k)) for k in p.names()}
    dh = np.zeros((n, hidden), dtype=upstream.dtype)
    dc = np.zeros((n, hidden), dtype=upstream.dtype)
    for t in range(T - 1, -1, -1):
        dx, dh, dc, g = lstm_cell_backward(step_caches[t], upstream[:, t, :] + dh, dc)
        grad_seq[:, t, :] = dx
        for k, v in g.items():
            grad_params[k] += v
    grad_initial = LSTMState(h=dh, c=dc)
    return grad_seq, grad_params, grad_initial
