"""Fixed-size character representations of words.

Both encoders take a batch of words as ``(N, L, char_dim)`` plus the true
length of each word; positions at or beyond a word's length are treated as
zero vectors and receive no gradient.
"""
from __future__ import annotations

import numpy as np

from .functional import glorot_uniform
from .lstm import init_lstm, lstm_backward, lstm_forward, reverse_index, reverse_padded

CHAR_DIM = 30
CNN_FILTERS = 30
CNN_WIDTH = 3
CHAR_LSTM_UNITS = 25


def _length_mask(lengths, L) -> np.ndarray:
    return (np.arange(L)[None, :] < np.asarray(lengths)[:, None]).astype(np.float64)


def init_char_cnn(rng, char_dim: int = CHAR_DIM, filters: int = CNN_FILTERS,
                  width: int = CNN_WIDTH) -> dict:
    return {"W": glorot_uniform(rng, width * char_dim, filters), "b": np.zeros(filters)}


def char_cnn_forward(params: dict, x: np.ndarray, lengths=None):
    """Width-3 convolution followed by a max over all window positions."""
    if x.ndim == 2:
        x = x[None]
    N, L, D = x.shape
    lengths = np.full(N, L) if lengths is None else np.asarray(lengths)
    if np.any(lengths < 1):
        raise ValueError("character encoder needs words with at least one character")
    W, b = params["W"], params["b"]
    width = W.shape[0] // D
    Lp = max(L, width)
    xp = np.zeros((N, Lp, D))
    xp[:, :L] = x * _length_mask(lengths, L)[:, :, None]
    P = Lp - width + 1
    windows = np.stack([xp[:, j:j + width].reshape(N, width * D) for j in range(P)], axis=1)
    conv = windows @ W + b
    n_valid = np.maximum(lengths, width) - width + 1
    valid = np.arange(P)[None, :] < n_valid[:, None]
    masked = np.where(valid[:, :, None], conv, -np.inf)
    arg = masked.argmax(axis=1)  # (N, F)
    out = np.take_along_axis(conv, arg[:, None, :], axis=1)[:, 0, :]
    cache = dict(windows=windows, W=W, arg=arg, shape=(N, L, D), Lp=Lp, width=width,
                 lengths=lengths)
    return out, cache


def char_cnn_backward(cache: dict, dout: np.ndarray):
    windows, W, arg = cache["windows"], cache["W"], cache["arg"]
    N, L, D = cache["shape"]
    width, Lp = cache["width"], cache["Lp"]
    P, F = windows.shape[1], W.shape[1]
    dconv = np.zeros((N, P, F))
    np.put_along_axis(dconv, arg[:, None, :], dout[:, None, :], axis=1)
    grads = {"W": windows.reshape(N * P, -1).T @ dconv.reshape(N * P, F),
             "b": dconv.sum(axis=(0, 1))}
    dwin = dconv @ W.T
    dxp = np.zeros((N, Lp, D))
    for j in range(P):
        dxp[:, j:j + width] += dwin[:, j].reshape(N, width, D)
    dx = dxp[:, :L] * _length_mask(cache["lengths"], L)[:, :, None]
    return grads, dx


def init_char_bilstm(rng, char_dim: int = CHAR_DIM, units: int = CHAR_LSTM_UNITS) -> dict:
    return {"fw": init_lstm(rng, char_dim, units), "bw": init_lstm(rng, char_dim, units)}


def char_bilstm_forward(params: dict, x: np.ndarray, lengths=None):
    """Last forward state and last backward state (at the first char), concatenated."""
    if x.ndim == 2:
        x = x[None]
    N, L, D = x.shape
    lengths = np.full(N, L) if lengths is None else np.asarray(lengths)
    if np.any(lengths < 1):
        raise ValueError("character encoder needs words with at least one character")
    xt = np.transpose(x, (1, 0, 2))  # time-major
    mask = _length_mask(lengths, L).T
    rev = reverse_index(lengths, L)
    h_f, c_f = lstm_forward(params["fw"], xt, mask)
    h_b, c_b = lstm_forward(params["bw"], reverse_padded(xt, rev), mask)
    out = np.concatenate([h_f[-1], h_b[-1]], axis=-1)
    return out, (c_f, c_b, rev, (N, L, D))


def char_bilstm_backward(cache, dout: np.ndarray):
    c_f, c_b, rev, (N, L, D) = cache
    u = c_f["U"].shape[0]
    dh_f = np.zeros((L, N, u))
    dh_b = np.zeros((L, N, u))
    dh_f[-1] = dout[:, :u]
    dh_b[-1] = dout[:, u:]
    g_f, dx_f = lstm_backward(c_f, dh_f)
    g_b, dx_b = lstm_backward(c_b, dh_b)
    dx = dx_f + reverse_padded(dx_b, rev)
    return {"fw": g_f, "bw": g_b}, np.transpose(dx, (1, 0, 2))
