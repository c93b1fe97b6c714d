"""LSTM layer with hand-written backpropagation through time.

Gates are packed in the order input, forget, output, candidate::

    z_t = x_t W + (h_{t-1} * r) U + b
    i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

``r`` is the recurrent dropout mask (ones without variational dropout).
Inputs are time-major ``(T, B, D)``; a 2-D ``(T, D)`` input is treated as a
single sequence. Padded steps (mask 0) carry h and c through unchanged, so
the state at the last step equals the state at each sequence's true end.
"""
from __future__ import annotations

import numpy as np

from .dropout import DropoutSpec, output_mask, recurrent_mask
from .functional import check_finite, glorot_uniform, orthogonal, sigmoid

GATES = ("input", "forget", "output", "candidate")


def init_lstm(rng: np.random.Generator, in_dim: int, units: int, forget_bias: float = 1.0) -> dict:
    if units <= 0:
        raise ValueError(f"units must be positive, got {units}")
    W = np.hstack([glorot_uniform(rng, in_dim, units) for _ in GATES])
    U = np.hstack([orthogonal(rng, units) for _ in GATES])
    b = np.zeros(4 * units)
    b[units:2 * units] = forget_bias
    return {"W": W, "U": U, "b": b}


def zero_lstm(in_dim: int, units: int) -> dict:
    return {"W": np.zeros((in_dim, 4 * units)), "U": np.zeros((units, 4 * units)),
            "b": np.zeros(4 * units)}


def lstm_forward(params: dict, x: np.ndarray, mask: np.ndarray | None = None,
                 dropout: DropoutSpec | None = None, rng: np.random.Generator | None = None,
                 out_mask: np.ndarray | None = None, rec_mask: np.ndarray | None = None):
    """Run the recurrence; returns ``(outputs, cache)``.

    Dropout masks are drawn from ``rng`` according to ``dropout`` unless
    passed explicitly. Without an rng nothing is dropped (inference).
    """
    single = x.ndim == 2
    if single:
        x = x[:, None, :]
        if mask is not None:
            mask = np.asarray(mask)[:, None]
    T, B, D = x.shape
    if T < 1:
        raise ValueError("LSTM input needs at least one time step")
    W, U, b = params["W"], params["U"], params["b"]
    if W.shape[0] != D:
        raise ValueError(f"input dim {D} does not match weights {W.shape}")
    u = U.shape[0]
    if out_mask is None:
        out_mask = output_mask(dropout, (T, B, u), rng)
    if rec_mask is None:
        rec_mask = recurrent_mask(dropout, (B, u), rng)
    m = None if mask is None else np.asarray(mask, dtype=np.float64)[:, :, None]

    xw = x @ W + b
    H = np.empty((T, B, u))
    C = np.empty((T, B, u))
    Hr = np.empty((T, B, u))
    G = np.empty((T, B, 4 * u))
    TC = np.empty((T, B, u))
    h = np.zeros((B, u))
    c = np.zeros((B, u))
    for t in range(T):
        hr = h if rec_mask is None else h * rec_mask
        z = xw[t] + hr @ U
        gates = np.empty_like(z)
        gates[:, :3 * u] = sigmoid(z[:, :3 * u])
        gates[:, 3 * u:] = np.tanh(z[:, 3 * u:])
        i, f, o, g = gates[:, :u], gates[:, u:2 * u], gates[:, 2 * u:3 * u], gates[:, 3 * u:]
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        if m is not None:
            c_new = m[t] * c_new + (1.0 - m[t]) * c
            h_new = m[t] * h_new + (1.0 - m[t]) * h
        Hr[t], G[t], TC[t] = hr, gates, tc
        h, c = h_new, c_new
        H[t], C[t] = h, c
    check_finite(H, "LSTM hidden states")
    out = H if out_mask is None else H * out_mask
    cache = dict(x=x, W=W, U=U, m=m, H=H, C=C, Hr=Hr, G=G, TC=TC,
                 out_mask=out_mask, rec_mask=rec_mask, single=single)
    return (out[:, 0, :] if single else out), cache


def lstm_backward(cache: dict, dout: np.ndarray):
    """Gradients ``({"W","U","b"}, dx)`` for upstream gradient ``dout``."""
    x, W, U, m = cache["x"], cache["W"], cache["U"], cache["m"]
    C, Hr, G, TC = cache["C"], cache["Hr"], cache["G"], cache["TC"]
    rec_mask = cache["rec_mask"]
    T, B, _ = x.shape
    u = U.shape[0]
    if cache["single"]:
        dout = dout[:, None, :]
    if dout.shape != (T, B, u):
        raise ValueError(f"upstream gradient shape {dout.shape} != {(T, B, u)}")
    dH = dout if cache["out_mask"] is None else dout * cache["out_mask"]

    dZ = np.empty((T, B, 4 * u))
    dh_next = np.zeros((B, u))
    dc_next = np.zeros((B, u))
    zeros = np.zeros((B, u))
    for t in range(T - 1, -1, -1):
        dh = dH[t] + dh_next
        dc = dc_next
        if m is not None:
            dh_skip, dc_skip = dh * (1.0 - m[t]), dc * (1.0 - m[t])
            dh, dc = dh * m[t], dc * m[t]
        else:
            dh_skip = dc_skip = zeros
        gates = G[t]
        i, f, o, g = gates[:, :u], gates[:, u:2 * u], gates[:, 2 * u:3 * u], gates[:, 3 * u:]
        tc = TC[t]
        c_prev = C[t - 1] if t > 0 else zeros
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = dZ[t]
        dz[:, :u] = dc * g * i * (1.0 - i)
        dz[:, u:2 * u] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * u:3 * u] = dh * tc * o * (1.0 - o)
        dz[:, 3 * u:] = dc * i * (1.0 - g * g)
        dhr = dz @ U.T
        dh_next = (dhr if rec_mask is None else dhr * rec_mask) + dh_skip
        dc_next = dc * f + dc_skip

    flat = dZ.reshape(T * B, 4 * u)
    grads = {
        "W": x.reshape(T * B, -1).T @ flat,
        "U": Hr.reshape(T * B, u).T @ flat,
        "b": flat.sum(axis=0),
    }
    dx = dZ @ W.T
    return grads, (dx[:, 0, :] if cache["single"] else dx)


def reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    """(T, B) time indices reversing each sequence within its own length."""
    lengths = np.asarray(lengths)
    t = np.arange(T)[:, None]
    return np.where(t < lengths[None, :], lengths[None, :] - 1 - t, t)


def reverse_padded(x: np.ndarray, rev: np.ndarray) -> np.ndarray:
    # the reversal is an involution, so the same gather undoes it
    return x[rev, np.arange(x.shape[1])[None, :]]


def bilstm_forward(fw: dict, bw: dict, x: np.ndarray, lengths, dropout=None, rng=None):
    """Concatenate a forward and a backward LSTM over right-padded batches."""
    T, B, _ = x.shape
    lengths = np.asarray(lengths)
    mask = (np.arange(T)[:, None] < lengths[None, :]).astype(np.float64)
    rev = reverse_index(lengths, T)
    h_f, c_f = lstm_forward(fw, x, mask, dropout, rng)
    h_b, c_b = lstm_forward(bw, reverse_padded(x, rev), mask, dropout, rng)
    out = np.concatenate([h_f, reverse_padded(h_b, rev)], axis=-1)
    return out, (c_f, c_b, rev)


def bilstm_backward(cache, dout: np.ndarray):
    c_f, c_b, rev = cache
    u = c_f["U"].shape[0]
    g_f, dx_f = lstm_backward(c_f, dout[..., :u])
    g_b, dx_b = lstm_backward(c_b, reverse_padded(dout[..., u:], rev))
    return g_f, g_b, dx_f + reverse_padded(dx_b, rev)
