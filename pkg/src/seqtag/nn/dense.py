from __future__ import annotations

import numpy as np

from .functional import glorot_uniform, softmax


def init_dense(rng, in_dim: int, out_dim: int, zero: bool = False) -> dict:
    if zero:
        return {"W": np.zeros((in_dim, out_dim)), "b": np.zeros(out_dim)}
    return {"W": glorot_uniform(rng, in_dim, out_dim), "b": np.zeros(out_dim)}


def dense_forward(params: dict, x: np.ndarray) -> np.ndarray:
    return x @ params["W"] + params["b"]


def dense_backward(params: dict, x: np.ndarray, dout: np.ndarray):
    D = x.shape[-1]
    K = dout.shape[-1]
    grads = {"W": x.reshape(-1, D).T @ dout.reshape(-1, K), "b": dout.reshape(-1, K).sum(axis=0)}
    return grads, dout @ params["W"].T


def softmax_cross_entropy(logits: np.ndarray, labels, weights=None):
    """Weighted sum of per-row cross-entropies.

    Returns ``(loss, d_logits, probs, predictions)``; predictions take the
    lowest index on ties. ``weights`` defaults to 1/N (mean over rows).
    """
    logits = np.asarray(logits, dtype=np.float64)
    N, K = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    w = np.full(N, 1.0 / max(N, 1)) if weights is None else np.asarray(weights, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    nll = log_norm - shifted[np.arange(N), labels]
    probs = softmax(logits)
    d = probs.copy()
    d[np.arange(N), labels] -= 1.0
    d *= w[:, None]
    return float((w * nll).sum()), d, probs, probs.argmax(axis=1)


def dense_softmax(inputs: np.ndarray, params: dict, labels):
    """Dense layer plus softmax with mean per-token cross-entropy.

    Returns ``(loss, grads, predictions)`` where ``grads`` holds ``W``, ``b``
    and ``inputs``.
    """
    logits = dense_forward(params, inputs)
    loss, d_logits, _, preds = softmax_cross_entropy(logits, labels)
    grads, dx = dense_backward(params, inputs, d_logits)
    grads["inputs"] = dx
    return loss, grads, preds
