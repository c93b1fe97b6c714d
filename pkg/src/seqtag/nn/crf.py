"""Linear-chain CRF over K tags with virtual START and END states.

``transitions`` is ``(K+2, K+2)``; row ``K`` holds START->tag scores and
column ``K+1`` tag->END scores. The START column and END row can never be on
a path and are filled with a large negative constant.
"""
from __future__ import annotations

import numpy as np

from .functional import log_sum_exp

NEG = -1e4


def start_index(K: int) -> int:
    return K


def end_index(K: int) -> int:
    return K + 1


def init_transitions(K: int, rng: np.random.Generator | None = None, scale: float = 0.0) -> np.ndarray:
    trans = np.zeros((K + 2, K + 2))
    if rng is not None and scale:
        trans[:] = rng.uniform(-scale, scale, size=trans.shape)
    trans[:, K] = NEG
    trans[K + 1, :] = NEG
    return trans


def transition_grad_mask(K: int) -> np.ndarray:
    """1 where a transition can appear on a path, 0 for START column / END row."""
    mask = np.ones((K + 2, K + 2))
    mask[:, K] = 0.0
    mask[K + 1, :] = 0.0
    return mask


def path_score(emissions: np.ndarray, tags, transitions: np.ndarray) -> float:
    T, K = emissions.shape
    tags = np.asarray(tags)
    s = emissions[np.arange(T), tags].sum()
    s += transitions[K, tags[0]] + transitions[tags[-1], K + 1]
    s += transitions[tags[:-1], tags[1:]].sum()
    return float(s)


def _forward(emissions, transitions):
    T, K = emissions.shape
    A = transitions[:K, :K]
    alpha = np.empty((T, K))
    alpha[0] = transitions[K, :K] + emissions[0]
    for t in range(1, T):
        alpha[t] = log_sum_exp(alpha[t - 1][:, None] + A, axis=0) + emissions[t]
    logZ = float(log_sum_exp(alpha[-1] + transitions[:K, K + 1]))
    return logZ, alpha


def log_partition(emissions: np.ndarray, transitions: np.ndarray) -> float:
    if emissions.shape[0] == 0:
        raise ValueError("CRF needs at least one time step")
    return _forward(emissions, transitions)[0]


def marginals(emissions: np.ndarray, transitions: np.ndarray):
    """Unary ``(T, K)`` and pairwise ``(T-1, K, K)`` posterior marginals, plus logZ."""
    T, K = emissions.shape
    A = transitions[:K, :K]
    logZ, alpha = _forward(emissions, transitions)
    beta = np.empty((T, K))
    beta[-1] = transitions[:K, K + 1]
    for t in range(T - 2, -1, -1):
        beta[t] = log_sum_exp(A + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    unary = np.exp(alpha + beta - logZ)
    pair = np.exp(alpha[:-1, :, None] + A[None] + (emissions[1:] + beta[1:])[:, None, :] - logZ)
    return unary, pair, logZ


def crf_negative_log_likelihood(emissions: np.ndarray, tags, transitions: np.ndarray):
    """``(loss, d_emissions, d_transitions)`` with loss = logZ - score(tags)."""
    emissions = np.asarray(emissions, dtype=np.float64)
    T, K = emissions.shape
    if T == 0:
        raise ValueError("CRF needs at least one time step")
    tags = np.asarray(tags, dtype=np.int64)
    if tags.shape != (T,) or tags.min() < 0 or tags.max() >= K:
        raise ValueError(f"gold tags must be {T} values in [0, {K})")
    unary, pair, logZ = marginals(emissions, transitions)
    loss = logZ - path_score(emissions, tags, transitions)

    d_em = unary.copy()
    d_em[np.arange(T), tags] -= 1.0
    d_tr = np.zeros_like(transitions)
    d_tr[:K, :K] = pair.sum(axis=0)
    np.add.at(d_tr, (tags[:-1], tags[1:]), -1.0)
    d_tr[K, :K] = unary[0]
    d_tr[K, tags[0]] -= 1.0
    d_tr[:K, K + 1] = unary[-1]
    d_tr[tags[-1], K + 1] -= 1.0
    return loss, d_em, d_tr


def crf_viterbi(emissions: np.ndarray, transitions: np.ndarray):
    """Best path and its score. Ties go to the lower tag index."""
    T, K = emissions.shape
    if T == 0:
        raise ValueError("CRF needs at least one time step")
    A = transitions[:K, :K]
    delta = transitions[K, :K] + emissions[0]
    back = np.empty((T, K), dtype=np.int64)
    for t in range(1, T):
        scores = delta[:, None] + A
        back[t] = scores.argmax(axis=0)
        delta = scores[back[t], np.arange(K)] + emissions[t]
    final = delta + transitions[:K, K + 1]
    best = int(final.argmax())
    path = [best]
    for t in range(T - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return path, float(final.max())
