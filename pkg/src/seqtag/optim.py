"""Optimizers, gradient clipping/normalization and piecewise learning rates.

Parameters and gradients are dicts of arrays keyed by name. A step only
touches the names present in the gradient dict, so a multi-task step on one
task leaves the other task's parameters (and their moment estimates) alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .nn.functional import NonFiniteError

OPTIMIZERS = ("sgd", "adagrad", "adadelta", "rmsprop", "adam", "nadam")

# recommended settings of the respective optimizer publications; SGD's rate
# has no published default and is meant to be tuned
DEFAULTS = {
    "sgd": {"lr": 0.1},
    "adagrad": {"lr": 0.01, "eps": 1e-8},
    "adadelta": {"lr": 1.0, "rho": 0.95, "eps": 1e-6},
    "rmsprop": {"lr": 0.001, "rho": 0.9, "eps": 1e-8},
    "adam": {"lr": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "nadam": {"lr": 0.002, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "schedule_decay": 0.004},
}

POLICY_KINDS = ("none", "clip_elementwise", "normalize_l2")
POLICY_THRESHOLDS = (1.0, 3.0, 5.0, 10.0)


@dataclass(frozen=True)
class GradientPolicy:
    kind: str = "none"
    tau: float = 1.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"gradient policy {self.kind!r} not in {POLICY_KINDS}")
        if not self.tau > 0:
            raise ValueError(f"gradient threshold must be positive, got {self.tau}")


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def apply_policy(grads: Mapping[str, np.ndarray], policy: GradientPolicy) -> dict:
    """Element-wise clipping to [-tau, tau], or rescaling to global L2 norm tau."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}")
    if policy.kind == "clip_elementwise":
        return {k: np.clip(g, -policy.tau, policy.tau) for k, g in grads.items()}
    if policy.kind == "normalize_l2":
        norm = global_norm(grads)
        if norm > policy.tau:
            # multiply before dividing: one rounding per element
            return {k: g * policy.tau / norm for k, g in grads.items()}
    return dict(grads)


@dataclass
class OptimizerState:
    t: int = 0
    slots: dict = field(default_factory=dict)  # (slot name, param name) -> array

    def slot(self, kind: str, name: str, like: np.ndarray) -> np.ndarray:
        key = (kind, name)
        if key not in self.slots:
            self.slots[key] = np.zeros_like(like)
        return self.slots[key]


class Optimizer:
    def __init__(self, kind: str = "adam", **hyper):
        kind = kind.lower()
        if kind not in OPTIMIZERS:
            raise ValueError(f"optimizer {kind!r} not in {OPTIMIZERS}")
        unknown = set(hyper) - set(DEFAULTS[kind])
        if unknown:
            raise ValueError(f"{kind} has no hyperparameters {sorted(unknown)}")
        self.kind = kind
        self.hyper = {**DEFAULTS[kind], **{k: v for k, v in hyper.items() if v is not None}}
        self.state = OptimizerState()
        # Nadam keeps the running product of its momentum schedule
        self._mu_product = 1.0

    @property
    def lr(self) -> float:
        return self.hyper["lr"]

    def step(self, params: dict, grads: Mapping[str, np.ndarray], lr: float | None = None) -> None:
        """One update of every parameter named in ``grads`` (in place)."""
        lr = self.lr if lr is None else lr
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.state.t += 1
        t = self.state.t
        if self.kind == "nadam":
            update = self._nadam_factory(t)
        else:
            update = getattr(self, "_" + self.kind)
        for name, g in grads.items():
            p = params[name]
            if p.shape != g.shape:
                raise ValueError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
            update(name, p, g, lr, t)

    def _sgd(self, name, p, g, lr, t):
        p -= lr * g

    def _adagrad(self, name, p, g, lr, t):
        acc = self.state.slot("accum", name, p)
        acc += g * g
        p -= lr * g / (np.sqrt(acc) + self.hyper["eps"])

    def _adadelta(self, name, p, g, lr, t):
        rho, eps = self.hyper["rho"], self.hyper["eps"]
        eg = self.state.slot("sq_grad", name, p)
        ex = self.state.slot("sq_update", name, p)
        eg *= rho
        eg += (1 - rho) * g * g
        dx = -np.sqrt(ex + eps) / np.sqrt(eg + eps) * g
        ex *= rho
        ex += (1 - rho) * dx * dx
        p += lr * dx

    def _rmsprop(self, name, p, g, lr, t):
        rho, eps = self.hyper["rho"], self.hyper["eps"]
        eg = self.state.slot("sq_grad", name, p)
        eg *= rho
        eg += (1 - rho) * g * g
        p -= lr * g / (np.sqrt(eg) + eps)

    def _adam(self, name, p, g, lr, t):
        b1, b2, eps = self.hyper["beta1"], self.hyper["beta2"], self.hyper["eps"]
        m = self.state.slot("m", name, p)
        v = self.state.slot("v", name, p)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)

    def _nadam_factory(self, t):
        b1, b2, eps = self.hyper["beta1"], self.hyper["beta2"], self.hyper["eps"]
        decay = self.hyper["schedule_decay"]
        mu_t = b1 * (1 - 0.5 * 0.96 ** (t * decay))
        mu_next = b1 * (1 - 0.5 * 0.96 ** ((t + 1) * decay))
        self._mu_product *= mu_t
        prod_t = self._mu_product
        prod_next = prod_t * mu_next

        def update(name, p, g, lr, t):
            m = self.state.slot("m", name, p)
            v = self.state.slot("v", name, p)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            g_hat = g / (1 - prod_t)
            m_hat = m / (1 - prod_next)
            v_hat = v / (1 - b2 ** t)
            m_bar = (1 - mu_t) * g_hat + mu_next * m_hat
            p -= lr * m_bar / (np.sqrt(v_hat) + eps)

        return update


@dataclass(frozen=True)
class LrSchedule:
    """Piecewise-constant rates: ``[(first_epoch, last_epoch or None, lr), ...]``."""

    pieces: tuple

    def __post_init__(self):
        pieces = tuple(tuple(p) for p in self.pieces)
        object.__setattr__(self, "pieces", pieces)
        expected = 1
        for i, (first, last, lr) in enumerate(pieces):
            if first != expected:
                raise ValueError(f"schedule piece {i} starts at epoch {first}, expected {expected}")
            if lr <= 0:
                raise ValueError("scheduled learning rates must be positive")
            if last is None:
                if i != len(pieces) - 1:
                    raise ValueError("only the last schedule piece may be open-ended")
                return
            if last < first:
                raise ValueError(f"schedule piece {i} is empty")
            expected = last + 1
        raise ValueError("schedule must end with an open range")

    def to_json(self) -> list:
        return [list(p) for p in self.pieces]


def scheduled_lr(schedule: LrSchedule, epoch: int) -> float:
    if epoch < 1:
        raise ValueError(f"epochs count from 1, got {epoch}")
    for first, last, lr in schedule.pieces:
        if last is None or epoch <= last:
            return lr
    raise AssertionError("unreachable: schedules end open")


# Adam with an increased rate for the first six epochs
ADAM_WARM_SCHEDULE = LrSchedule(((1, 3, 0.01), (4, 6, 0.005), (7, None, 0.001)))
