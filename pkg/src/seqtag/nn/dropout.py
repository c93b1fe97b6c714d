from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DROPOUT_KINDS = ("none", "naive", "variational")
DROPOUT_RATES = (0.0, 0.05, 0.1, 0.25, 0.5)


@dataclass(frozen=True)
class DropoutSpec:
    """Dropout on LSTM outputs and, for ``variational``, on recurrent inputs.

    ``naive`` draws a fresh output mask per time step and leaves the
    recurrent connection alone; ``variational`` draws one output mask and one
    recurrent mask per sequence.
    """

    kind: str = "none"
    p_output: float = 0.0
    p_recurrent: float = 0.0

    def __post_init__(self):
        if self.kind not in DROPOUT_KINDS:
            raise ValueError(f"dropout kind {self.kind!r} not in {DROPOUT_KINDS}")
        for name in ("p_output", "p_recurrent"):
            p = getattr(self, name)
            if p not in DROPOUT_RATES:
                raise ValueError(f"dropout {name}={p!r} not in {DROPOUT_RATES}")

    @property
    def active(self) -> bool:
        return self.kind != "none" and (self.p_output > 0 or self.recurrent_rate > 0)

    @property
    def recurrent_rate(self) -> float:
        return self.p_recurrent if self.kind == "variational" else 0.0


def _mask(rng: np.random.Generator, shape, p: float) -> np.ndarray:
    # inverted dropout: kept units are scaled so the expectation is unchanged
    return (rng.random(shape) >= p) / (1.0 - p)


def output_mask(spec: DropoutSpec | None, shape, rng) -> np.ndarray | None:
    """Mask for a (T, B, units) output, or None when nothing is dropped."""
    if spec is None or spec.kind == "none" or spec.p_output == 0 or rng is None:
        return None
    T, B, units = shape
    if spec.kind == "naive":
        return _mask(rng, (T, B, units), spec.p_output)
    return np.broadcast_to(_mask(rng, (1, B, units), spec.p_output), (T, B, units))


def recurrent_mask(spec: DropoutSpec | None, shape, rng) -> np.ndarray | None:
    """Mask for h_{t-1} entering the gates, shape (B, units); variational only."""
    if spec is None or spec.recurrent_rate == 0 or rng is None:
        return None
    return _mask(rng, shape, spec.recurrent_rate)
