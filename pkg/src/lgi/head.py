"""Temporal-attention summarization and time-interval regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, add, matmul, relu, reshape, softmax, tanh


class HeadParams:
    """Attention scorer (d -> d/2 tanh -> 1) and regressor (d -> d relu -> 2)."""

    def __init__(self, make, d: int):
        half = d // 2
        self.tatt_w1 = make("tatt.w1", (half, d), d)
        self.tatt_b1 = make("tatt.b1", (half,), d)
        self.tatt_w2 = make("tatt.w2", (1, half), half)
        self.tatt_b2 = make("tatt.b2", (1,), half)
        self.reg_w1 = make("reg.w1", (d, d), d)
        self.reg_b1 = make("reg.b1", (d,), d)
        self.reg_w2 = make("reg.w2", (2, d), d)
        self.reg_b2 = make("reg.b2", (2,), d)


@dataclass
class Prediction:
    """Raw regression output plus the attention that produced it.

    `interval` holds the unbounded (t_start, t_end) pair used by the training
    loss; `canonical()` gives the clamped, ordered copy used for evaluation.
    """

    interval: Tensor   # (2,)
    attention: Tensor  # (T,), sums to 1
    summary: Tensor    # (d,)

    @property
    def t_start(self) -> float:
        return float(self.interval.data[0])

    @property
    def t_end(self) -> float:
        return float(self.interval.data[1])

    def canonical(self) -> tuple[float, float]:
        return canonicalize(self.t_start, self.t_end)


def predict_interval(r: Tensor, params: HeadParams,
                     attention_mask: np.ndarray | None = None) -> Prediction:
    """Attend over segment columns of (d, T) and regress a time interval."""
    t = r.shape[1]
    hidden = tanh(add(matmul(params.tatt_w1, r), params.tatt_b1))   # (d/2, T)
    logits = add(matmul(params.tatt_w2, hidden), params.tatt_b2)    # (1, T)
    attention = softmax(reshape(logits, (t,)), attention_mask)
    summary = matmul(r, attention)                                  # (d,)
    reg_hidden = relu(add(matmul(params.reg_w1, summary), params.reg_b1))
    interval = add(matmul(params.reg_w2, reg_hidden), params.reg_b2)
    return Prediction(interval=interval, attention=attention, summary=summary)


def canonicalize(t_start: float, t_end: float) -> tuple[float, float]:
    """Clamp both endpoints to [0, 1], then order them."""
    s = min(max(float(t_start), 0.0), 1.0)
    e = min(max(float(t_end), 0.0), 1.0)
    if s > e:
        s, e = e, s
    return s, e
