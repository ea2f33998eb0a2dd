"""Training losses: interval regression, temporal-attention guidance, and
query-attention distinctness. The total is their plain unit-weight sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyGuide, ShapeMismatch
from .head import Prediction
from .query_attention import PhraseSet
from .tensor import (
    Tensor,
    add,
    frobenius_sq,
    log_floored,
    matmul,
    reduce_sum,
    scalar_mul,
    smooth_l1,
    transpose,
)


@dataclass
class LossBreakdown:
    """Per-term values; `total == l_reg + l_tag + l_dqa` in that order.

    `node` is the scalar graph tensor to backpropagate through.
    """

    l_reg: float
    l_tag: float
    l_dqa: float
    total: float
    node: Tensor


def loss_reg(interval: Tensor, gt: tuple[float, float]) -> Tensor:
    """Sum of smooth-L1 distances between predicted and true endpoints."""
    if interval.shape != (2,):
        raise ShapeMismatch(f"interval must have shape (2,), got {interval.shape}")
    target = Tensor(np.asarray(gt, dtype=np.float64))
    residual = add(interval, scalar_mul(target, -1.0))
    return reduce_sum(smooth_l1(residual))


def make_temporal_guide(gt: tuple[float, float], t: int) -> np.ndarray:
    """Binary guide: segment i is active when its center lies inside gt.

    A ground-truth interval narrower than one segment might contain no
    center; the nearest segment is activated instead so the guide is never
    empty for a valid (nonzero-length) interval.
    """
    start, end = gt
    centers = (np.arange(t) + 0.5) / t
    guide = ((centers >= start) & (centers <= end)).astype(np.float64)
    if guide.sum() == 0:
        guide[int(np.argmin(np.abs(centers - (start + end) / 2.0)))] = 1.0
    return guide


def loss_tag(attention: Tensor, guide: np.ndarray) -> Tensor:
    """Mean negative log attention over guided segments (log floored)."""
    guide = np.asarray(guide, dtype=np.float64)
    if guide.shape != attention.shape:
        raise ShapeMismatch(f"guide {guide.shape} vs attention {attention.shape}")
    total = guide.sum()
    if total <= 0:
        raise EmptyGuide("temporal guide has no active segment")
    return scalar_mul(matmul(Tensor(guide), log_floored(attention)), -1.0 / total)


def loss_dqa(attn: Tensor, lam: float) -> Tensor:
    """Squared Frobenius distance between the attention Gram matrix and lam*I."""
    n = attn.shape[1]
    gram = matmul(transpose(attn), attn)  # (N, N)
    target = Tensor(np.eye(n) * float(lam))
    return frobenius_sq(add(gram, scalar_mul(target, -1.0)))


def total_loss(prediction: Prediction, phrases: PhraseSet | None,
               gt: tuple[float, float], lam: float,
               use_tag: bool = True, use_dqa: bool = True) -> LossBreakdown:
    """Unit-weight sum of the enabled terms.

    Disabled terms contribute exactly 0; in sentence mode there is no
    query-attention matrix so the distinctness term is identically 0.
    """
    node = loss_reg(prediction.interval, gt)
    reg_value = node.item()
    tag_value = 0.0
    dqa_value = 0.0
    if use_tag:
        guide = make_temporal_guide(gt, prediction.attention.shape[0])
        tag = loss_tag(prediction.attention, guide)
        tag_value = tag.item()
        node = add(node, tag)
    if use_dqa and phrases is not None:
        dqa = loss_dqa(phrases.attn, lam)
        dqa_value = dqa.item()
        node = add(node, dqa)
    return LossBreakdown(
        l_reg=reg_value,
        l_tag=tag_value,
        l_dqa=dqa_value,
        total=node.item(),
        node=node,
    )
