"""Recall@tIoU and mean tIoU evaluation, plus reference baseline predictors.

Recall uses a strict inequality at each threshold: a prediction counts only
if its tIoU is larger than the threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset, LengthMismatch

DEFAULT_THRESHOLDS = (0.3, 0.5, 0.7)

Interval = tuple[float, float]


def tiou(a: Interval, b: Interval) -> float:
    """Temporal intersection over union of two canonical [0, 1] intervals."""
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass
class EvalReport:
    recall_at: dict[float, float]
    miou: float
    n_samples: int
    tious: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "recall_at": {f"{k:g}": v for k, v in sorted(self.recall_at.items())},
            "miou": self.miou,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def csv_header(self) -> str:
        cols = ["n_samples"] + [f"recall_{k:g}" for k in sorted(self.recall_at)] + ["miou"]
        return ",".join(cols)

    def to_csv_line(self) -> str:
        vals = [str(self.n_samples)]
        vals += [f"{self.recall_at[k]:.4f}" for k in sorted(self.recall_at)]
        vals.append(f"{self.miou:.4f}")
        return ",".join(vals)


def evaluate(preds: list[Interval], gts: list[Interval],
             thresholds=DEFAULT_THRESHOLDS) -> EvalReport:
    """Score canonical predicted intervals against ground truth.

    recall_at[tau] is the percentage of samples with tIoU strictly greater
    than tau; miou is the mean tIoU, also as a percentage.
    """
    if len(preds) != len(gts):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if not preds:
        raise EmptyDataset("evaluate() needs at least one sample")
    vals = np.array([tiou(p, g) for p, g in zip(preds, gts)])
    recall = {float(tau): float(100.0 * np.mean(vals > tau)) for tau in thresholds}
    return EvalReport(
        recall_at=recall,
        miou=float(100.0 * vals.mean()),
        n_samples=len(preds),
        tious=[float(v) for v in vals],
    )


def random_intervals(n: int, seed: int) -> list[Interval]:
    """n intervals with endpoints drawn uniformly and ordered."""
    rng = np.random.default_rng(seed)
    pairs = rng.random((n, 2))
    return [(float(min(a, b)), float(max(a, b))) for a, b in pairs]


def center_prior_interval(gts: list[Interval], resolution: float = 0.01,
                          chunk: int = 512) -> tuple[Interval, float]:
    """Grid-search the single interval maximizing mean tIoU against gts.

    Candidates are all (s, e) grid pairs with s <= e at the given resolution.
    Returns the best interval and its expected tIoU. Ties resolve to the
    first candidate in (s, e) lexicographic order.
    """
    if not gts:
        raise EmptyDataset("center prior needs at least one reference interval")
    grid = np.round(np.arange(0.0, 1.0 + resolution / 2.0, resolution), 10)
    ss, ee = np.meshgrid(grid, grid, indexing="ij")
    keep = ee >= ss
    cand = np.stack([ss[keep], ee[keep]], axis=1)  # (M, 2)
    g = np.asarray(gts, dtype=np.float64)          # (n, 2)
    g_len = g[:, 1] - g[:, 0]
    best_val = -1.0
    best: Interval = (0.0, 0.0)
    for lo in range(0, len(cand), chunk):
        block = cand[lo:lo + chunk]
        inter = np.clip(
            np.minimum(block[:, 1:2], g[None, :, 1]) - np.maximum(block[:, 0:1], g[None, :, 0]),
            0.0, None,
        )
        union = (block[:, 1:2] - block[:, 0:1]) + g_len[None, :] - inter
        vals = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
        means = vals.mean(axis=1)
        i = int(np.argmax(means))
        if means[i] > best_val:
            best_val = float(means[i])
            best = (float(block[i, 0]), float(block[i, 1]))
    return best, best_val


def baseline_predict(kind: str, n: int, seed: int = 0,
                     reference_gts: list[Interval] | None = None) -> list[Interval]:
    """Reference predictors: `random` or `center_prior`.

    center_prior repeats the grid-search optimum against reference_gts
    (typically the training-split ground truth) for all n samples.
    """
    if kind == "random":
        return random_intervals(n, seed)
    if kind == "center_prior":
        if not reference_gts:
            raise EmptyDataset("center_prior baseline needs reference intervals")
        interval, _ = center_prior_interval(reference_gts)
        return [interval] * n
    raise ValueError(f"unknown baseline kind {kind!r}")
