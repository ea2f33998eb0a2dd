"""Gradient-check harness: every primitive, and the full model end to end.

Primitive checks reduce each op's output through a fixed random linear probe
so the whole Jacobian is exercised, not just its row sums. Inputs for ops
with kinks (relu, the floored log) are nudged away from the non-smooth
points by more than the finite-difference step.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .losses import total_loss
from .model import ModelParams, build_model, flat_maker, forward
from .tensor import Tensor, grad_check


def _away_from(x: np.ndarray, point: float, margin: float) -> np.ndarray:
    """Push values within `margin` of `point` outward past it."""
    near = np.abs(x - point) < margin
    return np.where(near, point + margin * np.where(x >= point, 1.0, -1.0) * 2.0, x)


def primitive_cases(rng: np.random.Generator):
    """Yield (name, f, point) gradient-check instances for every primitive.

    f maps one flat tensor to a scalar; `point` is the flat input. Ops with
    several differentiable inputs are packed into a single flat vector.
    """
    n = lambda *s: rng.normal(size=s)

    def split(flat: Tensor, *shapes):
        parts = []
        off = 0
        for shape in shapes:
            size = int(np.prod(shape))
            part = T.slice1d(flat, off, off + size)
            parts.append(part if len(shape) == 1 else T.reshape(part, shape))
            off += size
        return parts

    def case(op, point_arrays, shapes, **kw):
        out0 = op(*[Tensor(p) for p in point_arrays], **kw)
        probe = np.random.default_rng(int(rng.integers(2 ** 32))).normal(size=out0.shape)
        probe_t = Tensor(probe)

        def f(flat: Tensor) -> Tensor:
            val = op(*split(flat, *shapes), **kw)
            if val.ndim == 0:
                return val
            return T.reduce_sum(T.mul(val, probe_t))

        flat0 = np.concatenate([p.reshape(-1) for p in point_arrays])
        return f, Tensor(flat0)

    yield "matmul_mm", *case(T.matmul, [n(3, 4), n(4, 2)], [(3, 4), (4, 2)])
    yield "matmul_mv", *case(T.matmul, [n(3, 4), n(4)], [(3, 4), (4,)])
    yield "matmul_vm", *case(T.matmul, [n(3), n(3, 5)], [(3,), (3, 5)])
    yield "matmul_vv", *case(T.matmul, [n(4), n(4)], [(4,), (4,)])
    yield "transpose", *case(T.transpose, [n(3, 4)], [(3, 4)])
    yield "add", *case(T.add, [n(3, 4), n(3, 4)], [(3, 4), (3, 4)])
    yield "add_bias", *case(T.add, [n(3, 4), n(3)], [(3, 4), (3,)])
    yield "hadamard", *case(T.mul, [n(3, 4), n(3, 4)], [(3, 4), (3, 4)])
    yield "scalar_mul", *case(T.scalar_mul, [n(3, 4)], [(3, 4)], c=-1.7)
    yield "concat_rows", *case(lambda a, b: T.concat([a, b], axis=0),
                               [n(2, 4), n(3, 4)], [(2, 4), (3, 4)])
    yield "concat_cols", *case(lambda a, b: T.concat([a, b], axis=1),
                               [n(3, 2), n(3, 4)], [(3, 2), (3, 4)])
    yield "reshape", *case(T.reshape, [n(3, 4)], [(3, 4)], shape=(2, 6))
    yield "tile_columns", *case(T.tile_columns, [n(5)], [(5,)], n=4)
    yield "slice", *case(T.slice1d, [n(9)], [(9,)], start=2, stop=7)
    yield "relu", *case(T.relu, [_away_from(n(3, 4), 0.0, 1e-4)], [(3, 4)])
    yield "tanh", *case(T.tanh, [n(3, 4)], [(3, 4)])
    yield "sigmoid", *case(T.sigmoid, [n(3, 4)], [(3, 4)])
    yield "softmax_vec", *case(T.softmax, [n(6)], [(6,)])
    yield "softmax_rows", *case(T.softmax, [n(3, 5)], [(3, 5)])
    mask = np.zeros((3, 5))
    mask[:, -1] = T.NEG_INF
    yield "softmax_masked", *case(T.softmax, [n(3, 5)], [(3, 5)], mask=mask)
    yield "sum_all", *case(T.reduce_sum, [n(3, 4)], [(3, 4)])
    yield "sum_axis", *case(T.reduce_sum, [n(3, 4)], [(3, 4)], axis=1)
    yield "mean_all", *case(T.reduce_mean, [n(3, 4)], [(3, 4)])
    yield "mean_axis", *case(T.reduce_mean, [n(3, 4)], [(3, 4)], axis=0)
    yield "lookup", *case(T.lookup, [n(6, 4)], [(6, 4)], indices=[0, 3, 3, 5])
    yield "frobenius_sq", *case(T.frobenius_sq, [n(3, 4)], [(3, 4)])
    yield "log", *case(T.log_floored, [np.abs(n(3, 4)) + 0.05], [(3, 4)])
    yield "smooth_l1", *case(T.smooth_l1, [n(3, 4)], [(3, 4)])
    yield "conv1d_same", *case(T.conv1d_same, [n(3, 7), n(2, 3, 5), n(2)],
                               [(3, 7), (2, 3, 5), (2,)])


def check_primitives(seed: int = 0, points: int = 20,
                     eps: float = 1e-5) -> dict[str, float]:
    """Max grad_check error per primitive over `points` random instances."""
    worst: dict[str, float] = {}
    for point_idx in range(points):
        rng = np.random.default_rng([seed, point_idx])
        for name, f, point in primitive_cases(rng):
            err = grad_check(f, point, eps)
            worst[name] = max(worst.get(name, 0.0), err)
    return worst


def full_model_config(d: int = 8, t: int = 6, n_phrases: int = 2,
                      variant: str = "lgi", fusion_kind: str = "hadamard",
                      local_variant: str = "resblock") -> TrainConfig:
    """Tiny model configuration for end-to-end gradient checks."""
    return TrainConfig(
        d=d, t=t, n_phrases=n_phrases, variant=variant,
        fusion_kind=fusion_kind, local_variant=local_variant,
        local_kernel=3, local_window=3, local_blocks=1, global_blocks=1,
        epochs=1,
    ).validate()


def full_model_error(cfg: TrainConfig, length: int = 5, d_v: int = 5,
                     seed: int = 0, eps: float = 1e-5) -> float:
    """grad_check on the total loss w.r.t. every model parameter."""
    rng = np.random.default_rng(seed)
    vocab_size = 9
    skeleton = build_model(cfg, vocab_size, d_v, rng=rng)
    order = skeleton.order()
    flat0 = Tensor(skeleton.pack())
    token_ids = list(rng.integers(2, vocab_size, size=length))
    features = rng.normal(size=(d_v, cfg.t))
    lo, hi = sorted(rng.uniform(0.1, 0.9, size=2))
    gt = (float(lo), float(max(hi, lo + 0.1)))

    def f(flat: Tensor) -> Tensor:
        params = ModelParams(cfg, vocab_size, d_v, flat_maker(flat, order))
        out = forward(params, token_ids, features)
        return total_loss(out.prediction, out.phrases, gt, cfg.lam,
                          use_tag=cfg.use_tag_loss, use_dqa=cfg.use_dqa_loss).node

    return grad_check(f, flat0, eps)


def full_model_matrix(d: int = 8, t: int = 6, length: int = 5,
                      n_phrases: int = 2, seed: int = 0,
                      eps: float = 1e-5) -> dict[str, float]:
    """Errors for every variant x fusion kind x local-context path."""
    results: dict[str, float] = {}
    for variant in ("lgi", "lgi_sqan"):
        for fusion_kind in ("hadamard", "addition", "concat"):
            for local_variant in ("resblock", "masked_nl"):
                cfg = full_model_config(d=d, t=t, n_phrases=n_phrases,
                                        variant=variant, fusion_kind=fusion_kind,
                                        local_variant=local_variant)
                key = f"{variant}/{fusion_kind}/{local_variant}"
                results[key] = full_model_error(cfg, length=length, seed=seed, eps=eps)
    return results
