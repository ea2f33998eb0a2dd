"""Per-phrase segment fusion, local context, attentive pooling, global context.

The default pipeline fuses each phrase with the segment features, models
local context per phrase (residual temporal convolutions or window-masked
non-local attention), pools the per-phrase maps with phrase-conditioned
weights, and finishes with residual global self-attention over segments.
Alternative orderings move the fusion step later for ablation.
"""

from __future__ import annotations

import math

import numpy as np

from .config import TrainConfig
from .errors import ConfigInvalid
from .query_attention import PhraseSet
from .tensor import (
    NEG_INF,
    Tensor,
    add,
    concat,
    conv1d_same,
    matmul,
    mul,
    relu,
    reshape,
    scalar_mul,
    softmax,
    tanh,
    tile_columns,
    transpose,
)


class FusionStepParams:
    def __init__(self, make, d: int, kind: str):
        self.kind = kind
        self.w_vis = make("w_vis", (d, d), d)
        self.w_phr = make("w_phr", (d, d), d)
        self.w_out = make("w_out", (d, d), d)
        # concatenation needs an extra 2d -> d projection to match widths
        self.w_cat = make("w_cat", (d, 2 * d), 2 * d) if kind == "concat" else None


def fuse_segments(segs: Tensor, phrase: Tensor, params: FusionStepParams) -> Tensor:
    """Combine segment features (d, T) with one phrase feature (d,)."""
    t = segs.shape[1]
    vis = matmul(params.w_vis, segs)                       # (d, T)
    phr = tile_columns(matmul(params.w_phr, phrase), t)    # (d, T)
    if params.kind == "hadamard":
        mixed = mul(vis, phr)
    elif params.kind == "addition":
        mixed = add(vis, phr)
    elif params.kind == "concat":
        mixed = matmul(params.w_cat, concat([vis, phr], axis=0))
    else:
        raise ConfigInvalid(f"unknown fusion kind {params.kind!r}")
    return matmul(params.w_out, mixed)


class NonLocalBlockParams:
    def __init__(self, make, d: int):
        self.w_q = make("w_q", (d, d), d)
        self.w_k = make("w_k", (d, d), d)
        self.w_v = make("w_v", (d, d), d)


def window_mask(t: int, window: int) -> np.ndarray:
    """Additive (T, T) mask keeping |i - j| <= (window - 1) // 2."""
    half = (window - 1) // 2
    idx = np.arange(t)
    return np.where(np.abs(idx[:, None] - idx[None, :]) <= half, 0.0, NEG_INF)


def nl_block(x: Tensor, params: NonLocalBlockParams,
             mask: np.ndarray | None = None) -> Tensor:
    """Residual scaled dot-product self-attention over segment positions.

    Attention rows are normalized over key positions; an optional additive
    mask confines each row to a temporal window.
    """
    d = x.shape[0]
    q = matmul(params.w_q, x)
    k = matmul(params.w_k, x)
    v = matmul(params.w_v, x)
    logits = scalar_mul(matmul(transpose(q), k), 1.0 / math.sqrt(d))  # (T, T)
    attn = softmax(logits, mask)
    return add(x, matmul(v, transpose(attn)))


class LocalContextParams:
    """Either a residual pair of same-padded convolutions or masked NL blocks."""

    def __init__(self, make, d: int, variant: str, kernel: int = 15,
                 window: int = 31, blocks: int = 1):
        self.variant = variant
        self.window = window
        if variant == "resblock":
            self.conv1_k = make("conv1.kernels", (d, d, kernel), d * kernel)
            self.conv1_b = make("conv1.bias", (d,), d * kernel)
            self.conv2_k = make("conv2.kernels", (d, d, kernel), d * kernel)
            self.conv2_b = make("conv2.bias", (d,), d * kernel)
        elif variant == "masked_nl":
            self.blocks = [NonLocalBlockParams(_scoped(make, f"block{i}"), d)
                           for i in range(blocks)]
        elif variant != "none":
            raise ConfigInvalid(f"unknown local-context variant {variant!r}")


def _scoped(make, prefix: str):
    return lambda name, shape, fan_in: make(f"{prefix}.{name}", shape, fan_in)


def local_context(m: Tensor, params: LocalContextParams) -> Tensor:
    if params.variant == "none":
        return m
    if params.variant == "resblock":
        inner = conv1d_same(m, params.conv1_k, params.conv1_b)
        inner = conv1d_same(relu(inner), params.conv2_k, params.conv2_b)
        return add(m, inner)
    mask = window_mask(m.shape[1], params.window)
    for block in params.blocks:
        m = nl_block(m, block, mask)
    return m


class AttentivePoolParams:
    """MLP scoring each phrase for pooling: d -> d/2 (tanh) -> 1."""

    def __init__(self, make, d: int):
        half = d // 2
        self.w_hidden = make("w_hidden", (half, d), d)
        self.b_hidden = make("b_hidden", (half,), d)
        self.w_out = make("w_out", (1, half), half)
        self.b_out = make("b_out", (1,), half)


def pool_phrases(per_phrase: list[Tensor], phrases: Tensor | None,
                 params: AttentivePoolParams | None) -> tuple[Tensor, np.ndarray]:
    """Convex combination of per-phrase segment maps.

    Weights come from the pooling MLP applied to the phrase features; with a
    single phrase and no pooling parameters the combination degenerates to
    the identity. Returns the pooled map and the weights used.
    """
    n = len(per_phrase)
    if params is None or phrases is None:
        if n != 1:
            raise ConfigInvalid("pooling weights are required for more than one phrase")
        return per_phrase[0], np.ones(1)
    hidden = tanh(add(matmul(params.w_hidden, phrases), params.b_hidden))  # (d/2, N)
    logits = add(matmul(params.w_out, hidden), params.b_out)               # (1, N)
    weights = softmax(reshape(logits, (n,)))
    d, t = per_phrase[0].shape
    flat = concat([reshape(m, (1, d * t)) for m in per_phrase], axis=0)    # (N, d*T)
    pooled = reshape(matmul(weights, flat), (d, t))
    return pooled, weights.data.copy()


class GlobalContextParams:
    def __init__(self, make, d: int, blocks: int):
        self.blocks = [NonLocalBlockParams(_scoped(make, f"block{i}"), d)
                       for i in range(blocks)]


def global_context(r: Tensor, params: GlobalContextParams) -> Tensor:
    for block in params.blocks:
        r = nl_block(r, block)
    return r


class InteractionParams:
    """Bundle of all interaction-stage parameter groups."""

    def __init__(self, fusion: list[FusionStepParams], local: LocalContextParams,
                 pool: AttentivePoolParams | None, global_ctx: GlobalContextParams):
        self.fusion = fusion
        self.local = local
        self.pool = pool
        self.global_ctx = global_ctx


def interact(segs: Tensor, query_repr: "PhraseSet | Tensor",
             params: InteractionParams, ordering: str) -> Tensor:
    """Full interaction pipeline producing semantics-aware segment features.

    `query_repr` is a PhraseSet in phrase mode, or the plain sentence feature
    in sentence mode (one fusion step, no pooling weights, no query-attention
    matrix).
    """
    if isinstance(query_repr, PhraseSet):
        columns = query_repr.columns
        matrix = query_repr.phrases
        pool = params.pool
    else:
        columns = [query_repr]
        matrix = None
        pool = None
    if len(columns) != len(params.fusion):
        raise ConfigInvalid(
            f"{len(params.fusion)} fusion steps vs {len(columns)} phrases")

    if ordering == "fusion_local_global":
        per = [local_context(fuse_segments(segs, e, fp), params.local)
               for e, fp in zip(columns, params.fusion)]
        pooled, _ = pool_phrases(per, matrix, pool)
        return global_context(pooled, params.global_ctx)
    if ordering == "local_fusion_global":
        base = local_context(segs, params.local)
        per = [fuse_segments(base, e, fp) for e, fp in zip(columns, params.fusion)]
        pooled, _ = pool_phrases(per, matrix, pool)
        return global_context(pooled, params.global_ctx)
    if ordering == "local_global_fusion":
        base = global_context(local_context(segs, params.local), params.global_ctx)
        per = [fuse_segments(base, e, fp) for e, fp in zip(columns, params.fusion)]
        pooled, _ = pool_phrases(per, matrix, pool)
        return pooled
    raise ConfigInvalid(f"unknown ordering {ordering!r}")


def build_interaction_params(make, cfg: TrainConfig) -> InteractionParams:
    steps = cfg.n_phrases if cfg.variant == "lgi" else 1
    fusion = [FusionStepParams(_scoped(make, f"fusion.{n}"), cfg.d, cfg.fusion_kind)
              for n in range(steps)]
    local = LocalContextParams(_scoped(make, "local"), cfg.d, cfg.local_variant,
                               kernel=cfg.local_kernel, window=cfg.local_window,
                               blocks=cfg.local_blocks)
    pool = AttentivePoolParams(_scoped(make, "pool"), cfg.d) if cfg.variant == "lgi" else None
    global_ctx = GlobalContextParams(_scoped(make, "global"), cfg.d, cfg.global_blocks)
    return InteractionParams(fusion, local, pool, global_ctx)
