"""Full-model assembly: parameter construction, naming, and the forward pass.

All parameter groups are built through a single `make(name, shape, fan_in)`
callable, so the same construction path serves random initialization,
checkpoint loading, and gradient-check packing. Construction order is
deterministic and defines the canonical parameter order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .encoders import (
    QueryEncoderParams,
    SegmentFeatures,
    VideoEncoderParams,
    encode_query,
    encode_video,
    sample_segments,
)
from .errors import ShapeMismatch
from .head import HeadParams, Prediction, predict_interval
from .interactions import InteractionParams, build_interaction_params, interact
from .query_attention import PhraseSet, QueryAttentionParams, extract_phrases
from .tensor import NEG_INF, Tensor, reshape, slice1d


def uniform_maker(rng: np.random.Generator):
    """Leaf tensors initialized uniformly in +-1/sqrt(fan_in)."""

    def make(name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
        bound = 1.0 / math.sqrt(max(1, fan_in))
        return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

    return make


def array_maker(arrays: dict[str, np.ndarray]):
    """Leaf tensors taken from a name -> array mapping (checkpoint load)."""

    def make(name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
        try:
            arr = arrays[name]
        except KeyError:
            raise ShapeMismatch(f"missing parameter {name!r}") from None
        if tuple(arr.shape) != tuple(shape):
            raise ShapeMismatch(f"parameter {name!r}: stored {arr.shape}, expected {shape}")
        return Tensor(np.array(arr, dtype=np.float64), requires_grad=True)

    return make


def flat_maker(flat: Tensor, order: list[tuple[str, tuple[int, ...]]]):
    """Graph-node tensors sliced sequentially out of one flat vector.

    `order` must be the (name, shape) list of a skeleton built with the same
    config, in construction order; slicing then lines up with pack().
    """
    offsets = {}
    off = 0
    for name, shape in order:
        size = int(np.prod(shape, dtype=np.int64))
        offsets[name] = (off, off + size, shape)
        off += size
    if off != flat.size:
        raise ShapeMismatch(f"flat vector has {flat.size} entries, expected {off}")

    def make(name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
        start, stop, stored = offsets[name]
        if tuple(stored) != tuple(shape):
            raise ShapeMismatch(f"parameter {name!r}: packed {stored}, expected {shape}")
        return slice1d(flat, start, stop) if len(shape) == 1 else \
            reshape(slice1d(flat, start, stop), shape)

    return make


class ModelParams:
    """Every learnable tensor, grouped by sub-network and recorded by name."""

    def __init__(self, cfg: TrainConfig, vocab_size: int, d_v: int, make):
        self.cfg = cfg
        self._entries: list[tuple[str, Tensor]] = []
        rec = self._recorder(make)
        scoped = lambda prefix: (lambda name, shape, fan_in:
                                 rec(f"{prefix}.{name}", shape, fan_in))
        self.query = QueryEncoderParams(scoped("query"), vocab_size, cfg.d)
        self.video = VideoEncoderParams(scoped("video"), cfg.d, d_v, cfg.t,
                                        position_embedding=cfg.position_embedding)
        if cfg.variant == "lgi":
            self.query_attention = QueryAttentionParams(scoped("qatt"), cfg.d, cfg.n_phrases)
        else:
            self.query_attention = None
        self.interaction: InteractionParams = build_interaction_params(
            scoped("interaction"), cfg)
        self.head = HeadParams(scoped("head"), cfg.d)

    def _recorder(self, make):
        def rec(name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
            tensor = make(name, shape, fan_in)
            self._entries.append((name, tensor))
            return tensor
        return rec

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self._entries)

    def order(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, tuple(t.shape)) for name, t in self._entries]

    def n_parameters(self) -> int:
        return sum(t.size for _, t in self._entries)

    def pack(self) -> np.ndarray:
        """Flatten all parameters into one vector, in construction order."""
        return np.concatenate([t.data.reshape(-1) for _, t in self._entries])

    def zero_grad(self) -> None:
        for _, t in self._entries:
            t.zero_grad()


def build_model(cfg: TrainConfig, vocab_size: int, d_v: int,
                rng: np.random.Generator | None = None, make=None) -> ModelParams:
    if make is None:
        make = uniform_maker(rng if rng is not None else np.random.default_rng(cfg.seed))
    return ModelParams(cfg, vocab_size, d_v, make)


@dataclass
class ForwardOutput:
    prediction: Prediction
    phrases: PhraseSet | None
    segments: SegmentFeatures


def forward(params: ModelParams, token_ids: list[int],
            raw_features: np.ndarray) -> ForwardOutput:
    """Run one sample through the full model."""
    cfg = params.cfg
    sampled, valid_mask = sample_segments(np.asarray(raw_features, dtype=np.float64), cfg.t)
    segments = encode_video(Tensor(sampled), valid_mask, params.video)
    words, sentence = encode_query(token_ids, params.query)
    if params.query_attention is not None:
        query_repr: PhraseSet | Tensor = extract_phrases(words, sentence, params.query_attention)
        phrases = query_repr
    else:
        query_repr = sentence
        phrases = None
    r = interact(segments.features, query_repr, params.interaction, cfg.ordering)
    attention_mask = None
    if cfg.mask_padded_attention and not valid_mask.all():
        attention_mask = np.where(valid_mask, 0.0, NEG_INF)
    prediction = predict_interval(r, params.head, attention_mask)
    return ForwardOutput(prediction=prediction, phrases=phrases, segments=segments)
