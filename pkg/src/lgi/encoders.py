"""Query and video encoders.

Word- and sentence-level query features come from a two-layer bidirectional
LSTM over learned word embeddings. Segment features are an embedded,
ReLU-activated projection of the raw per-segment visual features plus a
learned per-position embedding. Short videos are left-aligned and
zero-filled up to the fixed segment count T before encoding.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, EmptyQuery, FormatError, ShapeMismatch
from .tensor import (
    Tensor,
    add,
    concat,
    lookup,
    matmul,
    mul,
    relu,
    reshape,
    sigmoid,
    slice1d,
    tanh,
)

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1


class Vocabulary:
    """Token-to-index map. Index 0 is padding, index 1 the learned OOV slot."""

    def __init__(self, token_to_index: dict[str, int]):
        if token_to_index.get(PAD_TOKEN) != PAD_INDEX:
            raise FormatError(f"vocabulary must map {PAD_TOKEN!r} to {PAD_INDEX}")
        if token_to_index.get(UNK_TOKEN) != UNK_INDEX:
            raise FormatError(f"vocabulary must map {UNK_TOKEN!r} to {UNK_INDEX}")
        indices = sorted(token_to_index.values())
        if indices != list(range(len(token_to_index))):
            raise FormatError("vocabulary indices must be a bijection onto 0..V-1")
        self._tok2idx = dict(token_to_index)

    @staticmethod
    def tokenize(text: str) -> list[str]:
        """Lower-case and split on whitespace/punctuation."""
        return _TOKEN_RE.findall(text.lower())

    @classmethod
    def from_token_lists(cls, token_lists) -> "Vocabulary":
        seen: set[str] = set()
        for tokens in token_lists:
            seen.update(tokens)
        seen.discard(PAD_TOKEN)
        seen.discard(UNK_TOKEN)
        mapping = {PAD_TOKEN: PAD_INDEX, UNK_TOKEN: UNK_INDEX}
        for i, tok in enumerate(sorted(seen)):
            mapping[tok] = i + 2
        return cls(mapping)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self._tok2idx.get(tok, UNK_INDEX) for tok in tokens]

    def __len__(self) -> int:
        return len(self._tok2idx)

    def __contains__(self, token: str) -> bool:
        return token in self._tok2idx

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self._tok2idx, fh, ensure_ascii=False, indent=0, sort_keys=True)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise FormatError("vocabulary file must hold a JSON object")
        return cls({str(k): int(v) for k, v in data.items()})


class LstmCellParams:
    """One direction of one layer; separate matrices and biases per gate."""

    GATES = ("i", "f", "g", "o")

    def __init__(self, make, input_size: int, hidden_size: int):
        self.hidden_size = hidden_size
        for gate in self.GATES:
            setattr(self, f"w_{gate}", make(f"w_{gate}", (hidden_size, input_size), input_size))
            setattr(self, f"u_{gate}", make(f"u_{gate}", (hidden_size, hidden_size), hidden_size))
            setattr(self, f"b_{gate}", make(f"b_{gate}", (hidden_size,), input_size))


def _run_direction(p: LstmCellParams, xs: list[Tensor]) -> list[Tensor]:
    # Fuse the four per-gate matrices once per pass; each step is then two
    # matrix-vector products plus the gate nonlinearities.
    hidden = p.hidden_size
    w_all = concat([p.w_i, p.w_f, p.w_g, p.w_o], axis=0)
    u_all = concat([p.u_i, p.u_f, p.u_g, p.u_o], axis=0)
    b_all = concat([p.b_i, p.b_f, p.b_g, p.b_o], axis=0)
    h = Tensor(np.zeros(hidden))
    c = Tensor(np.zeros(hidden))
    states = []
    for x in xs:
        pre = add(add(matmul(w_all, x), matmul(u_all, h)), b_all)  # (4h,)
        i = sigmoid(slice1d(pre, 0, hidden))
        f = sigmoid(slice1d(pre, hidden, 2 * hidden))
        g = tanh(slice1d(pre, 2 * hidden, 3 * hidden))
        o = sigmoid(slice1d(pre, 3 * hidden, 4 * hidden))
        c = add(mul(f, c), mul(i, g))
        h = mul(o, tanh(c))
        states.append(h)
    return states


class QueryEncoderParams:
    """Word embedding table plus two stacked bidirectional LSTM layers."""

    def __init__(self, make, vocab_size: int, d: int):
        if d % 2 != 0:
            raise ConfigInvalid(f"query feature width d must be even, got {d}")
        self.d = d
        half = d // 2
        self.embedding = make("embedding", (vocab_size, d), d)
        self.layers = []
        for layer in range(2):
            fwd = LstmCellParams(_scoped(make, f"l{layer}.fwd"), d, half)
            bwd = LstmCellParams(_scoped(make, f"l{layer}.bwd"), d, half)
            self.layers.append((fwd, bwd))


def _scoped(make, prefix: str):
    return lambda name, shape, fan_in: make(f"{prefix}.{name}", shape, fan_in)


def encode_query(token_ids: list[int], params: QueryEncoderParams) -> tuple[Tensor, Tensor]:
    """Return word features (d, L) and the sentence feature (d,).

    Column l of the word matrix concatenates the top-layer forward and
    backward hidden states at position l; the sentence feature concatenates
    the last forward state and the first-position backward state.
    """
    if len(token_ids) == 0:
        raise EmptyQuery("cannot encode an empty token sequence")
    d = params.d
    xs = [reshape(lookup(params.embedding, [tok]), (d,)) for tok in token_ids]
    fwd_states: list[Tensor] = []
    bwd_states: list[Tensor] = []
    for fwd, bwd in params.layers:
        fwd_states = _run_direction(fwd, xs)
        bwd_states = list(reversed(_run_direction(bwd, list(reversed(xs)))))
        xs = [concat([hf, hb], axis=0) for hf, hb in zip(fwd_states, bwd_states)]
    words = concat([reshape(h, (d, 1)) for h in xs], axis=1)  # (d, L)
    sentence = concat([fwd_states[-1], bwd_states[0]], axis=0)  # (d,)
    return words, sentence


class VideoEncoderParams:
    """Segment projection and, optionally, a per-position embedding table."""

    def __init__(self, make, d: int, d_v: int, t: int, position_embedding: bool = True):
        self.t = t
        self.w_seg = make("w_seg", (d, d_v), d_v)
        self.w_pos = make("w_pos", (d, t), d) if position_embedding else None


@dataclass
class SegmentFeatures:
    features: Tensor          # (d, T)
    valid_mask: np.ndarray    # (T,) bool; False where columns were zero-filled


def sample_segments(raw: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly sample t columns; shorter inputs are zero-filled on the right."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] < 1:
        raise ShapeMismatch(f"raw features must be (d_v, T_raw>=1), got {raw.shape}")
    t_raw = raw.shape[1]
    if t_raw >= t:
        if t == 1:
            idx = [0]
        else:
            scale = (t_raw - 1) / (t - 1)
            idx = [int(np.floor(i * scale + 0.5)) for i in range(t)]
        return raw[:, idx].copy(), np.ones(t, dtype=bool)
    out = np.zeros((raw.shape[0], t), dtype=np.float64)
    out[:, :t_raw] = raw
    mask = np.zeros(t, dtype=bool)
    mask[:t_raw] = True
    return out, mask


def encode_video(sampled: Tensor, valid_mask: np.ndarray,
                 params: VideoEncoderParams) -> SegmentFeatures:
    """ReLU-projected segment features plus position embeddings.

    The position embedding is added to every column, including zero-filled
    ones; downstream masking of padded columns is a separate, optional step.
    """
    if sampled.shape[1] != params.t:
        raise ShapeMismatch(f"expected {params.t} segments, got {sampled.shape[1]}")
    s = relu(matmul(params.w_seg, sampled))
    if params.w_pos is not None:
        s = add(s, params.w_pos)
    return SegmentFeatures(s, np.asarray(valid_mask, dtype=bool))
