"""Sequential phrase extraction from query word features.

Each step attends over the word features with a guidance vector built from
the (per-step transformed) sentence feature and the phrase extracted at the
previous step, so later phrases are conditioned on earlier ones. Step 1 is
seeded with a zero phrase vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NInvalid
from .tensor import Tensor, add, concat, matmul, relu, reshape, softmax, tanh


@dataclass
class PhraseSet:
    """N extracted phrase features and the attention that produced them.

    `phrases` is (d, N) with one phrase per column; `attn` is (L, N) where
    each column is a probability distribution over the query words. `columns`
    holds the per-step phrase tensors backing the matrix, in step order.
    """

    phrases: Tensor
    attn: Tensor
    columns: list[Tensor]


class QueryAttentionParams:
    """Attention-scoring matrices; one distinct query transform per step."""

    def __init__(self, make, d: int, n_steps: int):
        if n_steps < 1:
            raise NInvalid(f"need at least one phrase step, got {n_steps}")
        half = d // 2
        self.n_steps = n_steps
        self.w_guide = make("w_guide", (d, 2 * d), 2 * d)
        self.w_query = [make(f"w_query.{n}", (d, d), d) for n in range(n_steps)]
        self.w_score = make("w_score", (1, half), half)
        self.w_guide_att = make("w_guide_att", (half, d), d)
        self.w_word_att = make("w_word_att", (half, d), d)


def extract_phrases(words: Tensor, sentence: Tensor,
                    params: QueryAttentionParams) -> PhraseSet:
    """Extract params.n_steps phrase features from word features (d, L)."""
    d, length = words.shape
    word_proj = matmul(params.w_word_att, words)  # (d/2, L)
    prev = Tensor(np.zeros(d))
    phrase_cols: list[Tensor] = []
    attn_cols: list[Tensor] = []
    columns: list[Tensor] = []
    for w_query in params.w_query:
        guide_in = concat([matmul(w_query, sentence), prev], axis=0)  # (2d,)
        guide = relu(matmul(params.w_guide, guide_in))                # (d,)
        scores = matmul(params.w_score,
                        tanh(add(word_proj, matmul(params.w_guide_att, guide))))  # (1, L)
        attn = softmax(reshape(scores, (length,)))
        phrase = matmul(words, attn)  # (d,)
        phrase_cols.append(reshape(phrase, (d, 1)))
        attn_cols.append(reshape(attn, (length, 1)))
        columns.append(phrase)
        prev = phrase
    return PhraseSet(
        phrases=concat(phrase_cols, axis=1),
        attn=concat(attn_cols, axis=1),
        columns=columns,
    )
