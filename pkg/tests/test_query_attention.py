import numpy as np
import pytest

from lgi import tensor as T
from lgi.errors import NInvalid
from lgi.model import uniform_maker
from lgi.query_attention import QueryAttentionParams, extract_phrases
from lgi.tensor import Tensor, grad_check


def make_params(d=8, n=3, seed=0):
    return QueryAttentionParams(uniform_maker(np.random.default_rng(seed)), d, n)


def random_inputs(d=8, length=5, seed=1):
    rng = np.random.default_rng(seed)
    return Tensor(rng.normal(size=(d, length))), Tensor(rng.normal(size=d))


def test_requires_at_least_one_step():
    with pytest.raises(NInvalid):
        make_params(n=0)


def test_single_word_attention_is_one():
    words, sentence = random_inputs(length=1)
    out = extract_phrases(words, sentence, make_params(n=3))
    np.testing.assert_allclose(out.attn.data, np.ones((1, 3)))
    for n in range(3):
        np.testing.assert_allclose(out.phrases.data[:, n], words.data[:, 0])


def test_identical_word_columns_give_that_column():
    rng = np.random.default_rng(4)
    col = rng.normal(size=8)
    words = Tensor(np.repeat(col[:, None], 5, axis=1))
    sentence = Tensor(rng.normal(size=8))
    out = extract_phrases(words, sentence, make_params(n=2, seed=2))
    for n in range(2):
        np.testing.assert_allclose(out.phrases.data[:, n], col, atol=1e-12)


def test_attention_columns_are_distributions():
    rng = np.random.default_rng(7)
    for seed in range(10):
        words = Tensor(rng.normal(size=(8, 6)) * 3)
        sentence = Tensor(rng.normal(size=8))
        out = extract_phrases(words, sentence, make_params(n=3, seed=seed))
        attn = out.attn.data
        assert np.all(attn >= 0)
        np.testing.assert_allclose(attn.sum(axis=0), 1.0, atol=1e-9)


def test_sequential_conditioning_propagates():
    # perturbing the first step's query transform must change the second phrase
    words, sentence = random_inputs(seed=3)
    params = make_params(n=2, seed=5)
    base = extract_phrases(words, sentence, params).phrases.data[:, 1].copy()
    params.w_query[0] = Tensor(params.w_query[0].data + 0.05, requires_grad=True)
    bumped = extract_phrases(words, sentence, params).phrases.data[:, 1]
    assert np.abs(base - bumped).max() > 1e-9


def test_single_step_runs_without_previous_phrase():
    words, sentence = random_inputs(seed=6)
    out = extract_phrases(words, sentence, make_params(n=1, seed=6))
    assert out.phrases.shape == (8, 1)
    assert out.attn.shape == (5, 1)


def test_gradients_match_finite_differences():
    d, length, n = 8, 5, 2
    words, sentence = random_inputs(d, length, seed=9)
    names = []

    def record_make(name, shape, fan_in):
        tensor = Tensor(
            np.random.default_rng(hash(name) % (2 ** 31)).normal(size=shape) * 0.4,
            requires_grad=True)
        names.append((name, shape))
        return tensor

    QueryAttentionParams(record_make, d, n)
    sizes = [int(np.prod(s)) for _, s in names]
    rng = np.random.default_rng(10)
    flat0 = Tensor(rng.normal(size=sum(sizes)) * 0.4)

    def f(flat):
        offsets = {}
        off = 0
        for (name, shape), size in zip(names, sizes):
            offsets[name] = (off, off + size, shape)
            off += size

        def make(name, shape, fan_in):
            lo, hi, stored = offsets[name]
            part = T.slice1d(flat, lo, hi)
            return part if len(stored) == 1 else T.reshape(part, stored)

        params = QueryAttentionParams(make, d, n)
        out = extract_phrases(words, sentence, params)
        return T.reduce_sum(out.phrases)

    assert grad_check(f, flat0, eps=1e-5) < 1e-4
