import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from lgi import tensor as T
from lgi.head import HeadParams, canonicalize, predict_interval
from lgi.model import uniform_maker
from lgi.tensor import Tensor, grad_check


def make_params(d=8, seed=0):
    return HeadParams(uniform_maker(np.random.default_rng(seed)), d)


class TestPredictInterval:
    def test_identical_columns_give_uniform_attention(self):
        col = np.random.default_rng(1).normal(size=8)
        r = Tensor(np.repeat(col[:, None], 5, axis=1))
        pred = predict_interval(r, make_params())
        np.testing.assert_allclose(pred.attention.data, np.full(5, 0.2), atol=1e-12)

    def test_single_segment(self):
        r = Tensor(np.random.default_rng(2).normal(size=(8, 1)))
        pred = predict_interval(r, make_params(seed=3))
        np.testing.assert_array_equal(pred.attention.data, [1.0])
        np.testing.assert_allclose(pred.summary.data, r.data[:, 0])

    def test_attention_is_distribution(self):
        rng = np.random.default_rng(4)
        for seed in range(10):
            r = Tensor(rng.normal(size=(8, 7)) * 2)
            pred = predict_interval(r, make_params(seed=seed))
            assert np.all(pred.attention.data >= 0)
            assert abs(pred.attention.data.sum() - 1.0) < 1e-9

    def test_summary_in_convex_hull_of_columns(self):
        rng = np.random.default_rng(5)
        for seed in range(10):
            r = Tensor(rng.normal(size=(8, 6)))
            pred = predict_interval(r, make_params(seed=seed))
            lo = r.data.min(axis=1) - 1e-12
            hi = r.data.max(axis=1) + 1e-12
            assert np.all(pred.summary.data >= lo)
            assert np.all(pred.summary.data <= hi)

    def test_interval_gradient_wrt_features(self):
        d, t = 8, 5
        params = make_params(seed=6)
        flat0 = Tensor(np.random.default_rng(7).normal(size=d * t))

        def f(flat):
            r = T.reshape(flat, (d, t))
            pred = predict_interval(r, params)
            return T.reduce_sum(T.slice1d(pred.interval, 0, 1))

        assert grad_check(f, flat0, eps=1e-5) < 1e-4


class TestCanonicalize:
    def test_passthrough(self):
        assert canonicalize(0.3, 0.7) == (0.3, 0.7)

    def test_clamp_then_order(self):
        assert canonicalize(1.4, -0.2) == (0.0, 1.0)

    def test_swap(self):
        assert canonicalize(0.9, 0.2) == (0.2, 0.9)

    @given(st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=100, deadline=None)
    def test_idempotent_and_ordered(self, a, b):
        s, e = canonicalize(a, b)
        assert 0.0 <= s <= e <= 1.0
        assert canonicalize(s, e) == (s, e)
