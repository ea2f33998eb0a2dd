import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgi import tensor as T
from lgi.errors import (
    EmptyAxis,
    EvenKernel,
    NonFiniteValue,
    NonScalarLoss,
    ShapeMismatch,
)
from lgi.tensor import NEG_INF, Tape, Tensor, conv1d_same, grad_check


def conv_oracle(seq, kernels, bias):
    """Brute-force O(d_out * d * T * k) zero-padded convolution."""
    d_out, d, k = kernels.shape
    t_len = seq.shape[1]
    half = (k - 1) // 2
    out = np.zeros((d_out, t_len))
    for o in range(d_out):
        for t in range(t_len):
            acc = bias[o]
            for c in range(d):
                for j in range(k):
                    src = t + j - half
                    if 0 <= src < t_len:
                        acc += kernels[o, c, j] * seq[c, src]
            out[o, t] = acc
    return out


class TestForward:
    def test_softmax_uniform_by_symmetry(self):
        out = T.softmax(Tensor([0.0, 0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [0.25, 0.25, 0.25, 0.25])

    def test_hadamard_elementwise(self):
        out = T.mul(Tensor([1.0, 2.0, 3.0]), Tensor([4.0, 5.0, 6.0]))
        np.testing.assert_array_equal(out.data, [4.0, 10.0, 18.0])

    def test_masked_softmax_excludes_entry(self):
        out = T.softmax(Tensor([1.0, 2.0]), mask=np.array([0.0, NEG_INF]))
        np.testing.assert_array_equal(out.data, [1.0, 0.0])

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = Tensor(rng.normal(size=(4, 7)) * 10)
            y = T.softmax(x).data
            assert np.all(y >= 0)
            np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
    @settings(max_examples=50, deadline=None)
    def test_softmax_vector_is_distribution(self, vals):
        y = T.softmax(Tensor(vals)).data
        assert np.all(y >= 0)
        assert abs(y.sum() - 1.0) < 1e-12

    def test_add_bias_broadcasts_over_trailing_axis(self):
        a = Tensor(np.zeros((2, 3)))
        b = Tensor([1.0, 2.0])
        np.testing.assert_array_equal(T.add(a, b).data, [[1, 1, 1], [2, 2, 2]])

    def test_add_rejects_other_broadcasts(self):
        with pytest.raises(ShapeMismatch):
            T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeMismatch):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_reduce_empty_axis(self):
        with pytest.raises(EmptyAxis):
            T.reduce_sum(Tensor(np.zeros((3, 0))), axis=1)
        with pytest.raises(EmptyAxis):
            T.reduce_mean(Tensor(np.zeros((0,))), axis=0)

    def test_tile_columns(self):
        out = T.tile_columns(Tensor([1.0, 2.0]), 3)
        np.testing.assert_array_equal(out.data, [[1, 1, 1], [2, 2, 2]])


class TestConv:
    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        d, t = 4, 6
        seq = Tensor(rng.normal(size=(d, t)))
        kernels = np.zeros((d, d, 3))
        kernels[np.arange(d), np.arange(d), 1] = 1.0
        out = conv1d_same(seq, Tensor(kernels), Tensor(np.zeros(d)))
        np.testing.assert_allclose(out.data, seq.data)

    def test_zero_kernels(self):
        out = conv1d_same(Tensor(np.ones((2, 5))), Tensor(np.zeros((3, 2, 3))),
                          Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, np.zeros((3, 5)))

    def test_hand_rolled_example(self):
        # zero-padded window sums of [1,2,3] with an all-ones width-3 kernel
        out = conv1d_same(Tensor([[1.0, 2.0, 3.0]]),
                          Tensor(np.ones((1, 1, 3))), Tensor(np.zeros(1)))
        np.testing.assert_array_equal(out.data, [[3.0, 6.0, 5.0]])

    def test_even_kernel_rejected(self):
        with pytest.raises(EvenKernel):
            conv1d_same(Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 2, 4))),
                        Tensor(np.zeros(2)))

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            d = int(rng.integers(1, 5))
            d_out = int(rng.integers(1, 5))
            t = int(rng.integers(1, 9))
            k = int(rng.choice([1, 3, 5, 7]))
            seq = rng.normal(size=(d, t))
            kernels = rng.normal(size=(d_out, d, k))
            bias = rng.normal(size=d_out)
            got = conv1d_same(Tensor(seq), Tensor(kernels), Tensor(bias)).data
            want = conv_oracle(seq, kernels, bias)
            assert np.abs(got - want).max() <= 1e-12


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        with Tape() as tape:
            tape.backward(T.reduce_sum(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_square_gradient(self):
        x = Tensor([1.0, -2.0], requires_grad=True)
        with Tape() as tape:
            tape.backward(T.reduce_sum(T.mul(x, x)))
        np.testing.assert_array_equal(x.grad, [2.0, -4.0])

    def test_fanout_equals_sum_of_paths(self):
        # f(x) = g(x, x) must match g(y, z) with duplicated inputs
        val = np.array([0.7, -1.3, 0.2])

        def g(a, b):
            return T.reduce_sum(T.mul(T.tanh(a), T.sigmoid(b)))

        x = Tensor(val.copy(), requires_grad=True)
        with Tape() as tape:
            tape.backward(g(x, x))
        y = Tensor(val.copy(), requires_grad=True)
        z = Tensor(val.copy(), requires_grad=True)
        with Tape() as tape:
            tape.backward(g(y, z))
        np.testing.assert_allclose(x.grad, y.grad + z.grad, atol=1e-14)

    def test_gradients_accumulate_across_fanout(self):
        x = Tensor([2.0], requires_grad=True)
        with Tape() as tape:
            tape.backward(T.reduce_sum(T.add(x, x)))
        np.testing.assert_array_equal(x.grad, [2.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            with pytest.raises(NonScalarLoss):
                tape.backward(T.mul(x, x))

    def test_nested_tape_rejected(self):
        with Tape():
            with pytest.raises(RuntimeError):
                Tape().__enter__()


class TestGradCheck:
    def test_sum_of_squares_is_tight(self):
        err = grad_check(lambda x: T.reduce_sum(T.mul(x, x)),
                         Tensor([0.5, -1.5, 2.0]), eps=1e-5)
        assert err < 1e-6

    def test_softmax_first_component(self):
        err = grad_check(lambda x: T.reduce_sum(T.slice1d(T.softmax(x), 0, 1)),
                         Tensor([0.3, -0.7]), eps=1e-5)
        assert err < 1e-5

    def test_relu_probed_away_from_kink(self):
        # probe points sit at least one step away from the origin by convention
        err = grad_check(lambda x: T.reduce_sum(T.relu(x)),
                         Tensor([0.5, -0.5, 1.0]), eps=1e-5)
        assert err < 1e-6

    def test_eps_out_of_range(self):
        with pytest.raises(ValueError):
            grad_check(lambda x: T.reduce_sum(x), Tensor([1.0]), eps=1e-2)

    @pytest.mark.filterwarnings("ignore:divide by zero")
    def test_non_finite_value_detected(self):
        def f(x):
            return T.reduce_sum(T.log_floored(x, floor=0.0))

        with pytest.raises(NonFiniteValue):
            grad_check(f, Tensor([0.0]), eps=1e-5)


def test_primitive_forward_dispatch():
    out = T.primitive_forward("hadamard", Tensor([2.0]), Tensor([3.0]))
    np.testing.assert_array_equal(out.data, [6.0])
    with pytest.raises(ValueError):
        T.primitive_forward("no_such_op", Tensor([1.0]))
