import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fplus.tensor import (
    ShapeError,
    Tensor,
    add,
    cross_entropy,
    elementwise_apply,
    flatten,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    reshape,
    tsum,
    zero_grad,
)
from gradcheck import check_gradients


class TestConstruction:
    def test_data_is_float64_and_read_only(self):
        t = Tensor([1, 2, 3])
        assert t.data.dtype == np.float64
        with pytest.raises(ValueError):
            t.data[0] = 5.0

    def test_grad_buffer_only_when_requested(self):
        assert Tensor([1.0]).grad is None
        np.testing.assert_array_equal(Tensor([1.0, 2.0], requires_grad=True).grad, [0.0, 0.0])

    def test_reshape_has_copy_semantics(self):
        x = Tensor(np.arange(6.0), requires_grad=True)
        y = reshape(x, (2, 3))
        x.data = np.zeros(6)
        np.testing.assert_array_equal(y.data, np.arange(6.0).reshape(2, 3))
        assert x.shape == (6,)

    def test_bad_reshape(self):
        with pytest.raises(ShapeError):
            reshape(Tensor(np.ones(5)), (2, 3))


class TestElementwiseApply:
    def test_identity(self):
        x = np.array([-1.5, 0.0, 2.25])
        np.testing.assert_array_equal(elementwise_apply(Tensor(x), lambda v: v, lambda v: 1.0).data, x)

    def test_square_forward_and_backward(self):
        x = Tensor([3.0], requires_grad=True)
        y = elementwise_apply(x, lambda v: v * v, lambda v: 2 * v)
        np.testing.assert_array_equal(y.data, [9.0])
        tsum(y).backward()
        h = 1e-6
        fd = ((3 + h) ** 2 - (3 - h) ** 2) / (2 * h)
        np.testing.assert_allclose(x.grad, [fd], rtol=1e-8)
        np.testing.assert_array_equal(x.grad, [6.0])

    def test_empty(self):
        y = elementwise_apply(Tensor(np.zeros(0)), np.sin, np.cos)
        assert y.shape == (0,)

    def test_non_finite_propagates(self):
        y = elementwise_apply(Tensor([np.inf, np.nan]), lambda v: v * 2, lambda v: 2.0)
        assert np.isinf(y.data[0]) and np.isnan(y.data[1])


class TestMatmul:
    def test_identity(self):
        x = np.random.default_rng(0).normal(size=(2, 5))
        np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), Tensor(x)).data, x)

    def test_hand_value(self):
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))

    def test_gradients(self):
        rng = np.random.default_rng(1)
        build = lambda a, b: tsum(mul(matmul(a, b), Tensor(np.arange(12.0).reshape(3, 4))))
        n = check_gradients(build, [rng.normal(size=(3, 5)), rng.normal(size=(5, 4))], rng)
        assert n == 35


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.arange(4.0), requires_grad=True)
        tsum(x).backward()
        np.testing.assert_array_equal(x.grad, np.ones(4))

    def test_sum_of_squares(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        tsum(mul(x, x)).backward()
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_second_call_accumulates(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        loss = tsum(mul(x, x))
        loss.backward()
        loss.backward()
        np.testing.assert_array_equal(x.grad, [4.0, 8.0])
        zero_grad([x])
        np.testing.assert_array_equal(x.grad, [0.0, 0.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ShapeError):
            mul(x, x).backward()

    def test_unreachable_leaf_stays_zero(self):
        x = Tensor([1.0], requires_grad=True)
        unused = Tensor([5.0, 6.0], requires_grad=True)
        tsum(mul(x, x)).backward()
        np.testing.assert_array_equal(unused.grad, [0.0, 0.0])

    def test_shared_subexpression(self):
        # y = x*x used twice: d/dx sum(y + y) = 4x
        x = Tensor([1.5, -2.0], requires_grad=True)
        y = mul(x, x)
        tsum(add(y, y)).backward()
        np.testing.assert_array_equal(x.grad, [6.0, -8.0])

    def test_additivity_over_independent_subgraphs(self):
        rng = np.random.default_rng(3)
        a0, b0 = rng.normal(size=3), rng.normal(size=3)
        a, b = Tensor(a0, requires_grad=True), Tensor(b0, requires_grad=True)
        add(tsum(mul(a, a)), tsum(mul(b, mul(b, b)))).backward()
        a2, b2 = Tensor(a0, requires_grad=True), Tensor(b0, requires_grad=True)
        tsum(mul(a2, a2)).backward()
        tsum(mul(b2, mul(b2, b2))).backward()
        np.testing.assert_array_equal(a.grad, a2.grad)
        np.testing.assert_array_equal(b.grad, b2.grad)

    def test_deep_chain_does_not_recurse(self):
        x = Tensor([1.0], requires_grad=True)
        y = x
        for _ in range(5000):
            y = add(y, Tensor([0.0]))
        tsum(y).backward()
        np.testing.assert_array_equal(x.grad, [1.0])

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = mul(x, x)
        assert not y.requires_grad

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(7)
            a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
            b = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
            loss = cross_entropy(matmul(a, b), np.array([0, 1, 1, 0]))
            loss.backward()
            return loss.item(), a.grad.copy(), b.grad.copy()

        r1, r2 = run(), run()
        assert r1[0] == r2[0]
        np.testing.assert_array_equal(r1[1], r2[1])
        np.testing.assert_array_equal(r1[2], r2[2])


class TestPrimitiveGradients:
    rng = np.random.default_rng(11)

    def test_bias_add_over_last_axis(self):
        w = self.rng.normal(size=(4, 3))
        build = lambda x, b: tsum(mul(add(x, b), Tensor(w)))
        check_gradients(build, [self.rng.normal(size=(4, 3)), self.rng.normal(size=3)], self.rng)

    def test_bias_shape_mismatch(self):
        with pytest.raises(ShapeError):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones(2)))

    def test_scalar_mul_and_mean(self):
        build = lambda x, s: mean(mul(mul(x, x), s))
        check_gradients(build, [self.rng.normal(size=(5, 2)), np.array(1.7)], self.rng)

    def test_log_softmax(self):
        r = self.rng.normal(size=(6, 4))
        build = lambda z: tsum(mul(log_softmax(z), Tensor(r)))
        check_gradients(build, [self.rng.normal(size=(6, 4)) * 3], self.rng)

    def test_cross_entropy(self):
        labels = self.rng.integers(0, 5, 20)
        build = lambda z: cross_entropy(z, labels)
        assert check_gradients(build, [self.rng.normal(size=(20, 5))], self.rng) == 100

    def test_flatten(self):
        r = self.rng.normal(size=(3, 8))
        build = lambda x: tsum(mul(flatten(x), Tensor(r)))
        check_gradients(build, [self.rng.normal(size=(3, 2, 2, 2))], self.rng)

    def test_cross_entropy_stable_for_huge_logits(self):
        loss = cross_entropy(Tensor([[1000.0, 0.0], [0.0, 1000.0]]), [0, 1])
        assert loss.item() == 0.0

    def test_cross_entropy_label_range(self):
        with pytest.raises(ShapeError):
            cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-100, 100)))
def test_log_softmax_rows_normalize(v):
    out = log_softmax(Tensor(v[None, :])).data
    assert np.isclose(np.exp(out).sum(), 1.0)
    assert np.all(out <= 1e-12)
