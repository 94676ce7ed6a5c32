import math

import numpy as np
import pytest

from distok.errors import DegenerateInputError, NonFiniteError
from distok.ndmath import (
    AdamState,
    DenseLayer,
    LrSchedule,
    Mlp2,
    adam_step,
    cosine_lr,
    cosine_similarity,
    cosine_similarity_grad,
    finite_diff_check,
    init_adam,
    init_mlp,
    kl_divergence,
    mlp_backward,
    mlp_forward,
    mlp_params,
    softmax,
)


def scalar_mlp_forward(net, x):
    """Independent scalar-loop re-implementation of the MLP forward map."""
    w1, b1 = net.layer1.weight, net.layer1.bias
    w2, b2 = net.layer2.weight, net.layer2.bias
    h = []
    for i in range(w1.shape[0]):
        acc = b1[i]
        for j in range(w1.shape[1]):
            acc += w1[i][j] * x[j]
        h.append(math.tanh(acc))
    out = []
    for i in range(w2.shape[0]):
        acc = b2[i]
        for j in range(w2.shape[1]):
            acc += w2[i][j] * h[j]
        out.append(acc)
    return np.array(out)


class TestMlpForward:
    def test_zero_weights_give_zero_output(self):
        net = Mlp2(DenseLayer(np.zeros((4, 3)), np.zeros(4)),
                   DenseLayer(np.zeros((2, 4)), np.zeros(2)))
        y, _ = mlp_forward(net, np.array([1.0, -2.0, 3.0]))
        assert np.all(y == 0)

    def test_identity_like_net_at_origin(self):
        net = Mlp2(DenseLayer(np.eye(2), np.zeros(2)),
                   DenseLayer(np.eye(2), np.zeros(2)))
        y, _ = mlp_forward(net, np.zeros(2))
        assert np.allclose(y, [0.0, 0.0])

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(42)
        net = init_mlp(5, 7, 3, rng)
        x = np.ones(5)
        y, _ = mlp_forward(net, x)
        assert np.allclose(y, scalar_mlp_forward(net, x), atol=1e-12)

    def test_shape_mismatch_raises(self):
        net = init_mlp(5, 7, 3, np.random.default_rng(0))
        with pytest.raises(ValueError):
            mlp_forward(net, np.zeros(4))


class TestMlpBackward:
    def test_zero_output_gradient(self):
        net = init_mlp(4, 6, 2, np.random.default_rng(1))
        _, cache = mlp_forward(net, np.ones(4))
        dx, grads = mlp_backward(net, cache, np.zeros(2))
        assert np.all(dx == 0)
        assert all(np.all(g == 0) for g in grads)

    def test_single_unit_closed_form(self):
        w1, b1, w2, b2, x = 0.7, -0.2, 1.3, 0.4, 0.9
        net = Mlp2(DenseLayer(np.array([[w1]]), np.array([b1])),
                   DenseLayer(np.array([[w2]]), np.array([b2])))
        y, cache = mlp_forward(net, np.array([x]))
        assert y[0] == pytest.approx(w2 * math.tanh(w1 * x + b1) + b2)
        dx, (dw1, db1, dw2, db2) = mlp_backward(net, cache, np.array([1.0]))
        sech2 = 1.0 - math.tanh(w1 * x + b1) ** 2
        assert dw2[0, 0] == pytest.approx(math.tanh(w1 * x + b1))
        assert db2[0] == pytest.approx(1.0)
        assert dw1[0, 0] == pytest.approx(w2 * sech2 * x)
        assert db1[0] == pytest.approx(w2 * sech2)
        assert dx[0] == pytest.approx(w2 * sech2 * w1)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        net = init_mlp(6, 9, 4, rng)
        x = rng.standard_normal(6)
        target = rng.standard_normal(4)

        def loss():
            y, _ = mlp_forward(net, x)
            return 0.5 * float(np.sum((y - target) ** 2))

        y, cache = mlp_forward(net, x)
        _, grads = mlp_backward(net, cache, y - target)
        report = finite_diff_check(loss, mlp_params(net), grads, tolerance=1e-6)
        assert report.passed, str(report)


class TestCosine:
    def test_self_similarity_is_one(self):
        a = np.array([0.3, -2.0, 5.0])
        assert cosine_similarity(a, a) == pytest.approx(1.0)

    def test_orthogonal_is_zero(self):
        assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_zero_norm_raises(self):
        with pytest.raises(DegenerateInputError):
            cosine_similarity(np.zeros(3), np.ones(3))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            a = rng.standard_normal(16)
            b = rng.standard_normal(16)
            _, da, db = cosine_similarity_grad(a, b)
            ra = finite_diff_check(lambda: cosine_similarity(a, b), [a], [da],
                                   tolerance=1e-6)
            rb = finite_diff_check(lambda: cosine_similarity(a, b), [b], [db],
                                   tolerance=1e-6)
            assert ra.passed and rb.passed


class TestSoftmaxKl:
    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = softmax(rng.standard_normal(9) * 10)
            assert abs(p.sum() - 1.0) < 1e-12
            assert (p >= 0).all()

    def test_kl_self_is_zero(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        assert kl_divergence(p, p) < 1e-9

    def test_kl_onehot_vs_even(self):
        assert kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == \
            pytest.approx(math.log(2), abs=1e-6)

    def test_kl_matches_scalar_oracle(self):
        p = [0.25, 0.25, 0.5]
        q = [1 / 3] * 3
        expected = sum(pi * math.log(pi / qi) for pi, qi in zip(p, q))
        assert kl_divergence(np.array(p), np.array(q)) == \
            pytest.approx(expected, abs=1e-6)

    def test_kl_nonnegative(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            p = rng.dirichlet(np.ones(6))
            q = rng.dirichlet(np.ones(6))
            assert kl_divergence(p, q) >= 0.0

    def test_kl_length_mismatch(self):
        with pytest.raises(ValueError):
            kl_divergence(np.array([1.0]), np.array([0.5, 0.5]))

    def test_kl_negative_entry(self):
        with pytest.raises(ValueError):
            kl_divergence(np.array([-0.5, 1.5]), np.array([0.5, 0.5]))


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        params = [np.array([1.0, 2.0])]
        state = init_adam(params)
        adam_step(params, [np.zeros(2)], state, 0.1)
        assert np.all(params[0] == [1.0, 2.0])
        assert state.step_count == 1

    def test_descends_quadratic(self):
        params = [np.array([1.0])]
        state = init_adam(params)
        adam_step(params, [2.0 * params[0]], state, 0.1)
        assert params[0][0] < 1.0

    def test_converges_on_shifted_quadratic(self):
        params = [np.array([1.0])]
        state = init_adam(params)
        for _ in range(200):
            adam_step(params, [2.0 * (params[0] - 3.0)], state, 0.1)
        assert abs(params[0][0] - 3.0) < 1e-2

    def test_nonfinite_gradient_raises(self):
        params = [np.array([1.0])]
        state = init_adam(params)
        with pytest.raises(NonFiniteError):
            adam_step(params, [np.array([np.nan])], state, 0.1)


class TestCosineLr:
    def test_endpoints_and_midpoint(self):
        sched = LrSchedule(0.0005, 1000)
        assert cosine_lr(sched, 0) == pytest.approx(0.0005)
        assert cosine_lr(sched, 1000) == pytest.approx(0.0, abs=1e-18)
        assert cosine_lr(sched, 500) == pytest.approx(0.00025)

    def test_out_of_range(self):
        sched = LrSchedule(0.0005, 100)
        with pytest.raises(ValueError):
            cosine_lr(sched, 101)


class TestFiniteDiffCheck:
    def test_quadratic_known_gradient(self):
        x = np.array([1.0, -2.0, 0.5])
        report = finite_diff_check(lambda: float(np.sum(x ** 2)), [x], [2 * x],
                                   tolerance=1e-8)
        assert report.passed

    def test_corrupted_gradient_fails(self):
        x = np.array([1.0, -2.0, 0.5])
        report = finite_diff_check(lambda: float(np.sum(x ** 2)), [x],
                                   [2.2 * x], tolerance=1e-4)
        assert not report.passed
