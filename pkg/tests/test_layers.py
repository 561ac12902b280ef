import numpy as np
import pytest

from omivae.errors import ValidationError
from omivae.layers import (
    ActivationKind,
    BatchNormLayer,
    FcBlock,
    LinearLayer,
    activation_backward,
    apply_activation,
    gradient_check,
)
from omivae.numerics import RngState


def make_block(in_dim, out_dim, activation, batch_norm=True, seed=0):
    return FcBlock(in_dim, out_dim, activation, RngState(seed), batch_norm=batch_norm)


class TestForward:
    def test_identity_configuration(self):
        block = make_block(3, 3, ActivationKind.IDENTITY, batch_norm=False)
        block.linear.weights[:] = np.eye(3)
        block.linear.bias[:] = 0.0
        x = RngState(1).standard_normal(4, 3)
        assert np.array_equal(block.forward(x, train=False), x)

    def test_relu_definition(self):
        z = np.array([[-1.0, 0.0, 2.0]])
        assert np.array_equal(apply_activation(ActivationKind.RELU, z), [[0.0, 0.0, 2.0]])

    def test_batchnorm_normalizes_in_train_mode(self):
        block = make_block(6, 5, ActivationKind.IDENTITY, batch_norm=True)
        x = RngState(2).standard_normal(32, 6) * 3.0 + 1.0
        out = block.forward(x, train=True)
        assert np.max(np.abs(out.mean(axis=0))) < 1e-6
        # biased batch variance is 1 up to the epsilon in the denominator
        assert np.max(np.abs(out.var(axis=0) - 1.0)) < 1e-4

    def test_train_batchnorm_rejects_single_sample(self):
        block = make_block(3, 3, ActivationKind.RELU)
        with pytest.raises(ValidationError):
            block.forward(np.zeros((1, 3)), train=True)

    def test_dimension_mismatch(self):
        block = make_block(3, 2, ActivationKind.RELU)
        with pytest.raises(ValidationError):
            block.forward(np.zeros((4, 5)), train=False)

    def test_infer_mode_mutates_nothing(self):
        block = make_block(4, 4, ActivationKind.SIGMOID)
        x = RngState(3).standard_normal(8, 4)
        before_mean = block.norm.running_mean.copy()
        before_var = block.norm.running_var.copy()
        first = block.forward(x, train=False)
        second = block.forward(x, train=False)
        assert np.array_equal(first, second)
        assert np.array_equal(block.norm.running_mean, before_mean)
        assert np.array_equal(block.norm.running_var, before_var)
        with pytest.raises(ValidationError):
            block.backward(np.zeros_like(first))


class TestBackward:
    def test_zero_upstream_gives_zero_gradients(self):
        block = make_block(4, 3, ActivationKind.SIGMOID)
        x = RngState(4).standard_normal(6, 4)
        out = block.forward(x, train=True)
        din = block.backward(np.zeros_like(out))
        assert np.array_equal(din, np.zeros_like(x))
        for p in block.parameters():
            assert np.array_equal(p.grad, np.zeros_like(p.grad))

    def test_sum_loss_gradient_is_column_sums(self):
        # loss = sum(outputs) of a bare linear layer: dW rows are input column sums
        layer = LinearLayer(2, 2, RngState(5))
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = layer.forward(x, train=True)
        layer.backward(np.ones_like(out))
        expected = np.tile(x.sum(axis=0), (2, 1))
        assert np.allclose(layer.grad_weights, expected)
        assert np.allclose(layer.grad_bias, [2.0, 2.0])

    def test_backward_requires_cache_and_consumes_it(self):
        block = make_block(3, 3, ActivationKind.RELU)
        with pytest.raises(ValidationError):
            block.backward(np.zeros((2, 3)))
        out = block.forward(RngState(6).standard_normal(4, 3), train=True)
        block.backward(np.ones_like(out))
        with pytest.raises(ValidationError):
            block.backward(np.ones_like(out))

    def test_upstream_shape_checked(self):
        block = make_block(3, 3, ActivationKind.RELU)
        block.forward(RngState(6).standard_normal(4, 3), train=True)
        with pytest.raises(ValidationError):
            block.backward(np.zeros((4, 7)))

    def test_forward_backward_leaves_parameters_unchanged(self):
        block = make_block(5, 4, ActivationKind.SIGMOID)
        snapshot = [p.value.copy() for p in block.parameters()]
        x = RngState(7).standard_normal(8, 5)
        out = block.forward(x, train=True)
        block.backward(RngState(8).standard_normal(*out.shape))
        for p, saved in zip(block.parameters(), snapshot):
            assert np.array_equal(p.value, saved)
            assert not np.array_equal(p.grad, np.zeros_like(p.grad))


class TestActivationJacobians:
    @pytest.mark.parametrize(
        "kind",
        [ActivationKind.RELU, ActivationKind.SIGMOID, ActivationKind.SOFTMAX, ActivationKind.IDENTITY],
    )
    def test_jvp_matches_finite_differences(self, kind):
        rng = RngState(10)
        z = rng.standard_normal(1, 5)
        z[np.abs(z) < 0.1] = 0.3  # keep away from the ReLU kink
        direction = rng.standard_normal(1, 5)
        out = apply_activation(kind, z)
        analytic = activation_backward(kind, direction, out)
        h = 1e-6
        numeric = (
            apply_activation(kind, z + h * direction) - apply_activation(kind, z - h * direction)
        ) / (2.0 * h)
        assert np.max(np.abs(analytic - numeric)) < 1e-6


def weighted_sum_loss(weights):
    def loss_fn(block, batch):
        out = block.forward(batch, train=True)
        block.backward(weights)
        return float((out * weights).sum())

    return loss_fn


class TestGradientCheck:
    def test_linear_relu_block(self):
        block = make_block(4, 3, ActivationKind.RELU, batch_norm=False, seed=20)
        x = RngState(21).standard_normal(6, 4)
        w = RngState(22).standard_normal(6, 3)
        result = gradient_check(block, weighted_sum_loss(w), x, tolerance=1e-4)
        assert result.max_rel_error <= 1e-4

    def test_linear_batchnorm_sigmoid_block(self):
        block = make_block(5, 4, ActivationKind.SIGMOID, batch_norm=True, seed=23)
        x = RngState(24).standard_normal(8, 5)
        w = RngState(25).standard_normal(8, 4)
        result = gradient_check(block, weighted_sum_loss(w), x, tolerance=1e-4)
        assert result.max_rel_error <= 1e-4

    def test_gradient_check_zeroes_grads_after(self):
        block = make_block(3, 3, ActivationKind.RELU, batch_norm=False)
        x = RngState(26).standard_normal(4, 3)
        w = RngState(27).standard_normal(4, 3)
        gradient_check(block, weighted_sum_loss(w), x)
        for p in block.parameters():
            assert np.array_equal(p.grad, np.zeros_like(p.grad))
