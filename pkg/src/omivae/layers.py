"""Fully connected blocks (linear -> optional batch norm -> activation).

Forward and backward passes are written out by hand; `gradient_check`
verifies any block or model against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NumericError, ValidationError
from .numerics import Matrix, RngState, check_finite


class ActivationKind(Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


@dataclass
class Parameter:
    """A named learnable tensor with its gradient accumulator."""

    name: str
    value: np.ndarray
    grad: np.ndarray


def apply_activation(kind: ActivationKind, z: Matrix) -> Matrix:
    if kind is ActivationKind.RELU:
        return np.maximum(z, 0.0)
    if kind is ActivationKind.SIGMOID:
        # split by sign to avoid overflow in exp
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind is ActivationKind.SOFTMAX:
        shifted = z - z.max(axis=1, keepdims=True)
        ez = np.exp(shifted)
        return ez / ez.sum(axis=1, keepdims=True)
    return z


def activation_backward(kind: ActivationKind, upstream: Matrix, out: Matrix) -> Matrix:
    """Jacobian-vector product of the activation, given its forward output."""
    if kind is ActivationKind.RELU:
        return upstream * (out > 0.0)
    if kind is ActivationKind.SIGMOID:
        return upstream * out * (1.0 - out)
    if kind is ActivationKind.SOFTMAX:
        inner = np.sum(upstream * out, axis=1, keepdims=True)
        return out * (upstream - inner)
    return upstream


class LinearLayer:
    """y = x W^T + b with weights of shape (out_dim, in_dim).

    `use_bias=False` drops the bias entirely; a linear layer feeding batch
    norm uses this since the normalization would cancel any bias anyway.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        rng: RngState,
        name: str = "linear",
        use_bias: bool = True,
    ):
        if in_dim < 1 or out_dim < 1:
            raise ValidationError(f"{name}: dimensions must be >= 1, got {in_dim}x{out_dim}")
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        self.name = name
        self.weights = rng.uniform(-limit, limit, (out_dim, in_dim))
        self.bias = np.zeros(out_dim) if use_bias else None
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros(out_dim) if use_bias else None
        self._input: Matrix | None = None

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def forward(self, x: Matrix, train: bool) -> Matrix:
        if x.shape[1] != self.in_dim:
            raise ValidationError(
                f"{self.name}: expected {self.in_dim} input features, got {x.shape[1]}"
            )
        self._input = x if train else None
        out = x @ self.weights.T
        if self.bias is not None:
            out += self.bias
        return out

    def backward(self, upstream: Matrix) -> Matrix:
        if self._input is None:
            raise ValidationError(f"{self.name}: backward without a cached training forward")
        if upstream.shape != (self._input.shape[0], self.out_dim):
            raise ValidationError(f"{self.name}: upstream shape {upstream.shape} mismatch")
        self.grad_weights += upstream.T @ self._input
        if self.grad_bias is not None:
            self.grad_bias += upstream.sum(axis=0)
        din = upstream @ self.weights
        self._input = None
        return din

    def parameters(self, prefix: str = "") -> list[Parameter]:
        p = f"{prefix}{self.name}"
        params = [Parameter(f"{p}.weights", self.weights, self.grad_weights)]
        if self.bias is not None:
            params.append(Parameter(f"{p}.bias", self.bias, self.grad_bias))
        return params


class BatchNormLayer:
    """Per-feature batch normalization with learnable scale/shift.

    Train mode normalizes by batch statistics (biased variance) and updates
    the running statistics as running <- (1-momentum)*running + momentum*batch.
    Infer mode normalizes by the running statistics and mutates nothing.
    """

    def __init__(self, dim: int, momentum: float = 0.1, epsilon: float = 1e-5, name: str = "norm"):
        if not 0.0 < momentum < 1.0:
            raise ValidationError(f"{name}: momentum must be in (0,1)")
        if epsilon <= 0.0:
            raise ValidationError(f"{name}: epsilon must be positive")
        self.name = name
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = np.ones(dim)
        self.beta_shift = np.zeros(dim)
        self.grad_gamma = np.zeros(dim)
        self.grad_beta_shift = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self._cache: tuple | None = None

    def forward(self, x: Matrix, train: bool) -> Matrix:
        if train:
            if x.shape[0] < 2:
                raise ValidationError(
                    f"{self.name}: train-mode batch norm needs batch size >= 2, got {x.shape[0]}"
                )
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.epsilon)
            x_hat = (x - mean) * inv_std
            self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * var
            self._cache = (x_hat, inv_std)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.epsilon)
            x_hat = (x - self.running_mean) * inv_std
            self._cache = None
        return self.gamma * x_hat + self.beta_shift

    def backward(self, upstream: Matrix) -> Matrix:
        if self._cache is None:
            raise ValidationError(f"{self.name}: backward without a cached training forward")
        x_hat, inv_std = self._cache
        n = x_hat.shape[0]
        self.grad_gamma += np.sum(upstream * x_hat, axis=0)
        self.grad_beta_shift += np.sum(upstream, axis=0)
        d_hat = upstream * self.gamma
        # d/dx of (x - mean)/std going through mean and variance
        din = (inv_std / n) * (
            n * d_hat - d_hat.sum(axis=0) - x_hat * np.sum(d_hat * x_hat, axis=0)
        )
        self._cache = None
        return din

    def parameters(self, prefix: str = "") -> list[Parameter]:
        p = f"{prefix}{self.name}"
        return [
            Parameter(f"{p}.gamma", self.gamma, self.grad_gamma),
            Parameter(f"{p}.beta_shift", self.beta_shift, self.grad_beta_shift),
        ]

    def state(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        p = f"{prefix}{self.name}"
        return [(f"{p}.running_mean", self.running_mean), (f"{p}.running_var", self.running_var)]


class FcBlock:
    """linear -> optional batch norm -> activation, with a consumable cache.

    The cache exists only between a train-mode forward and the backward that
    consumes it; infer-mode forwards clear it and mutate nothing but it.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        activation: ActivationKind,
        rng: RngState,
        batch_norm: bool = True,
        name: str = "fc",
    ):
        self.name = name
        self.linear = LinearLayer(in_dim, out_dim, rng, name="linear", use_bias=not batch_norm)
        self.norm = BatchNormLayer(out_dim, name="norm") if batch_norm else None
        self.activation = activation
        self._out: Matrix | None = None

    def forward(self, batch: Matrix, train: bool) -> Matrix:
        z = self.linear.forward(batch, train)
        if self.norm is not None:
            z = self.norm.forward(z, train)
        out = apply_activation(self.activation, z)
        self._out = out if train else None
        return out

    def backward(self, upstream: Matrix) -> Matrix:
        """Gradient through the activation, norm, and linear parts."""
        if self._out is None:
            raise ValidationError(f"{self.name}: backward without a cached training forward")
        if upstream.shape != self._out.shape:
            raise ValidationError(
                f"{self.name}: upstream shape {upstream.shape} != output shape {self._out.shape}"
            )
        d = activation_backward(self.activation, upstream, self._out)
        self._out = None
        if self.norm is not None:
            d = self.norm.backward(d)
        return self.linear.backward(d)

    def backward_from_preact(self, d_preact: Matrix) -> Matrix:
        """Backward given gradients w.r.t. the pre-activation (fused loss path)."""
        if self._out is None:
            raise ValidationError(f"{self.name}: backward without a cached training forward")
        self._out = None
        d = d_preact
        if self.norm is not None:
            d = self.norm.backward(d)
        return self.linear.backward(d)

    def parameters(self, prefix: str = "") -> list[Parameter]:
        p = f"{prefix}{self.name}."
        params = self.linear.parameters(p)
        if self.norm is not None:
            params += self.norm.parameters(p)
        return params

    def state(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        if self.norm is None:
            return []
        return self.norm.state(f"{prefix}{self.name}.")

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad[:] = 0.0


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: int
    entries_checked: int

    def __str__(self) -> str:  # pragma: no cover
        return (
            f"max relative error {self.max_rel_error:.3e} at {self.worst_param}[{self.worst_index}] "
            f"({self.entries_checked} entries)"
        )


def gradient_check(
    module,
    loss_fn,
    batch,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    max_entries_per_param: int = 64,
    seed: int = 0,
) -> GradCheckResult:
    """Compare analytic gradients of `loss_fn` against central differences.

    `module` must expose `parameters()` and `zero_grad()`; `loss_fn(module,
    batch)` must return a scalar loss and populate the gradient buffers (it
    is called repeatedly, so it must be deterministic: fixed batch, fixed
    noise). Large tensors are sub-sampled. The relative error reported is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
    """
    module.zero_grad()
    base = float(loss_fn(module, batch))
    if not np.isfinite(base):
        raise NumericError("gradient_check: loss is not finite")
    params = module.parameters()
    analytic = [p.grad.copy() for p in params]

    picker = np.random.Generator(np.random.PCG64(seed))
    worst = GradCheckResult(0.0, "", -1, 0)
    for p, a in zip(params, analytic):
        flat_value = p.value.reshape(-1)
        flat_analytic = a.reshape(-1)
        n = flat_value.size
        if n <= max_entries_per_param:
            indices = np.arange(n)
        else:
            indices = np.sort(picker.choice(n, size=max_entries_per_param, replace=False))
        for idx in indices:
            original = flat_value[idx]
            flat_value[idx] = original + step
            loss_plus = float(loss_fn(module, batch))
            flat_value[idx] = original - step
            loss_minus = float(loss_fn(module, batch))
            flat_value[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            rel = abs(flat_analytic[idx] - numeric) / max(
                abs(flat_analytic[idx]), abs(numeric), 1e-12
            )
            worst.entries_checked += 1
            if rel > worst.max_rel_error:
                worst.max_rel_error = rel
                worst.worst_param = p.name
                worst.worst_index = int(idx)
    module.zero_grad()
    check_finite(np.array([worst.max_rel_error]), "gradient_check result")
    return worst
