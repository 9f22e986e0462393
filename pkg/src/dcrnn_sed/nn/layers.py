"""Layers of the convolutional blocks and of the output stage."""

from dataclasses import dataclass

import numpy
from scipy.special import expit

from dcrnn_sed.common.exceptions import InputValidationError
from dcrnn_sed.nn.tensor import Tensor, as_tensor


def relu(input) -> Tensor:
    """Elementwise ``max(0, x)``; the gradient is the 0/1 mask of positive inputs."""
    input = as_tensor(input)
    mask = input.data > 0
    return Tensor.from_op(numpy.where(mask, input.data, 0.0), (input,), lambda g: (g * mask,))


def max_pool_freq(input, pool: int) -> Tensor:
    """Max pooling of ``(batch, channel, time, freq)`` maps along the frequency axis only.

    The time axis is left untouched. When ``freq`` is not a multiple of ``pool`` the frequency axis is padded
    with ``-inf``, so the output has ``ceil(freq / pool)`` bins.
    """
    input = as_tensor(input)
    if pool < 1:
        raise InputValidationError(f"`pool` must be a positive integer, got {pool}")
    if input.ndim != 4:
        raise InputValidationError(f"input must have 4 dimensions, got shape {input.shape}")
    if pool == 1:
        return input

    n_batch, n_channels, n_time, n_freq = input.shape
    n_out = -(-n_freq // pool)
    padded = numpy.pad(
        input.data, ((0, 0), (0, 0), (0, 0), (0, n_out * pool - n_freq)), constant_values=-numpy.inf
    )
    groups = padded.reshape(n_batch, n_channels, n_time, n_out, pool)
    argmax = groups.argmax(axis=-1)[..., None]
    result = numpy.take_along_axis(groups, argmax, axis=-1)[..., 0]

    def backward(grad):
        routed = numpy.zeros_like(groups)
        numpy.put_along_axis(routed, argmax, grad[..., None], axis=-1)
        return (routed.reshape(n_batch, n_channels, n_time, n_out * pool)[..., :n_freq],)

    return Tensor.from_op(result, (input,), backward)


@dataclass
class BatchNormState:
    """Running statistics of a batch normalisation layer."""

    running_mean: numpy.ndarray
    running_var: numpy.ndarray
    momentum: float = 0.9
    epsilon: float = 1e-5

    @classmethod
    def initial(cls, n_channels: int, **kwargs) -> "BatchNormState":
        return cls(numpy.zeros(n_channels), numpy.ones(n_channels), **kwargs)


def batch_norm(input, gamma, beta, state: BatchNormState, train: bool) -> Tensor:
    """Per-channel batch normalisation of ``(batch, channel, time, freq)`` maps.

    In training mode the batch statistics over ``batch x time x freq`` are used and the running statistics of
    ``state`` are updated in place; in evaluation mode the running statistics are used.
    """
    input, gamma, beta = as_tensor(input), as_tensor(gamma), as_tensor(beta)
    if input.ndim != 4:
        raise InputValidationError(f"input must have 4 dimensions, got shape {input.shape}")
    n_channels = input.shape[1]
    for name, tensor in (("gamma", gamma), ("beta", beta)):
        if tensor.shape != (n_channels,):
            raise InputValidationError(f"`{name}` must have shape ({n_channels},), got {tensor.shape}")

    axes = (0, 2, 3)
    x = input.data
    if train:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        state.running_mean = state.momentum * state.running_mean + (1 - state.momentum) * mean
        state.running_var = state.momentum * state.running_var + (1 - state.momentum) * var
    else:
        mean, var = state.running_mean, state.running_var

    inv_std = 1.0 / numpy.sqrt(var + state.epsilon)
    x_hat = (x - mean[:, None, None]) * inv_std[:, None, None]
    result = gamma.data[:, None, None] * x_hat + beta.data[:, None, None]
    count = x.size // n_channels

    def backward(grad):
        grad_gamma = (grad * x_hat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_x_hat = grad * gamma.data[:, None, None]
        if train:
            grad_input = (inv_std[:, None, None] / count) * (
                count * grad_x_hat
                - grad_x_hat.sum(axis=axes)[:, None, None]
                - x_hat * (grad_x_hat * x_hat).sum(axis=axes)[:, None, None]
            )
        else:
            grad_input = grad_x_hat * inv_std[:, None, None]
        return grad_input, grad_gamma, grad_beta

    return Tensor.from_op(result, (input, gamma, beta), backward)


def dropout(input, rate: float, train: bool, rng: numpy.random.Generator = None) -> Tensor:
    """Inverted dropout: zero each element with probability ``rate`` and scale survivors by ``1 / (1 - rate)``.

    Evaluation mode and ``rate == 0`` are the identity.
    """
    input = as_tensor(input)
    if not 0 <= rate < 1:
        raise InputValidationError(f"dropout `rate` must lie in [0, 1), got {rate}")
    if not train or rate == 0:
        return input
    if rng is None:
        raise InputValidationError("a random generator is required for dropout in training mode")
    mask = (rng.random(input.shape) >= rate) / (1.0 - rate)
    return Tensor.from_op(input.data * mask, (input,), lambda g: (g * mask,))


def dense_sigmoid(input, weights, bias) -> Tensor:
    """Per-frame dense layer with a sigmoid: ``(batch, time, feat) -> (batch, time, classes)`` probabilities."""
    input, weights, bias = as_tensor(input), as_tensor(weights), as_tensor(bias)
    if input.ndim != 3:
        raise InputValidationError(f"input must have 3 dimensions (batch, time, feature), got {input.shape}")
    if weights.ndim != 2 or weights.shape[0] != input.shape[2]:
        raise InputValidationError(
            f"weights feature dimension (axis 0) must be {input.shape[2]}, got shape {weights.shape}"
        )
    if bias.shape != (weights.shape[1],):
        raise InputValidationError(f"bias must have shape ({weights.shape[1]},), got {bias.shape}")

    x = input.data
    probabilities = expit(x @ weights.data + bias.data)

    def backward(grad):
        grad_logits = grad * probabilities * (1.0 - probabilities)
        return (
            grad_logits @ weights.data.T,
            numpy.tensordot(x, grad_logits, axes=([0, 1], [0, 1])),
            grad_logits.sum(axis=(0, 1)),
        )

    return Tensor.from_op(probabilities, (input, weights, bias), backward)
