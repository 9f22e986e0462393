"""Conventional and r-dilated two-dimensional convolution over (time, frequency) feature maps.

The operator is the literal dilated convolution

    out(p) = sum_t F(p - r * t) K(t) + bias,    t in [-m, m] x [-m, m],

summed over the input channels, i.e. a true convolution (the kernel index is negated with respect to a
cross-correlation). The stride is always 1 and both spatial axes are zero padded by ``r * m`` on each side, so
the output has the same time and frequency size as the input. With ``r = 1`` the operator is the conventional
convolution.
"""

from dataclasses import dataclass
from typing import Optional

import numpy

from dcrnn_sed.common.exceptions import InputValidationError
from dcrnn_sed.nn.tensor import Tensor, as_tensor


@dataclass(frozen=True)
class DilatedConvSpec:
    """Geometry of one convolution layer."""

    in_channels: int
    out_channels: int
    kernel_time: int = 3
    kernel_freq: int = 3
    dilation_time: int = 1
    dilation_freq: int = 1
    stride: int = 1

    def __post_init__(self):
        for name in ("kernel_time", "kernel_freq"):
            value = getattr(self, name)
            if value < 1 or value % 2 == 0:
                raise InputValidationError(f"`{name}` must be an odd positive integer, got {value}")
        for name in ("dilation_time", "dilation_freq", "in_channels", "out_channels"):
            value = getattr(self, name)
            if value < 1:
                raise InputValidationError(f"`{name}` must be a positive integer, got {value}")
        if self.stride != 1:
            raise InputValidationError(f"only stride 1 is supported, got {self.stride}")

    @property
    def weight_shape(self) -> tuple:
        return (self.out_channels, self.in_channels, self.kernel_time, self.kernel_freq)

    @property
    def padding(self) -> tuple:
        """Zero padding ``(r * m)`` applied on each side of the time and frequency axes."""
        return (
            self.dilation_time * (self.kernel_time // 2),
            self.dilation_freq * (self.kernel_freq // 2),
        )

    def with_dilation(self, dilation_time: int, dilation_freq: int) -> "DilatedConvSpec":
        return DilatedConvSpec(
            self.in_channels,
            self.out_channels,
            self.kernel_time,
            self.kernel_freq,
            dilation_time,
            dilation_freq,
        )


_AXIS_NAMES = ("output channel", "input channel", "kernel time", "kernel frequency")


def _validate(input: Tensor, spec: DilatedConvSpec, weights: Tensor, bias: Optional[Tensor]):
    if input.ndim != 4:
        raise InputValidationError(
            f"input must have 4 dimensions (batch, channel, time, frequency), got shape {input.shape}"
        )
    if input.shape[1] != spec.in_channels:
        raise InputValidationError(
            f"input channel dimension (axis 1) is {input.shape[1]}, expected {spec.in_channels}"
        )
    if weights.shape != spec.weight_shape:
        if weights.ndim != 4:
            raise InputValidationError(f"weights must have 4 dimensions, got shape {weights.shape}")
        for axis, (got, expected) in enumerate(zip(weights.shape, spec.weight_shape)):
            if got != expected:
                raise InputValidationError(
                    f"weights {_AXIS_NAMES[axis]} dimension (axis {axis}) is {got}, expected {expected}"
                )
    if bias is not None and bias.shape != (spec.out_channels,):
        raise InputValidationError(f"bias must have shape ({spec.out_channels},), got {bias.shape}")


def _tap_offsets(spec: DilatedConvSpec):
    """Yield ``(i, j, start_time, start_freq)`` for every kernel tap.

    Tap ``i`` corresponds to ``t = i - m``; in padded coordinates ``F(p - r * t)`` sits at ``p + r * (2m - i)``.
    """
    for i in range(spec.kernel_time):
        start_time = spec.dilation_time * (spec.kernel_time - 1 - i)
        for j in range(spec.kernel_freq):
            start_freq = spec.dilation_freq * (spec.kernel_freq - 1 - j)
            yield i, j, start_time, start_freq


def dilated_conv2d(input, spec: DilatedConvSpec, weights, bias=None) -> Tensor:
    """Apply an r-dilated convolution to ``input`` of shape ``(batch, in_channels, time, freq)``.

    :param input: feature maps of shape ``(batch, in_channels, time, freq)``.
    :param spec: layer geometry; ``weights`` must have shape ``spec.weight_shape``.
    :param weights: kernel of shape ``(out_channels, in_channels, kernel_time, kernel_freq)``.
    :param bias: optional per-output-channel bias.
    :return: feature maps of shape ``(batch, out_channels, time, freq)``.
    """
    input, weights = as_tensor(input), as_tensor(weights)
    bias = as_tensor(bias) if bias is not None else None
    _validate(input, spec, weights, bias)

    n_batch, _, n_time, n_freq = input.shape
    pad_time, pad_freq = spec.padding
    padded = numpy.pad(input.data, ((0, 0), (0, 0), (pad_time, pad_time), (pad_freq, pad_freq)))
    kernel = weights.data

    # Accumulated as (batch, time, freq, out_channels) so every tap is a single BLAS contraction.
    out = numpy.zeros((n_batch, n_time, n_freq, spec.out_channels), dtype=padded.dtype)
    for i, j, start_time, start_freq in _tap_offsets(spec):
        window = padded[:, :, start_time : start_time + n_time, start_freq : start_freq + n_freq]
        out += numpy.tensordot(window, kernel[:, :, i, j], axes=([1], [1]))
    if bias is not None:
        out += bias.data
    result = numpy.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(grad):
        grad_last = grad.transpose(0, 2, 3, 1)
        grad_padded = numpy.zeros(
            (n_batch, n_time + 2 * pad_time, n_freq + 2 * pad_freq, spec.in_channels), dtype=grad.dtype
        )
        grad_kernel = numpy.zeros_like(kernel)
        for i, j, start_time, start_freq in _tap_offsets(spec):
            if weights.requires_grad:
                window = padded[:, :, start_time : start_time + n_time, start_freq : start_freq + n_freq]
                grad_kernel[:, :, i, j] = numpy.tensordot(grad_last, window, axes=([0, 1, 2], [0, 2, 3]))
            if input.requires_grad:
                grad_padded[:, start_time : start_time + n_time, start_freq : start_freq + n_freq] += (
                    numpy.tensordot(grad_last, kernel[:, :, i, j], axes=([3], [0]))
                )
        grad_input = None
        if input.requires_grad:
            grad_input = numpy.ascontiguousarray(
                grad_padded[:, pad_time : pad_time + n_time, pad_freq : pad_freq + n_freq].transpose(0, 3, 1, 2)
            )
        grads = [grad_input, grad_kernel if weights.requires_grad else None]
        if bias is not None:
            grads.append(grad.sum(axis=(0, 2, 3)))
        return grads

    parents = (input, weights) if bias is None else (input, weights, bias)
    return Tensor.from_op(result, parents, backward)


def conv2d(input, spec: DilatedConvSpec, weights, bias=None) -> Tensor:
    """Conventional convolution: ``dilated_conv2d`` with both dilation rates fixed to 1."""
    if (spec.dilation_time, spec.dilation_freq) != (1, 1):
        spec = spec.with_dilation(1, 1)
    return dilated_conv2d(input, spec, weights, bias)


def zero_upsample_kernel(kernel: numpy.ndarray, dilation_time: int, dilation_freq: int) -> numpy.ndarray:
    """Return the "a trous" kernel: ``dilation - 1`` zeros inserted between the taps of ``kernel``.

    A conventional convolution with the returned kernel equals the dilated convolution with ``kernel``.
    """
    out_channels, in_channels, kernel_time, kernel_freq = kernel.shape
    upsampled = numpy.zeros(
        (
            out_channels,
            in_channels,
            (kernel_time - 1) * dilation_time + 1,
            (kernel_freq - 1) * dilation_freq + 1,
        ),
        dtype=kernel.dtype,
    )
    upsampled[:, :, ::dilation_time, ::dilation_freq] = kernel
    return upsampled
