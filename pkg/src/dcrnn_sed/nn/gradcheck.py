"""Central finite-difference checks of the analytic gradients."""

from typing import Callable, Sequence

import numpy

from dcrnn_sed.nn.tensor import Tensor


def numerical_gradient(func: Callable[[], Tensor], tensor: Tensor, step: float = 1e-5) -> numpy.ndarray:
    """Estimate ``d func() / d tensor`` with central differences, perturbing ``tensor.data`` in place."""
    grad = numpy.zeros_like(tensor.data)
    flat_data = tensor.data.reshape(-1)
    flat_grad = grad.reshape(-1)
    for index in range(flat_data.size):
        original = flat_data[index]
        flat_data[index] = original + step
        upper = func().item()
        flat_data[index] = original - step
        lower = func().item()
        flat_data[index] = original
        flat_grad[index] = (upper - lower) / (2 * step)
    return grad


def relative_error(analytic: numpy.ndarray, numeric: numpy.ndarray, floor: float = 1e-4) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    scale = numpy.maximum(numpy.maximum(numpy.abs(analytic), numpy.abs(numeric)), floor)
    return float(numpy.max(numpy.abs(analytic - numeric) / scale))


def check_gradients(func: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5) -> float:
    """Return the largest relative error between back-propagated and finite-difference gradients.

    :param func: builds the scalar loss from ``tensors``; called repeatedly.
    :param tensors: leaves with ``requires_grad`` whose gradients are checked.
    """
    for tensor in tensors:
        tensor.zero_grad()
    func().backward()
    analytic = [tensor.grad.copy() for tensor in tensors]
    return max(
        relative_error(grad, numerical_gradient(func, tensor, step)) for grad, tensor in zip(analytic, tensors)
    )
