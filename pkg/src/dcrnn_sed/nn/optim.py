"""The Adam optimiser with bias-corrected moment estimates."""

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy

from dcrnn_sed.common.exceptions import InputValidationError
from dcrnn_sed.nn.tensor import Tensor


@dataclass
class AdamState:
    """Optimiser state: step counter and per-parameter moment accumulators."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InputValidationError(f"`learning_rate` must be positive, got {self.learning_rate}")


def adam_step(
    params: Mapping[str, Tensor], grads: Optional[Mapping[str, numpy.ndarray]], state: AdamState
) -> Mapping[str, Tensor]:
    """Apply one Adam update to ``params`` in place and return them.

    :param params: trainable tensors keyed by name.
    :param grads: gradients keyed by the same names; when ``None`` the ``grad`` attribute of each tensor is used.
        Parameters without a gradient are left unchanged.
    :param state: optimiser state, updated in place.
    """
    state.step_count += 1
    correction1 = 1.0 - state.beta1**state.step_count
    correction2 = 1.0 - state.beta2**state.step_count

    for name, param in params.items():
        grad = param.grad if grads is None else grads.get(name)
        if grad is None:
            continue
        if grad.shape != param.shape:
            raise InputValidationError(f"gradient of `{name}` has shape {grad.shape}, expected {param.shape}")
        if name not in state.first_moment:
            state.first_moment[name] = numpy.zeros_like(param.data)
            state.second_moment[name] = numpy.zeros_like(param.data)
        first = state.first_moment[name]
        second = state.second_moment[name]
        first *= state.beta1
        first += (1.0 - state.beta1) * grad
        second *= state.beta2
        second += (1.0 - state.beta2) * grad * grad
        param.data -= (
            state.learning_rate * (first / correction1) / (numpy.sqrt(second / correction2) + state.epsilon)
        )
    return params
