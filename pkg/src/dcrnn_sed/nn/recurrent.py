"""Bidirectional LSTM with back-propagation through time.

Two independent LSTM cells read the sequence left-to-right and right-to-left; their per-frame hidden states are
concatenated, so the output width is twice the hidden size. The gate pre-activations of a cell are laid out as
``[input, forget, output, candidate]`` blocks of ``hidden_size`` columns.
"""

from dataclasses import dataclass

import numpy
from scipy.special import expit

from dcrnn_sed.common.exceptions import InputValidationError
from dcrnn_sed.nn.tensor import Tensor, as_tensor


@dataclass
class LstmCellParams:
    """Weights of one LSTM direction: input ``W (feat, 4h)``, recurrent ``U (h, 4h)`` and bias ``b (4h,)``."""

    input_weights: Tensor
    recurrent_weights: Tensor
    bias: Tensor

    @classmethod
    def initialize(cls, input_size: int, hidden_size: int, rng: numpy.random.Generator) -> "LstmCellParams":
        """Uniform Glorot input weights, uniform ``+-sqrt(1/h)`` recurrent weights, forget-gate bias 1."""
        limit = numpy.sqrt(6.0 / (input_size + 4 * hidden_size))
        input_weights = rng.uniform(-limit, limit, (input_size, 4 * hidden_size))
        limit = numpy.sqrt(1.0 / hidden_size)
        recurrent_weights = rng.uniform(-limit, limit, (hidden_size, 4 * hidden_size))
        bias = numpy.zeros(4 * hidden_size)
        bias[hidden_size : 2 * hidden_size] = 1.0
        return cls(
            Tensor(input_weights, requires_grad=True),
            Tensor(recurrent_weights, requires_grad=True),
            Tensor(bias, requires_grad=True),
        )

    def tensors(self) -> dict:
        return {"W": self.input_weights, "U": self.recurrent_weights, "b": self.bias}


@dataclass
class BlstmState:
    """Parameters of a bidirectional LSTM layer."""

    hidden_size: int
    forward: LstmCellParams
    backward: LstmCellParams

    @property
    def output_size(self) -> int:
        return 2 * self.hidden_size

    @classmethod
    def initialize(cls, input_size: int, hidden_size: int, rng: numpy.random.Generator) -> "BlstmState":
        if input_size < 1 or hidden_size < 1:
            raise InputValidationError(
                f"BLSTM sizes must be positive, got input {input_size} and hidden {hidden_size}"
            )
        return cls(
            hidden_size,
            LstmCellParams.initialize(input_size, hidden_size, rng),
            LstmCellParams.initialize(input_size, hidden_size, rng),
        )

    def parameters(self) -> dict:
        """Return the trainable tensors keyed ``forward.W``, ``forward.U``, ... ``backward.b``."""
        return {
            f"{direction}.{key}": tensor
            for direction, cell in (("forward", self.forward), ("backward", self.backward))
            for key, tensor in cell.tensors().items()
        }


def _run_direction(x, input_weights, recurrent_weights, bias, reverse):
    n_batch, n_time, _ = x.shape
    hidden = recurrent_weights.shape[0]
    projected = x @ input_weights + bias
    steps = range(n_time - 1, -1, -1) if reverse else range(n_time)

    outputs = numpy.zeros((n_batch, n_time, hidden))
    cache = {
        name: numpy.zeros((n_time, n_batch, hidden))
        for name in ("i", "f", "o", "g", "c_prev", "c_tanh", "h_prev")
    }
    h = numpy.zeros((n_batch, hidden))
    c = numpy.zeros((n_batch, hidden))
    for step in steps:
        gates = projected[:, step] + h @ recurrent_weights
        i = expit(gates[:, :hidden])
        f = expit(gates[:, hidden : 2 * hidden])
        o = expit(gates[:, 2 * hidden : 3 * hidden])
        g = numpy.tanh(gates[:, 3 * hidden :])
        cache["c_prev"][step], cache["h_prev"][step] = c, h
        c = f * c + i * g
        c_tanh = numpy.tanh(c)
        h = o * c_tanh
        for name, value in (("i", i), ("f", f), ("o", o), ("g", g), ("c_tanh", c_tanh)):
            cache[name][step] = value
        outputs[:, step] = h
    return outputs, (steps, cache)


def _backprop_direction(grad_outputs, x, input_weights, recurrent_weights, steps, cache):
    n_batch, n_time, _ = x.shape
    hidden = recurrent_weights.shape[0]
    grad_projected = numpy.zeros((n_batch, n_time, 4 * hidden))
    grad_recurrent = numpy.zeros_like(recurrent_weights)
    grad_h_next = numpy.zeros((n_batch, hidden))
    grad_c_next = numpy.zeros((n_batch, hidden))

    for step in reversed(steps):
        i, f, o, g = (cache[name][step] for name in ("i", "f", "o", "g"))
        c_tanh = cache["c_tanh"][step]
        grad_h = grad_outputs[:, step] + grad_h_next
        grad_c = grad_h * o * (1.0 - c_tanh**2) + grad_c_next
        grad_gates = numpy.concatenate(
            [
                grad_c * g * i * (1.0 - i),
                grad_c * cache["c_prev"][step] * f * (1.0 - f),
                grad_h * c_tanh * o * (1.0 - o),
                grad_c * i * (1.0 - g**2),
            ],
            axis=1,
        )
        grad_c_next = grad_c * f
        grad_projected[:, step] = grad_gates
        grad_recurrent += cache["h_prev"][step].T @ grad_gates
        grad_h_next = grad_gates @ recurrent_weights.T

    grad_x = grad_projected @ input_weights.T
    grad_input_weights = numpy.tensordot(x, grad_projected, axes=([0, 1], [0, 1]))
    grad_bias = grad_projected.sum(axis=(0, 1))
    return grad_x, grad_input_weights, grad_recurrent, grad_bias


def blstm_forward(input, state: BlstmState) -> Tensor:
    """Run the bidirectional LSTM over ``input`` of shape ``(batch, time, feat)``.

    :return: tensor of shape ``(batch, time, 2 * hidden)``; the first half holds the left-to-right states,
        the second half the right-to-left states.
    """
    input = as_tensor(input)
    if input.ndim != 3:
        raise InputValidationError(f"input must have 3 dimensions (batch, time, feature), got {input.shape}")
    if input.shape[1] == 0:
        raise InputValidationError("the time dimension (axis 1) of the BLSTM input must not be empty")
    expected = state.forward.input_weights.shape[0]
    if input.shape[2] != expected:
        raise InputValidationError(f"input feature dimension (axis 2) is {input.shape[2]}, expected {expected}")

    x = input.data
    directions = []
    for cell, reverse in ((state.forward, False), (state.backward, True)):
        outputs, (steps, cache) = _run_direction(
            x, cell.input_weights.data, cell.recurrent_weights.data, cell.bias.data, reverse
        )
        directions.append((cell, outputs, steps, cache))
    result = numpy.concatenate([outputs for _, outputs, _, _ in directions], axis=-1)
    hidden = state.hidden_size

    def backward(grad):
        grad_input = numpy.zeros_like(x)
        grads = []
        for index, (cell, _, steps, cache) in enumerate(directions):
            grad_x, grad_w, grad_u, grad_b = _backprop_direction(
                grad[..., index * hidden : (index + 1) * hidden],
                x,
                cell.input_weights.data,
                cell.recurrent_weights.data,
                steps,
                cache,
            )
            grad_input += grad_x
            grads.extend([grad_w, grad_u, grad_b])
        return [grad_input, *grads]

    parents = (input, *state.forward.tensors().values(), *state.backward.tensors().values())
    return Tensor.from_op(result, parents, backward)
