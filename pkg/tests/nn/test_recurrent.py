"""Tests for the bidirectional LSTM in ``dcrnn_sed.nn.recurrent``."""

import numpy
import pytest

from dcrnn_sed.common.exceptions import InputValidationError
from dcrnn_sed.nn import BlstmState, LstmCellParams, Tensor, blstm_forward
from dcrnn_sed.nn.gradcheck import check_gradients


def zero_cell(input_size, hidden_size):
    return LstmCellParams(
        Tensor(numpy.zeros((input_size, 4 * hidden_size))),
        Tensor(numpy.zeros((hidden_size, 4 * hidden_size))),
        Tensor(numpy.zeros(4 * hidden_size)),
    )


def test_zero_parameters_give_zero_output(rng):
    state = BlstmState(3, zero_cell(2, 3), zero_cell(2, 3))
    out = blstm_forward(rng.normal(size=(2, 5, 2)), state)
    assert out.shape == (2, 5, 6)
    numpy.testing.assert_array_equal(out.data, 0.0)


def test_reversed_input_swaps_the_directions(rng):
    state = BlstmState.initialize(3, 4, rng)
    swapped = BlstmState(4, state.backward, state.forward)
    x = rng.normal(size=(2, 6, 3))
    out = blstm_forward(x, state).data
    reversed_out = blstm_forward(x[:, ::-1], swapped).data
    numpy.testing.assert_allclose(reversed_out[..., :4], out[:, ::-1, 4:], atol=1e-12)
    numpy.testing.assert_allclose(reversed_out[..., 4:], out[:, ::-1, :4], atol=1e-12)


def test_forward_direction_is_causal(rng):
    state = BlstmState.initialize(2, 3, rng)
    x = rng.normal(size=(1, 6, 2))
    changed = x.copy()
    changed[0, 4] += 1.0
    first, second = blstm_forward(x, state).data, blstm_forward(changed, state).data
    numpy.testing.assert_array_equal(first[0, :4, :3], second[0, :4, :3])
    numpy.testing.assert_array_equal(first[0, 5:, 3:], second[0, 5:, 3:])


def test_gradients_through_five_steps(seeded_rng):
    state = BlstmState.initialize(3, 2, seeded_rng)
    x = Tensor(seeded_rng.normal(size=(2, 5, 3)), requires_grad=True)
    weights = seeded_rng.normal(size=(2, 5, 4))
    tensors = [x, *state.parameters().values()]
    assert check_gradients(lambda: (blstm_forward(x, state) * weights).sum(), tensors) < 1e-4


def test_parameter_count_formula(rng):
    n_input, hidden = 7, 5
    state = BlstmState.initialize(n_input, hidden, rng)
    total = sum(tensor.size for tensor in state.parameters().values())
    assert total == 2 * (4 * (n_input * hidden + hidden * hidden + hidden))


def test_forget_gate_bias_is_one(rng):
    cell = LstmCellParams.initialize(3, 2, rng)
    numpy.testing.assert_array_equal(cell.bias.data, [0, 0, 1, 1, 0, 0, 0, 0])


def test_feature_mismatch(rng):
    state = BlstmState.initialize(3, 2, rng)
    with pytest.raises(InputValidationError, match="axis 2"):
        blstm_forward(rng.normal(size=(1, 4, 2)), state)
