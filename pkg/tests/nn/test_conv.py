"""Tests for the conventional and dilated convolutions in ``dcrnn_sed.nn.conv``."""

import numpy
import pytest

from dcrnn_sed.common.exceptions import InputValidationError
from dcrnn_sed.nn import DilatedConvSpec, Tensor, conv2d, dilated_conv2d, zero_upsample_kernel
from dcrnn_sed.nn.gradcheck import check_gradients


def brute_force_dilated_conv(features, kernel, bias, rate):
    """Evaluate ``out(p) = sum_t F(p - r t) K(t) + b`` with explicit loops and zero outside the input."""
    n_batch, n_in, n_time, n_freq = features.shape
    n_out, _, kernel_time, kernel_freq = kernel.shape
    half_time, half_freq = kernel_time // 2, kernel_freq // 2
    out = numpy.zeros((n_batch, n_out, n_time, n_freq))
    for b in range(n_batch):
        for o in range(n_out):
            for p in range(n_time):
                for q in range(n_freq):
                    total = bias[o]
                    for c in range(n_in):
                        for i in range(kernel_time):
                            for j in range(kernel_freq):
                                source_time = p - rate * (i - half_time)
                                source_freq = q - rate * (j - half_freq)
                                if 0 <= source_time < n_time and 0 <= source_freq < n_freq:
                                    total += features[b, c, source_time, source_freq] * kernel[o, c, i, j]
                    out[b, o, p, q] = total
    return out


def random_cases(n_cases=100, seed=0):
    """Random shapes up to 2 x 3 x 8 x 8 with rates 1 to 4."""
    generator = numpy.random.default_rng(seed)
    for _ in range(n_cases):
        n_batch, n_in, n_out = generator.integers(1, 3), generator.integers(1, 4), generator.integers(1, 4)
        n_time, n_freq = generator.integers(1, 9, size=2)
        kernel_size = int(generator.choice([1, 3, 3, 3, 5]))
        rate = int(generator.integers(1, 5))
        features = generator.normal(size=(n_batch, n_in, n_time, n_freq))
        kernel = generator.normal(size=(n_out, n_in, kernel_size, kernel_size))
        bias = generator.normal(size=n_out)
        spec = DilatedConvSpec(int(n_in), int(n_out), kernel_size, kernel_size, rate, rate)
        yield spec, features, kernel, bias


def test_dilated_conv_matches_brute_force():
    for spec, features, kernel, bias in random_cases():
        result = dilated_conv2d(features, spec, kernel, bias).data
        expected = brute_force_dilated_conv(features, kernel, bias, spec.dilation_time)
        numpy.testing.assert_allclose(result, expected, rtol=0, atol=1e-10)


def test_dilated_conv_equals_conventional_conv_with_a_trous_kernel():
    for spec, features, kernel, bias in random_cases(seed=1):
        rate = spec.dilation_time
        upsampled = zero_upsample_kernel(kernel, rate, rate)
        conventional = DilatedConvSpec(
            spec.in_channels, spec.out_channels, upsampled.shape[2], upsampled.shape[3]
        )
        numpy.testing.assert_allclose(
            dilated_conv2d(features, spec, kernel, bias).data,
            conv2d(features, conventional, upsampled, bias).data,
            rtol=0,
            atol=1e-10,
        )


def test_zero_upsample_kernel_inserts_zeros():
    kernel = numpy.arange(1.0, 10.0).reshape(1, 1, 3, 3)
    upsampled = zero_upsample_kernel(kernel, 2, 3)
    assert upsampled.shape == (1, 1, 5, 7)
    numpy.testing.assert_array_equal(upsampled[0, 0, ::2, ::3], kernel[0, 0])
    assert numpy.count_nonzero(upsampled) == 9


def test_averaging_kernel_on_constant_input():
    spec = DilatedConvSpec(1, 1)
    result = conv2d(numpy.ones((1, 1, 5, 5)), spec, numpy.full((1, 1, 3, 3), 1 / 9)).data[0, 0]
    numpy.testing.assert_allclose(result[1:-1, 1:-1], 1.0)
    numpy.testing.assert_allclose(result[0, 0], 4 / 9)
    numpy.testing.assert_allclose(result[0, 2], 6 / 9)


def test_output_keeps_time_and_frequency_size(rng):
    spec = DilatedConvSpec(2, 4, dilation_time=8, dilation_freq=8)
    result = dilated_conv2d(rng.normal(size=(3, 2, 11, 7)), spec, rng.normal(size=spec.weight_shape))
    assert result.shape == (3, 4, 11, 7)


def test_linearity(rng):
    spec = DilatedConvSpec(2, 3, dilation_time=2, dilation_freq=3)
    kernel = rng.normal(size=spec.weight_shape)
    first, second = rng.normal(size=(2, 2, 2, 6, 6))
    combined = dilated_conv2d(2.0 * first - 3.0 * second, spec, kernel).data
    separate = 2.0 * dilated_conv2d(first, spec, kernel).data - 3.0 * dilated_conv2d(second, spec, kernel).data
    numpy.testing.assert_allclose(combined, separate, atol=1e-12)


@pytest.mark.parametrize("rate", [1, 2, 3])
def test_gradients(seeded_rng, rate):
    spec = DilatedConvSpec(2, 2, dilation_time=rate, dilation_freq=rate)
    features = Tensor(seeded_rng.normal(size=(2, 2, 5, 4)), requires_grad=True)
    kernel = Tensor(seeded_rng.normal(size=spec.weight_shape), requires_grad=True)
    bias = Tensor(seeded_rng.normal(size=2), requires_grad=True)
    weights = seeded_rng.normal(size=(2, 2, 5, 4))

    def loss():
        return (dilated_conv2d(features, spec, kernel, bias) * weights).sum()

    assert check_gradients(loss, [features, kernel, bias]) < 1e-4


def test_channel_mismatch_names_the_axis(rng):
    spec = DilatedConvSpec(3, 2)
    with pytest.raises(InputValidationError, match="axis 1"):
        dilated_conv2d(rng.normal(size=(1, 2, 4, 4)), spec, rng.normal(size=spec.weight_shape))


def test_weight_mismatch_names_the_axis(rng):
    spec = DilatedConvSpec(1, 2)
    with pytest.raises(InputValidationError, match=r"kernel time dimension \(axis 2\)"):
        dilated_conv2d(rng.normal(size=(1, 1, 4, 4)), spec, rng.normal(size=(2, 1, 5, 3)))


@pytest.mark.parametrize(
    "kwargs",
    [{"kernel_time": 2}, {"dilation_freq": 0}, {"stride": 2}, {"in_channels": 0}],
)
def test_invalid_geometry(kwargs):
    arguments = {"in_channels": 1, "out_channels": 1, **kwargs}
    with pytest.raises(InputValidationError):
        DilatedConvSpec(**arguments)


@pytest.mark.parametrize("rate", [1, 2, 4, 8])
def test_delta_kernel_is_the_identity(rng, rate):
    spec = DilatedConvSpec(1, 1, dilation_time=rate, dilation_freq=rate)
    kernel = numpy.zeros(spec.weight_shape)
    kernel[0, 0, 1, 1] = 1.0
    features = rng.normal(size=(2, 1, 9, 6))
    numpy.testing.assert_array_equal(dilated_conv2d(features, spec, kernel).data, features)


def test_single_pixel_input(rng):
    spec = DilatedConvSpec(1, 1)
    kernel = rng.normal(size=spec.weight_shape)
    result = conv2d(numpy.full((1, 1, 1, 1), 2.5), spec, kernel, numpy.array([0.75])).data
    assert result.shape == (1, 1, 1, 1)
    assert result[0, 0, 0, 0] == pytest.approx(kernel[0, 0, 1, 1] * 2.5 + 0.75)


def test_three_by_one_kernel_sees_three_frames(rng):
    spec = DilatedConvSpec(1, 1, kernel_time=3, kernel_freq=1)
    kernel = rng.uniform(0.5, 1.5, size=spec.weight_shape)
    impulse = numpy.zeros((1, 1, 11, 1))
    impulse[0, 0, 5, 0] = 1.0
    touched = numpy.flatnonzero(conv2d(impulse, spec, kernel).data[0, 0, :, 0])
    numpy.testing.assert_array_equal(touched, [4, 5, 6])


def test_rate_one_is_bit_identical_to_conventional_conv():
    for spec, features, kernel, bias in random_cases(n_cases=20, seed=2):
        rate_one = spec.with_dilation(1, 1)
        numpy.testing.assert_array_equal(
            dilated_conv2d(features, rate_one, kernel, bias).data,
            conv2d(features, spec, kernel, bias).data,
        )
