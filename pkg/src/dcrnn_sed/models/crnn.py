"""Baseline and dilated convolutional recurrent networks.

A network is a stack of convolutional blocks (convolution, ReLU, max pooling over frequency, batch normalisation,
dropout) followed by a bidirectional LSTM and a per-frame sigmoid output layer. Baseline and dilated networks
differ only in the dilation rates of their convolutions, so they have exactly the same parameters.
"""

import copy
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy

from dcrnn_sed.common.exceptions import DataError, InputValidationError
from dcrnn_sed.nn import (
    BatchNormState,
    BlstmState,
    DilatedConvSpec,
    Tensor,
    batch_norm,
    blstm_forward,
    dense_sigmoid,
    dilated_conv2d,
    dropout,
    max_pool_freq,
    relu,
)


def parse_dilation_schedule(schedule: Union[str, int, Sequence[int]]) -> List[int]:
    """Expand a hyphenated schedule such as ``"2-4-8"`` into per-layer rates ``[2, 4, 8]``."""
    if isinstance(schedule, int):
        rates = [schedule]
    elif isinstance(schedule, str):
        tokens = [token.strip() for token in schedule.strip().split("-")]
        if not schedule.strip() or not all(re.fullmatch("[0-9]+", token) for token in tokens):
            raise InputValidationError(f"invalid dilation schedule `{schedule}`, expected e.g. `2-4-8`")
        rates = [int(token) for token in tokens]
    else:
        rates = [int(rate) for rate in schedule]
    if not rates or any(rate < 1 for rate in rates):
        raise InputValidationError(f"dilation rates must be positive integers, got {schedule!r}")
    return rates


def format_dilation_schedule(rates: Sequence[int]) -> str:
    return "-".join(str(rate) for rate in rates)


def network_name(schedule) -> str:
    """Table name of a schedule, e.g. ``Dilated CRNN3`` for ``2-4-8`` and ``Baseline CRNN3`` for ``1-1-1``."""
    rates = parse_dilation_schedule(schedule)
    kind = "Baseline" if all(rate == 1 for rate in rates) else "Dilated"
    return f"{kind} CRNN{len(rates)}"


@dataclass(frozen=True)
class ConvLayerConfig:
    """One convolutional block; ``pool_freq=None`` selects the default pooling factor."""

    filters: int = 16
    kernel: Tuple[int, int] = (3, 3)
    dilation: Tuple[int, int] = (1, 1)
    pool_freq: Optional[int] = None

    def __post_init__(self):
        if self.filters < 1:
            raise InputValidationError(f"`filters` must be a positive integer, got {self.filters}")
        if any(size < 1 or size % 2 == 0 for size in self.kernel):
            raise InputValidationError(f"kernel sizes must be odd positive integers, got {self.kernel}")
        if any(rate < 1 for rate in self.dilation):
            raise InputValidationError(f"dilation rates must be positive integers, got {self.dilation}")
        if self.pool_freq is not None and self.pool_freq < 1:
            raise InputValidationError(f"`pool_freq` must be a positive integer, got {self.pool_freq}")


@dataclass(frozen=True)
class ModelConfig:
    """Complete architecture of a (dilated) CRNN."""

    n_classes: int
    conv_layers: Tuple[ConvLayerConfig, ...]
    n_mels: int = 40
    blstm_hidden: int = 128
    dropout: float = 0.1
    conv_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "conv_layers", tuple(self.conv_layers))
        if self.n_classes < 1:
            raise InputValidationError(f"`n_classes` must be a positive integer, got {self.n_classes}")
        if not self.conv_layers:
            raise InputValidationError("a CRNN needs at least one convolutional layer")
        if self.n_mels < 1:
            raise InputValidationError(f"`n_mels` must be a positive integer, got {self.n_mels}")
        if self.blstm_hidden < 1:
            raise InputValidationError(f"`blstm_hidden` must be a positive integer, got {self.blstm_hidden}")
        if not 0 <= self.dropout < 1:
            raise InputValidationError(f"`dropout` must lie in [0, 1), got {self.dropout}")

    @classmethod
    def from_schedule(
        cls,
        schedule,
        n_classes: int,
        filters: int = 16,
        kernel: int = 3,
        pool_freq: Optional[Sequence[Optional[int]]] = None,
        **kwargs,
    ) -> "ModelConfig":
        """Build a configuration with one block per rate of ``schedule``, dilated equally along both axes."""
        rates = parse_dilation_schedule(schedule)
        pools = list(pool_freq) if pool_freq is not None else [None] * len(rates)
        if len(pools) != len(rates):
            raise InputValidationError(f"{len(pools)} pooling factors given for {len(rates)} layers")
        layers = [
            ConvLayerConfig(filters, (kernel, kernel), (rate, rate), pool) for rate, pool in zip(rates, pools)
        ]
        return cls(n_classes, layers, **kwargs)

    @property
    def dilation_rates(self) -> List[int]:
        return [layer.dilation[0] for layer in self.conv_layers]

    @property
    def schedule(self) -> str:
        return format_dilation_schedule(self.dilation_rates)

    @property
    def is_baseline(self) -> bool:
        return all(layer.dilation == (1, 1) for layer in self.conv_layers)

    def resolved_pools(self) -> List[int]:
        """Pooling factor of every block: 2 while the frequency width is at least 2, otherwise 1.

        :raises InputValidationError: if an explicit factor exceeds the frequency width left at its layer.
        """
        width, pools = self.n_mels, []
        for index, layer in enumerate(self.conv_layers):
            pool = layer.pool_freq if layer.pool_freq is not None else (2 if width >= 2 else 1)
            if pool > width:
                raise InputValidationError(
                    f"layer {index}: pooling factor {pool} exceeds the remaining frequency width {width}"
                )
            pools.append(pool)
            width = -(-width // pool)
        return pools

    @property
    def output_width(self) -> int:
        width = self.n_mels
        for pool in self.resolved_pools():
            width = -(-width // pool)
        return width


@dataclass
class ConvBlock:
    spec: DilatedConvSpec
    pool: int
    weight: Tensor
    bias: Optional[Tensor]
    gamma: Tensor
    beta: Tensor
    bn_state: BatchNormState


class CRNN:
    """A built network; parameters are ``Tensor`` leaves, batch-norm statistics are buffers."""

    def __init__(self, config: ModelConfig, blocks: List[ConvBlock], blstm: BlstmState, output_weights, output_bias):
        self.config = config
        self.blocks = blocks
        self.blstm = blstm
        self.output_weights = output_weights
        self.output_bias = output_bias
        self.feature_mean = numpy.zeros(config.n_mels)
        self.feature_std = numpy.ones(config.n_mels)

    def set_standardization(self, mean: numpy.ndarray, std: numpy.ndarray) -> None:
        """Set the per-mel-band statistics subtracted from and divided into every input."""
        mean, std = numpy.asarray(mean, dtype=float), numpy.asarray(std, dtype=float)
        if mean.shape != (self.config.n_mels,) or std.shape != (self.config.n_mels,):
            raise InputValidationError(f"standardisation statistics must have shape ({self.config.n_mels},)")
        if (std <= 0).any():
            raise InputValidationError("standard deviations must be positive")
        self.feature_mean, self.feature_std = mean, std

    def _input(self, features) -> Tensor:
        x = numpy.asarray(features, dtype=numpy.float64)
        if x.ndim != 3 or x.shape[2] != self.config.n_mels:
            raise InputValidationError(
                f"input must have shape (batch, time, {self.config.n_mels}), got {x.shape}"
            )
        x = (x - self.feature_mean) / self.feature_std
        return Tensor(x[:, None, :, :])

    def conv_stack(self, features, train: bool = False, rng: Optional[numpy.random.Generator] = None) -> Tensor:
        """Activations of the last convolutional block, shape ``(batch, filters, time, freq')``."""
        x = self._input(features)
        for block in self.blocks:
            x = dilated_conv2d(x, block.spec, block.weight, block.bias)
            x = relu(x)
            x = max_pool_freq(x, block.pool)
            x = batch_norm(x, block.gamma, block.beta, block.bn_state, train)
            x = dropout(x, self.config.dropout, train, rng)
        return x

    def forward(self, features, train: bool = False, rng: Optional[numpy.random.Generator] = None) -> Tensor:
        """Per-frame class probabilities of shape ``(batch, time, n_classes)`` for ``(batch, time, n_mels)`` input."""
        x = self.conv_stack(features, train, rng)
        n_batch, n_channels, n_time, n_freq = x.shape
        x = x.transpose(0, 2, 1, 3).reshape(n_batch, n_time, n_channels * n_freq)
        x = blstm_forward(x, self.blstm)
        return dense_sigmoid(x, self.output_weights, self.output_bias)

    __call__ = forward

    def parameters(self) -> Dict[str, Tensor]:
        params = {}
        for index, block in enumerate(self.blocks):
            params[f"conv{index}.weight"] = block.weight
            if block.bias is not None:
                params[f"conv{index}.bias"] = block.bias
        for index, block in enumerate(self.blocks):
            params[f"bn{index}.gamma"] = block.gamma
            params[f"bn{index}.beta"] = block.beta
        params.update({f"blstm.{name}": tensor for name, tensor in self.blstm.parameters().items()})
        params["output.W"] = self.output_weights
        params["output.b"] = self.output_bias
        return params

    def buffers(self) -> Dict[str, numpy.ndarray]:
        buffers = {}
        for index, block in enumerate(self.blocks):
            buffers[f"bn{index}.running_mean"] = block.bn_state.running_mean
            buffers[f"bn{index}.running_var"] = block.bn_state.running_var
        buffers["feature_mean"] = self.feature_mean
        buffers["feature_std"] = self.feature_std
        return buffers

    def state_dict(self) -> Dict[str, numpy.ndarray]:
        """Copies of every parameter and buffer, keyed by name."""
        state = {name: tensor.data.copy() for name, tensor in self.parameters().items()}
        state.update({name: numpy.array(value, dtype=float) for name, value in self.buffers().items()})
        return state

    def load_state_dict(self, state: Dict[str, numpy.ndarray]) -> None:
        """Overwrite parameters and buffers with the arrays of ``state``, which must match exactly."""
        params, buffers = self.parameters(), self.buffers()
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing, unexpected = sorted(expected - set(state)), sorted(set(state) - expected)
            raise DataError(f"state does not match the model: missing {missing}, unexpected {unexpected}")
        for name, value in state.items():
            current = params[name].data if name in params else buffers[name]
            if numpy.shape(value) != current.shape:
                raise DataError(f"`{name}` has shape {numpy.shape(value)}, expected {current.shape}")
        for name, tensor in params.items():
            tensor.data = numpy.array(state[name], dtype=numpy.float64)
        for index, block in enumerate(self.blocks):
            block.bn_state.running_mean = numpy.array(state[f"bn{index}.running_mean"], dtype=float)
            block.bn_state.running_var = numpy.array(state[f"bn{index}.running_var"], dtype=float)
        self.feature_mean = numpy.array(state["feature_mean"], dtype=float)
        self.feature_std = numpy.array(state["feature_std"], dtype=float)

    def zero_grad(self) -> None:
        for tensor in self.parameters().values():
            tensor.zero_grad()

    def copy(self) -> "CRNN":
        return copy.deepcopy(self)


def _glorot(rng, shape, fan_in, fan_out):
    limit = numpy.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, shape), requires_grad=True)


def build_crnn(config: ModelConfig, seed: int = 0) -> CRNN:
    """Build and initialise the network described by ``config``; initialisation depends on ``seed`` only."""
    pools = config.resolved_pools()
    rng = numpy.random.default_rng(seed)

    blocks, in_channels, width = [], 1, config.n_mels
    for layer, pool in zip(config.conv_layers, pools):
        spec = DilatedConvSpec(
            in_channels, layer.filters, layer.kernel[0], layer.kernel[1], layer.dilation[0], layer.dilation[1]
        )
        taps = layer.kernel[0] * layer.kernel[1]
        weight = _glorot(rng, spec.weight_shape, in_channels * taps, layer.filters * taps)
        bias = Tensor(numpy.zeros(layer.filters), requires_grad=True) if config.conv_bias else None
        blocks.append(
            ConvBlock(
                spec,
                pool,
                weight,
                bias,
                Tensor(numpy.ones(layer.filters), requires_grad=True),
                Tensor(numpy.zeros(layer.filters), requires_grad=True),
                BatchNormState.initial(layer.filters),
            )
        )
        in_channels, width = layer.filters, -(-width // pool)

    blstm = BlstmState.initialize(in_channels * width, config.blstm_hidden, rng)
    output_weights = _glorot(rng, (blstm.output_size, config.n_classes), blstm.output_size, config.n_classes)
    output_bias = Tensor(numpy.zeros(config.n_classes), requires_grad=True)
    return CRNN(config, blocks, blstm, output_weights, output_bias)


def receptive_field(kernel: int, rates: Sequence[int]) -> int:
    """Frames seen by one output of a stride-1 stack: ``1 + sum((kernel - 1) * r)``."""
    if kernel < 1 or kernel % 2 == 0:
        raise InputValidationError(f"`kernel` must be an odd positive integer, got {kernel}")
    if any(rate < 1 for rate in rates):
        raise InputValidationError(f"dilation rates must be positive integers, got {list(rates)}")
    return 1 + sum((kernel - 1) * rate for rate in rates)


def _time_receptive_field(config: ModelConfig) -> int:
    return 1 + sum((layer.kernel[0] - 1) * layer.dilation[0] for layer in config.conv_layers)


def empirical_receptive_field(
    model: Union[CRNN, ModelConfig], frame_index: Optional[int] = None, n_frames: Optional[int] = None
) -> int:
    """Span from the first to the last input frame whose perturbation changes the output at ``frame_index``.

    Dilated stacks leave gaps inside the span; the gaps are counted.

    The measurement runs on a copy of the architecture with positive constant kernels, zero biases and
    identity batch normalisation, fed with a constant input; every frame is raised by 1 in turn.

    :param n_frames: input length in frames, by default twice the theoretical receptive field plus one.
    :param frame_index: output frame to observe, by default the middle frame.
    """
    config = model.config if isinstance(model, CRNN) else model
    n_frames = n_frames or 2 * _time_receptive_field(config) + 1
    frame_index = n_frames // 2 if frame_index is None else frame_index
    if not 0 <= frame_index < n_frames:
        raise InputValidationError(f"`frame_index` {frame_index} outside the {n_frames} input frames")

    network = build_crnn(config)
    for block in network.blocks:
        block.weight.data = numpy.full(block.spec.weight_shape, 1.0 / numpy.prod(block.spec.weight_shape[1:]))
        if block.bias is not None:
            block.bias.data = numpy.zeros_like(block.bias.data)
        block.bn_state = BatchNormState.initial(block.spec.out_channels)

    baseline_input = numpy.ones((1, n_frames, config.n_mels))
    baseline = network.conv_stack(baseline_input).data[0, :, frame_index, :]
    influential = []
    for start in range(0, n_frames, 64):
        frames = numpy.arange(start, min(start + 64, n_frames))
        perturbed = numpy.repeat(baseline_input, frames.size, axis=0)
        perturbed[numpy.arange(frames.size), frames, :] += 1.0
        outputs = network.conv_stack(perturbed).data[:, :, frame_index, :]
        change = numpy.abs(outputs - baseline).reshape(frames.size, -1).max(axis=1)
        influential.extend(frames[change > 1e-9].tolist())
    if not influential:
        return 0
    return max(influential) - min(influential) + 1


@dataclass
class ParamCount:
    """Trainable parameter counts per layer (``conv0``, ``bn0``, ..., ``blstm``, ``output``)."""

    per_layer: Dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.per_layer.values())


def count_params(model: CRNN) -> ParamCount:
    counts = {}
    for name, tensor in model.parameters().items():
        layer = name.split(".", 1)[0]
        counts[layer] = counts.get(layer, 0) + int(tensor.size)
    return ParamCount(counts)
