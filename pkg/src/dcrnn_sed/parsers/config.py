"""Human-readable ``key = value`` model configuration files.

Example::

    n_classes = 4
    n_mels = 40
    filters = 16
    kernel = 3
    dilation_rates = 2-4-8
    pool_freq = auto
    blstm_hidden = 128
    dropout = 0.1
    conv_bias = true

``filters``, ``kernel`` and ``pool_freq`` take either one value for every layer or a comma-separated list with one
value per layer; ``auto`` selects the default pooling factor.
"""

from pathlib import Path
import re
from typing import Union

from dcrnn_sed.common.exceptions import DataError, InputValidationError
from dcrnn_sed.models.crnn import ConvLayerConfig, ModelConfig, format_dilation_schedule, parse_dilation_schedule

_LINE = re.compile(r"^\s*([A-Za-z_]+)\s*=\s*(.*?)\s*$")


def _to_bool(value: str) -> bool:
    lowered = value.lower()
    if lowered not in ("true", "false", "yes", "no", "1", "0"):
        raise ValueError(value)
    return lowered in ("true", "yes", "1")


def _to_int_list(value: str) -> list:
    return [int(item) for item in value.split(",")]


def _to_pool_list(value: str) -> list:
    return [None if item.strip().lower() == "auto" else int(item) for item in value.split(",")]


_KEY_TYPES = (
    ("n_classes", int),
    ("n_mels", int),
    ("filters", _to_int_list),
    ("kernel", _to_int_list),
    ("dilation_rates", parse_dilation_schedule),
    ("pool_freq", _to_pool_list),
    ("blstm_hidden", int),
    ("dropout", float),
    ("conv_bias", _to_bool),
)


def _per_layer(values: list, n_layers: int, key: str) -> list:
    if len(values) == 1:
        return values * n_layers
    if len(values) != n_layers:
        raise InputValidationError(f"`{key}` lists {len(values)} values for {n_layers} layers")
    return values


def parse_model_config(file_content: str, source: str = "<string>") -> ModelConfig:
    """Parse the contents of a model configuration file."""
    converters = dict(_KEY_TYPES)
    parsed = {}
    for number, line in enumerate(file_content.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        match = _LINE.match(stripped)
        if not match:
            raise InputValidationError(f"{source}, line {number}: expected `key = value`, got `{line.strip()}`")
        key, value = match.groups()
        if key not in converters:
            raise InputValidationError(f"{source}, line {number}: unknown key `{key}`")
        try:
            parsed[key] = converters[key](value)
        except ValueError as exception:
            raise InputValidationError(f"{source}, line {number}: invalid value `{value}` for `{key}`") from exception

    for required in ("n_classes", "dilation_rates"):
        if required not in parsed:
            raise InputValidationError(f"{source}: the key `{required}` is required")

    rates = parsed.pop("dilation_rates")
    filters = _per_layer(parsed.pop("filters", [16]), len(rates), "filters")
    kernels = _per_layer(parsed.pop("kernel", [3]), len(rates), "kernel")
    pools = _per_layer(parsed.pop("pool_freq", [None]), len(rates), "pool_freq")
    layers = [
        ConvLayerConfig(count, (kernel, kernel), (rate, rate), pool)
        for count, kernel, rate, pool in zip(filters, kernels, rates, pools)
    ]
    return ModelConfig(conv_layers=layers, **parsed)


def _format_list(values: list) -> str:
    if len(set(values)) == 1:
        values = values[:1]
    return ",".join("auto" if value is None else str(value) for value in values)


def format_model_config(config: ModelConfig) -> str:
    """Format ``config``; only square kernels and equal time and frequency dilation rates can be written."""
    for index, layer in enumerate(config.conv_layers):
        if layer.kernel[0] != layer.kernel[1] or layer.dilation[0] != layer.dilation[1]:
            raise InputValidationError(f"layer {index} has a non-square kernel or dilation and cannot be written")
    layers = config.conv_layers
    lines = [
        f"n_classes = {config.n_classes}",
        f"n_mels = {config.n_mels}",
        f"filters = {_format_list([layer.filters for layer in layers])}",
        f"kernel = {_format_list([layer.kernel[0] for layer in layers])}",
        f"dilation_rates = {format_dilation_schedule(config.dilation_rates)}",
        f"pool_freq = {_format_list([layer.pool_freq for layer in layers])}",
        f"blstm_hidden = {config.blstm_hidden}",
        f"dropout = {config.dropout!r}",
        f"conv_bias = {str(config.conv_bias).lower()}",
    ]
    return "\n".join(lines) + "\n"


def read_model_config(path: Union[str, Path]) -> ModelConfig:
    path = Path(path)
    try:
        content = path.read_text()
    except OSError as exception:
        raise DataError(f"cannot read the model configuration `{path}`: {exception}") from exception
    return parse_model_config(content, source=str(path))


def write_model_config(path: Union[str, Path], config: ModelConfig) -> None:
    Path(path).write_text(format_model_config(config))
