"""Reader and writer of the flat binary tensor container.

Layout, all integers little-endian::

    magic (4 bytes)  version (u32)
    repeated until the end of the file:
        name length (u32)  name (UTF-8)  rank (u32)  dims (rank x u64)  values (product(dims) x f8)

Parameter checkpoints use the ``DCRN`` magic, cached feature matrices the ``FEAT`` magic.
"""

from pathlib import Path
import struct
from typing import Mapping, Union

import numpy

from dcrnn_sed.common.exceptions import DataError
from dcrnn_sed.tools.features import FeatureMatrix

CHECKPOINT_MAGIC = b"DCRN"
FEATURE_MAGIC = b"FEAT"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_VALUE_DTYPE = numpy.dtype("<f8")


def dump_records(arrays: Mapping[str, numpy.ndarray], magic: bytes = CHECKPOINT_MAGIC) -> bytes:
    """Serialise named arrays, in mapping order, into the container format."""
    if len(magic) != 4:
        raise ValueError(f"the magic must be 4 bytes long, got {magic!r}")
    chunks = [magic, _U32.pack(FORMAT_VERSION)]
    for name, array in arrays.items():
        array = numpy.asarray(array, dtype=_VALUE_DTYPE)
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(array.ndim))
        chunks.extend(_U64.pack(dim) for dim in array.shape)
        chunks.append(numpy.ascontiguousarray(array).tobytes())
    return b"".join(chunks)


def parse_records(content: bytes, magic: bytes = CHECKPOINT_MAGIC, source: str = "<bytes>") -> dict:
    """Parse the container ``content`` into a dictionary of named ``float64`` arrays.

    :param source: file name used in error messages.
    :raises DataError: on a wrong magic, an unsupported version, an undecodable record name or a truncated record.
    """
    if content[:4] != magic:
        raise DataError(f"{source}: expected magic {magic!r}, found {content[:4]!r}")
    offset = 4

    def take(size):
        nonlocal offset
        if offset + size > len(content):
            raise DataError(f"{source}: truncated record at byte {offset}")
        chunk = content[offset : offset + size]
        offset += size
        return chunk

    (version,) = _U32.unpack(take(4))
    if version != FORMAT_VERSION:
        raise DataError(f"{source}: unsupported format version {version}")

    arrays = {}
    while offset < len(content):
        (name_length,) = _U32.unpack(take(4))
        try:
            name = take(name_length).decode("utf-8")
        except UnicodeDecodeError as exception:
            raise DataError(f"{source}: record name is not valid UTF-8 at byte {offset - name_length}") from exception
        (rank,) = _U32.unpack(take(4))
        shape = tuple(_U64.unpack(take(8))[0] for _ in range(rank))
        count = int(numpy.prod(shape, dtype=numpy.int64))
        values = numpy.frombuffer(take(count * _VALUE_DTYPE.itemsize), dtype=_VALUE_DTYPE)
        arrays[name] = values.astype(numpy.float64).reshape(shape)
    return arrays


def write_checkpoint(path: Union[str, Path], arrays: Mapping[str, numpy.ndarray], magic=CHECKPOINT_MAGIC) -> None:
    Path(path).write_bytes(dump_records(arrays, magic))


def read_checkpoint(path: Union[str, Path], magic=CHECKPOINT_MAGIC) -> dict:
    path = Path(path)
    try:
        content = path.read_bytes()
    except OSError as exception:
        raise DataError(f"cannot read `{path}`: {exception}") from exception
    return parse_records(content, magic, source=str(path))


def write_feature_matrix(path: Union[str, Path], features) -> None:
    """Cache a ``FeatureMatrix`` with the ``FEAT`` magic."""
    write_checkpoint(
        path,
        {
            "values": features.values,
            "frame_hop_seconds": numpy.asarray(features.frame_hop_seconds),
            "frame_len_seconds": numpy.asarray(features.frame_len_seconds),
        },
        magic=FEATURE_MAGIC,
    )


def read_feature_matrix(path: Union[str, Path]):
    """Load a ``FeatureMatrix`` cached by ``write_feature_matrix``."""
    arrays = read_checkpoint(path, magic=FEATURE_MAGIC)
    missing = {"values", "frame_hop_seconds", "frame_len_seconds"} - set(arrays)
    if missing:
        raise DataError(f"{path}: feature cache lacks the records {sorted(missing)}")
    return FeatureMatrix(
        arrays["values"], float(arrays["frame_hop_seconds"]), float(arrays["frame_len_seconds"])
    )
