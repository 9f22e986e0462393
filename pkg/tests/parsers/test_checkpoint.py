"""Tests for the binary tensor container in ``dcrnn_sed.parsers.checkpoint``."""

import numpy
import pytest

from dcrnn_sed.common.exceptions import DataError
from dcrnn_sed.models.crnn import build_crnn
from dcrnn_sed.parsers.checkpoint import (
    CHECKPOINT_MAGIC,
    FEATURE_MAGIC,
    dump_records,
    parse_records,
    read_checkpoint,
    read_feature_matrix,
    write_checkpoint,
    write_feature_matrix,
)
from dcrnn_sed.tools.features import FeatureMatrix


def test_byte_layout():
    content = dump_records({"w": numpy.array([1.0, 2.0])})
    assert content[:8] == b"DCRN\x01\x00\x00\x00"
    assert content[8:13] == b"\x01\x00\x00\x00w"
    assert content[13:17] == b"\x01\x00\x00\x00"
    assert content[17:25] == b"\x02" + b"\x00" * 7
    assert numpy.frombuffer(content[25:], dtype="<f8").tolist() == [1.0, 2.0]


def test_model_state_survives_the_file(tmp_path, tiny_config):
    state = build_crnn(tiny_config, seed=4).state_dict()
    write_checkpoint(tmp_path / "model.dcrn", state)
    loaded = read_checkpoint(tmp_path / "model.dcrn")
    assert list(loaded) == list(state)
    for name, value in state.items():
        numpy.testing.assert_array_equal(loaded[name], value)
        assert loaded[name].shape == value.shape


def test_scalar_record():
    assert parse_records(dump_records({"x": numpy.asarray(0.5)}))["x"].shape == ()


def test_wrong_magic():
    content = dump_records({"w": numpy.ones(2)}, magic=FEATURE_MAGIC)
    with pytest.raises(DataError, match="magic"):
        parse_records(content, CHECKPOINT_MAGIC)


def test_unsupported_version():
    content = bytearray(dump_records({"w": numpy.ones(2)}))
    content[4] = 7
    with pytest.raises(DataError, match="version 7"):
        parse_records(bytes(content))


def test_truncated_record():
    content = dump_records({"w": numpy.ones(3)})
    with pytest.raises(DataError, match="truncated"):
        parse_records(content[:-4])


def test_undecodable_record_name():
    content = bytearray(dump_records({"w": numpy.ones(2)}))
    content[12] = 0xFF
    with pytest.raises(DataError, match="UTF-8 at byte 12"):
        parse_records(bytes(content))


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        read_checkpoint(tmp_path / "none.dcrn")


def test_feature_cache(tmp_path, rng):
    features = FeatureMatrix(rng.normal(size=(12, 4)), 0.01, 0.02)
    write_feature_matrix(tmp_path / "x.feat", features)
    assert (tmp_path / "x.feat").read_bytes()[:4] == FEATURE_MAGIC
    loaded = read_feature_matrix(tmp_path / "x.feat")
    numpy.testing.assert_array_equal(loaded.values, features.values)
    assert (loaded.frame_hop_seconds, loaded.frame_len_seconds) == (0.01, 0.02)
