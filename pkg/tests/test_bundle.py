"""MTDB container: golden bytes, round trips, malformed-stream rejection."""

import io
import struct

import numpy as np
import pytest

from chorekit.bundle import (TensorBundle, bundle_from_bytes, bundle_to_bytes,
                             read_bundle, read_bundle_file, write_bundle_file)
from chorekit.errors import FormatError, ValidationError

EMPTY_BYTES = b"MTDB" + struct.pack("<II", 1, 0)


def _hand_rolled_single_entry() -> bytes:
    # Independent writer for {name "x": f32 [1.5, -2.0]} straight off the
    # format description: header then contiguous payload.
    out = b"MTDB"
    out += struct.pack("<II", 1, 1)
    out += struct.pack("<I", 1) + b"x"
    out += struct.pack("<BI", 0, 1)
    out += struct.pack("<Q", 2)
    out += struct.pack("<Q", 8)
    out += struct.pack("<2f", 1.5, -2.0)
    return out


def test_empty_bundle_is_exactly_12_bytes():
    data = bundle_to_bytes(TensorBundle())
    assert data == EMPTY_BYTES
    assert len(data) == 12
    assert len(bundle_from_bytes(data)) == 0


def test_golden_bytes_match_hand_rolled_writer():
    bundle = TensorBundle().add("x", np.array([1.5, -2.0], dtype=np.float32))
    assert bundle_to_bytes(bundle) == _hand_rolled_single_entry()


def test_hand_rolled_bytes_parse_back():
    bundle = bundle_from_bytes(_hand_rolled_single_entry())
    assert list(bundle) == ["x"]
    assert bundle["x"].dtype == np.float32
    assert np.array_equal(bundle["x"], [1.5, -2.0])


def test_round_trip_is_bit_exact_across_dtypes_and_shapes():
    rng = np.random.default_rng(0)
    for trial in range(10):
        bundle = TensorBundle()
        bundle.add("f32", rng.standard_normal((3, 4)).astype(np.float32))
        bundle.add("f64", rng.standard_normal((2, 1, 5)))
        bundle.add("i64", rng.integers(-1000, 1000, size=(7,)))
        bundle.add("scalar", np.float64(3.25 + trial))
        bundle.add("empty", np.zeros((0, 4), dtype=np.float32))
        back = bundle_from_bytes(bundle_to_bytes(bundle))
        assert back == bundle
        assert list(back) == list(bundle)
        for name in bundle:
            assert back[name].dtype == bundle[name].dtype
            assert back[name].shape == bundle[name].shape
            assert back[name].tobytes() == bundle[name].tobytes()


def test_serialization_is_deterministic():
    def build():
        return (TensorBundle()
                .add("a", np.arange(6, dtype=np.int64).reshape(2, 3))
                .add("b", np.linspace(0, 1, 5, dtype=np.float32)))

    assert bundle_to_bytes(build()) == bundle_to_bytes(build())


def test_file_round_trip(tmp_path):
    path = tmp_path / "t.mtdb"
    bundle = TensorBundle().add("x", np.arange(4, dtype=np.float64))
    n = write_bundle_file(bundle, path)
    assert path.stat().st_size == n
    assert read_bundle_file(path) == bundle


def test_non_contiguous_input_is_stored_contiguously():
    arr = np.arange(12, dtype=np.float64).reshape(3, 4)[:, ::2]
    bundle = TensorBundle().add("s", arr)
    back = bundle_from_bytes(bundle_to_bytes(bundle))
    assert np.array_equal(back["s"], arr)


def test_add_rejects_unsupported_dtype_and_bad_names():
    with pytest.raises(ValidationError):
        TensorBundle().add("x", np.zeros(3, dtype=np.int32))
    with pytest.raises(ValidationError):
        TensorBundle().add("x", np.zeros(3, dtype=np.float16))
    with pytest.raises(ValidationError):
        TensorBundle().add("", np.zeros(3, dtype=np.float32))
    bundle = TensorBundle().add("x", np.zeros(3, dtype=np.float32))
    with pytest.raises(ValidationError):
        bundle.add("x", np.zeros(3, dtype=np.float32))


def test_missing_entry_names_present_ones():
    bundle = TensorBundle().add("here", np.zeros(1, dtype=np.float32))
    with pytest.raises(KeyError, match="here"):
        bundle["gone"]


def test_bad_magic_rejected():
    data = b"NOPE" + EMPTY_BYTES[4:]
    with pytest.raises(FormatError, match="magic"):
        bundle_from_bytes(data)


def test_unsupported_version_rejected():
    data = b"MTDB" + struct.pack("<II", 2, 0)
    with pytest.raises(FormatError, match="version"):
        bundle_from_bytes(data)


def test_truncation_rejected_at_every_prefix():
    data = _hand_rolled_single_entry()
    for cut in range(len(data)):
        with pytest.raises(FormatError):
            bundle_from_bytes(data[:cut])


def test_trailing_bytes_rejected():
    with pytest.raises(FormatError, match="trailing"):
        bundle_from_bytes(_hand_rolled_single_entry() + b"\x00")


def test_payload_length_mismatch_rejected():
    data = bytearray(_hand_rolled_single_entry())
    # payload_len field sits in the 8 bytes right before the payload.
    struct.pack_into("<Q", data, len(data) - 16, 12)
    with pytest.raises(FormatError, match="payload length"):
        bundle_from_bytes(bytes(data))


def test_unknown_dtype_tag_rejected():
    data = bytearray(_hand_rolled_single_entry())
    # dtype tag byte follows magic(4) + version/count(8) + name_len(4) + name(1).
    data[17] = 9
    with pytest.raises(FormatError, match="dtype tag"):
        bundle_from_bytes(bytes(data))


def test_duplicate_names_in_stream_rejected():
    entry = _hand_rolled_single_entry()
    header, payload = entry[12:-8], entry[-8:]
    data = b"MTDB" + struct.pack("<II", 1, 2) + header + header + payload + payload
    with pytest.raises(FormatError, match="duplicate"):
        read_bundle(io.BytesIO(data))
