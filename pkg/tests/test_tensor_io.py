import struct

import numpy as np
import pytest

from v2vlc.numerics import (
    Tensor,
    TensorFormatError,
    decode_tensor,
    encode_tensor,
    load_checkpoint,
    save_checkpoint,
)


def test_header_layout():
    buf = encode_tensor(np.zeros((2, 3)))
    assert buf[:4] == b"V2VT"
    assert struct.unpack_from("<HH", buf, 4) == (1, 2)
    assert struct.unpack_from("<2I", buf, 8) == (2, 3)
    assert len(buf) == 16 + 6 * 4


def test_roundtrip_is_float32_exact():
    x = np.random.default_rng(0).standard_normal((3, 4, 5))
    back = decode_tensor(encode_tensor(x)).data
    np.testing.assert_array_equal(back, x.astype(np.float32).astype(np.float64))


def test_payload_is_little_endian_row_major():
    x = np.arange(6, dtype=np.float64).reshape(2, 3)
    payload = encode_tensor(x)[16:]
    assert struct.unpack("<6f", payload) == tuple(float(v) for v in range(6))


@pytest.mark.parametrize(
    "buf", [b"XXXX" + bytes(8), b"V2VT" + struct.pack("<HH", 9, 0), encode_tensor(np.ones(3))[:-2]]
)
def test_rejects_malformed(buf):
    with pytest.raises(TensorFormatError):
        decode_tensor(buf)


def test_checkpoint_roundtrip(tmp_path):
    params = {"a.w": Tensor(np.ones((2, 2))), "b": Tensor(np.arange(3.0))}
    save_checkpoint(tmp_path, params, k=5)
    back, meta = load_checkpoint(tmp_path)
    assert meta["k"] == 5
    assert sorted(back) == ["a.w", "b"]
    np.testing.assert_array_equal(back["b"].data, [0.0, 1.0, 2.0])
