import numpy as np
import pytest

from compstyle.serial import read_tensor, write_pgm, write_tensor


def test_tensor_roundtrip_bitexact(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 4, 5)).astype(np.float32)
    p = tmp_path / "t.cstn"
    write_tensor(p, a)
    b = read_tensor(p)
    assert b.dtype == np.float32
    np.testing.assert_array_equal(a, b)
    # write -> read -> write is byte-identical
    p2 = tmp_path / "t2.cstn"
    write_tensor(p2, b)
    assert p.read_bytes() == p2.read_bytes()


def test_header_layout(tmp_path):
    a = np.zeros((2, 3), dtype=np.float32)
    p = tmp_path / "t.cstn"
    write_tensor(p, a)
    raw = p.read_bytes()
    assert raw[:4] == b"CSTN"
    assert raw[4] == 1  # version
    assert raw[5] == 0  # float32
    assert raw[6] == 2  # rank
    assert int.from_bytes(raw[7:11], "little") == 2
    assert int.from_bytes(raw[11:15], "little") == 3
    assert len(raw) == 15 + 2 * 3 * 4


def test_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.cstn"
    p.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(ValueError):
        read_tensor(p)


def test_pgm_preview(tmp_path):
    img = np.linspace(0, 1, 16).reshape(4, 4)
    p = tmp_path / "img.pgm"
    write_pgm(p, img)
    raw = p.read_bytes()
    assert raw.startswith(b"P5\n4 4\n255\n")
    assert raw[-16:][0] == 0 and raw[-1] == 255
