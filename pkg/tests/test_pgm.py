import numpy as np
import pytest

from shapereader.pgm import PgmError, read_pgm, write_pgm


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(17, 23), dtype=np.uint8)
    p = tmp_path / "x.pgm"
    write_pgm(p, img)
    back = read_pgm(p)
    assert back.dtype == np.uint8
    assert np.array_equal(back, img)


def test_comments_in_header(tmp_path):
    p = tmp_path / "c.pgm"
    raster = bytes(range(6))
    p.write_bytes(b"P5\n# a comment\n3 2\n# another\n255\n" + raster)
    img = read_pgm(p)
    assert img.shape == (2, 3)
    assert img[1, 2] == 5


def test_clips_out_of_range_on_write(tmp_path):
    p = tmp_path / "w.pgm"
    write_pgm(p, np.array([[-5, 300]], dtype=np.int32))
    assert read_pgm(p).tolist() == [[0, 255]]


@pytest.mark.parametrize(
    "payload",
    [
        b"",
        b"P6\n2 2\n255\n" + b"\0" * 12,
        b"P5\nx y\n255\n",
        b"P5\n0 3\n255\n",
        b"P5\n2 2\n65535\n" + b"\0" * 8,
        b"P5\n4 4\n255\n" + b"\0" * 7,  # short raster
    ],
)
def test_rejects_malformed(tmp_path, payload):
    p = tmp_path / "bad.pgm"
    p.write_bytes(payload)
    with pytest.raises(PgmError):
        read_pgm(p)


def test_write_rejects_non_2d(tmp_path):
    with pytest.raises(PgmError):
        write_pgm(tmp_path / "z.pgm", np.zeros((2, 2, 3)))
