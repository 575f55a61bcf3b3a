import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fuzzycsg.errors import ParseError, SchemaError
from fuzzycsg.formats import (
    occupancy_to_pixels,
    read_dataset,
    read_grid,
    read_history,
    read_pgm,
    write_dataset,
    write_grid,
    write_history,
    write_pgm,
)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
unit = st.floats(0.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(data=st.data(), dim=st.sampled_from([2, 3]), n=st.integers(1, 20))
def test_dataset_round_trip_is_lossless(tmp_path_factory, data, dim, n):
    pts = data.draw(hnp.arrays(np.float64, (n, dim), elements=finite))
    occ = data.draw(hnp.arrays(np.float64, (n,), elements=unit))
    path = tmp_path_factory.mktemp("ds") / "d.csv"
    write_dataset(path, pts, occ)
    p2, o2 = read_dataset(path)
    assert p2.tobytes() == pts.tobytes() and o2.tobytes() == occ.tobytes()


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.mark.parametrize(
    "text, message",
    [
        ("dim=2,count=1\n0.1,0.2,1.2\n", "outside"),
        ("dim=2,count=1\n0.1,0.2,-0.5\n", "outside"),
        ("dim=2,count=2\n0.1,0.2,0.5\n", "declares 2"),
        ("dim=2,count=1\n0.1,0.5\n", "fields"),
        ("dim=4,count=1\n0,0,0,0,0.5\n", "dimension"),
        ("points\n0.1,0.2,0.5\n", "first line"),
        ("dim=2,count=1\n0.1,abc,0.5\n", "non-numeric"),
        ("dim=2,count=1\nnan,0,0.5\n", "finite"),
        ("dim=2,count=0\n", "no rows"),
    ],
)
def test_bad_datasets_rejected(tmp_path, text, message):
    with pytest.raises(SchemaError, match=message) as info:
        read_dataset(_write(tmp_path / "bad.csv", text))
    assert info.value.path == str(tmp_path / "bad.csv")


def test_missing_dataset_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        read_dataset(tmp_path / "nope.csv")


def test_writer_refuses_out_of_range(tmp_path):
    with pytest.raises(SchemaError):
        write_dataset(tmp_path / "x.csv", np.zeros((1, 2)), np.array([1.5]))


@settings(max_examples=30, deadline=None)
@given(shape=hnp.array_shapes(min_dims=2, max_dims=3, min_side=1, max_side=6), data=st.data())
def test_grid_round_trip_is_bit_exact(tmp_path_factory, shape, data):
    values = data.draw(hnp.arrays(np.float64, shape, elements=unit))
    lo = -np.arange(1, len(shape) + 1) / 3.0
    path = tmp_path_factory.mktemp("g") / "g.bin"
    write_grid(path, values, (lo, -lo))
    again, (lo2, hi2) = read_grid(path)
    assert again.tobytes() == values.tobytes() and again.shape == values.shape
    assert lo2.tobytes() == lo.tobytes() and hi2.tobytes() == (-lo).tobytes()


def test_grid_layout_is_row_major_little_endian(tmp_path):
    values = np.arange(6, dtype=np.float64).reshape(2, 3) / 8
    write_grid(tmp_path / "g.bin", values, ([-1, -1], [1, 1]))
    raw = (tmp_path / "g.bin").read_bytes()
    header, body = raw.split(b"\n", 1)
    assert header == b"fuzzycsg-grid dims=2x3 bbox=-1,-1:1,1"
    assert body == values.ravel().astype("<f8").tobytes()


def test_truncated_grid_rejected(tmp_path):
    write_grid(tmp_path / "g.bin", np.zeros((4, 4)), ([-1, -1], [1, 1]))
    raw = (tmp_path / "g.bin").read_bytes()
    (tmp_path / "g.bin").write_bytes(raw[:-3])
    with pytest.raises(SchemaError, match="expected"):
        read_grid(tmp_path / "g.bin")


def test_pixel_mapping():
    occ = np.array([-1.0, 0.0, 0.5, 1 / 255, 0.5 / 255, 1.0, 7.0])
    np.testing.assert_array_equal(occupancy_to_pixels(occ), [0, 0, 128, 1, 1, 255, 255])


@settings(max_examples=200, deadline=None)
@given(o=st.floats(-2, 3))
def test_pixel_is_rounded_scaled_clamp(o):
    expected = int(np.floor(255 * min(max(o, 0.0), 1.0) + 0.5))
    assert occupancy_to_pixels(np.array([o]))[0] == expected


def test_pgm_round_trip_and_header(tmp_path):
    pixels = np.arange(12, dtype=np.uint8).reshape(3, 4)
    write_pgm(tmp_path / "a.pgm", pixels)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n4 3\n255\n")
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), pixels)
    with pytest.raises(SchemaError):
        write_pgm(tmp_path / "b.pgm", pixels.astype(float))


def test_history_round_trip(tmp_path):
    losses = np.random.default_rng(0).uniform(size=50) ** 9
    write_history(tmp_path / "h.csv", losses)
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "iteration,loss"
    assert read_history(tmp_path / "h.csv").tobytes() == losses.tobytes()
    _write(tmp_path / "bad.csv", "step,value\n0,1\n")
    with pytest.raises(SchemaError):
        read_history(tmp_path / "bad.csv")
