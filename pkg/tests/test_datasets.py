import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from osdr.datagen import Stream, TreeNetworkSpec, gen_tree_network
from osdr.datasets import (
    MAGIC,
    DatasetFormatError,
    load,
    read_binary,
    read_csv,
    read_labeled_vectors,
    write_binary,
    write_csv,
)

finite = st.floats(-1e300, 1e300, allow_nan=False)


def random_stream(rng, N=20, D=4, masked=True):
    masks = rng.random((N, D)) < 0.7 if masked else None
    return Stream(rng.standard_normal((N, D)) * 10.0 ** rng.integers(-5, 5, (N, D)),
                  rng.standard_normal(N), masks)


def assert_same(a, b):
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    if a.masks is None:
        assert b.masks is None
    else:
        assert np.array_equal(a.masks, b.masks)


class TestRoundTrip:
    @pytest.mark.parametrize("masked", [True, False])
    def test_csv_exact(self, tmp_path, rng, masked):
        stream = random_stream(rng, masked=masked)
        write_csv(tmp_path / "s.csv", stream)
        assert_same(stream, read_csv(tmp_path / "s.csv"))

    @pytest.mark.parametrize("masked", [True, False])
    def test_binary_exact(self, tmp_path, rng, masked):
        stream = random_stream(rng, masked=masked)
        write_binary(tmp_path / "s.bin", stream)
        assert_same(stream, read_binary(tmp_path / "s.bin"))

    @given(hnp.arrays(np.float64, (3, 2), elements=finite), hnp.arrays(np.float64, 3, elements=finite))
    def test_csv_any_finite_value(self, tmp_path_factory, X, y):
        path = tmp_path_factory.mktemp("rt") / "s.csv"
        write_csv(path, Stream(X, y))
        assert_same(Stream(X, y), read_csv(path))

    def test_pair_stream_csv(self, tmp_path):
        stream = gen_tree_network(TreeNetworkSpec(D=6, N=30), seed=0)
        write_csv(tmp_path / "p.csv", stream)
        back = read_csv(tmp_path / "p.csv")
        assert_same(stream, back)
        assert np.array_equal(back.X2, stream.X2) and np.array_equal(back.masks2, stream.masks2)

    def test_binary_rejects_pairs(self, tmp_path):
        with pytest.raises(ValueError):
            write_binary(tmp_path / "p.bin", gen_tree_network(TreeNetworkSpec(D=6, N=5), seed=0))

    def test_binary_layout(self, tmp_path):
        write_binary(tmp_path / "s.bin", Stream(np.array([[1.5, -2.0]]), np.array([3.0]),
                                                np.array([[True, False]])))
        data = (tmp_path / "s.bin").read_bytes()
        assert data[:5] == MAGIC
        assert struct.unpack_from("<II", data, 5) == (2, 1)
        assert struct.unpack_from("<5d", data, 13) == (3.0, 1.0, 0.0, 1.5, -2.0)

    def test_csv_text(self, tmp_path):
        write_csv(tmp_path / "s.csv", Stream(np.array([[0.1, 2.0]]), np.array([1.0]), np.array([[False, True]])))
        assert (tmp_path / "s.csv").read_text() == "y,mask,x1,x2\n1,01,0.10000000000000001,2\n"


class TestLabeledVectors:
    def test_empty_cells_are_unobserved(self, tmp_path):
        (tmp_path / "v.csv").write_text("y,x1,x2,x3\n1,0.5,,2\n0,1,nan,3\n1,1,2,3\n")
        stream = read_labeled_vectors(tmp_path / "v.csv")
        assert np.array_equal(stream.y, [1.0, 0.0, 1.0])
        assert np.array_equal(stream.masks, [[True, False, True], [True, False, True], [True, True, True]])
        assert np.array_equal(stream.X[0], [0.5, 0.0, 2.0])

    def test_fully_observed_has_no_mask(self, tmp_path):
        (tmp_path / "v.csv").write_text("y,x1,x2\n1,0.5,1\n")
        assert read_labeled_vectors(tmp_path / "v.csv").masks is None

    @pytest.mark.parametrize("text", ["", "label,x1\n1,2\n", "y,x1,x3\n1,2,3\n", "y,x1\n1,2,3\n",
                                      "y,x1\n,2\n", "y,x1\n1,abc\n"])
    def test_errors(self, tmp_path, text):
        (tmp_path / "v.csv").write_text(text)
        with pytest.raises(DatasetFormatError):
            read_labeled_vectors(tmp_path / "v.csv")


class TestLoad:
    def test_dispatch(self, tmp_path, rng):
        stream = random_stream(rng)
        write_csv(tmp_path / "a.csv", stream)
        write_binary(tmp_path / "a.bin", stream)
        (tmp_path / "v.csv").write_text("y,x1\n1,2\n")
        assert_same(stream, load(tmp_path / "a.csv"))
        assert_same(stream, load(tmp_path / "a.bin"))
        assert load(tmp_path / "v.csv").X.shape == (1, 1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load(tmp_path / "nope.csv")


class TestMalformed:
    @pytest.mark.parametrize("text", ["x,mask,x1\n", "y,mask,x1\n1,1\n", "y,mask,x1\n1,2,3\n",
                                      "y,mask,x1,x2\n1,1,3,4\n", "y,mask,x1\n1,1,abc\n"])
    def test_csv(self, tmp_path, text):
        (tmp_path / "s.csv").write_text(text)
        with pytest.raises(DatasetFormatError):
            read_csv(tmp_path / "s.csv")

    def test_csv_error_names_line(self, tmp_path):
        (tmp_path / "s.csv").write_text("y,mask,x1\n1,1,2\n1,1\n")
        with pytest.raises(DatasetFormatError, match=":3:"):
            read_csv(tmp_path / "s.csv")

    @pytest.mark.parametrize("data", [b"OSD", b"XXXXX" + struct.pack("<II", 1, 0),
                                      MAGIC + struct.pack("<II", 1, 1) + b"\0" * 8])
    def test_binary(self, tmp_path, data):
        (tmp_path / "s.bin").write_bytes(data)
        with pytest.raises(DatasetFormatError):
            read_binary(tmp_path / "s.bin")
