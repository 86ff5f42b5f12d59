"""
Tests for BFLOW1 grid files
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from parsers.grid_file import (
    GridFormatError,
    decode_grid,
    encode_grid,
    encode_points,
    read_grid,
    write_grid,
    write_points,
)

EXTENT = (-1.0, 1.0, -0.5, 0.5)


class TestGridFiles:
    def test_write_and_read_real(self):
        """Test a real grid keeps values, orientation and header"""
        array = np.arange(12, dtype=float).reshape(3, 4)

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "density.bflow"
            header = write_grid(path, array, "density", EXTENT)
            loaded, read_header = read_grid(path)

        assert np.array_equal(loaded, array)
        assert read_header == header
        assert (header.nx, header.ny) == (4, 3)
        assert header.dtype == "f64le"
        assert header.extent == EXTENT

    def test_write_and_read_complex(self):
        """Test complex fields are stored as interleaved c128le"""
        array = np.exp(1j * np.linspace(0, 3, 8)).reshape(2, 4)

        loaded, header = decode_grid(encode_grid(array, "psi_E", EXTENT))
        assert header.dtype == "c128le"
        assert np.array_equal(loaded, array)

    def test_header_layout(self):
        """Test the header is line oriented and closed by a blank line"""
        data = encode_grid(np.zeros((2, 2)), "potential", EXTENT)

        text = data[: data.find(b"\n\n")].decode("ascii").split("\n")
        assert text[0] == "BFLOW1"
        assert text[1] == "name potential"
        assert text[2] == "shape 2 2"
        assert text[-1] == "bytes 32"
        assert len(data) == data.find(b"\n\n") + 2 + 32

    def test_nan_values_survive(self):
        """Test non-finite values are stored verbatim"""
        array = np.array([[np.nan, 1.0], [np.inf, -2.0]])

        loaded, _ = decode_grid(encode_grid(array, "retention", EXTENT))
        assert np.isnan(loaded[0, 0])
        assert np.isinf(loaded[1, 0])

    def test_points_file(self):
        """Test point sets are stored as three columns with a data extent"""
        points = np.array([[0.0, 1.0, 0], [2.0, -1.0, 1], [np.nan, np.nan, 1]])

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "manifold.bflow"
            header = write_points(path, points, "manifold_n3")
            loaded, _ = read_grid(path)

        assert (header.nx, header.ny) == (3, 3)
        assert header.extent == (0.0, 2.0, -1.0, 1.0)
        assert np.array_equal(loaded[:2], points[:2])


class TestGridFileErrors:
    @pytest.fixture
    def valid(self):
        return encode_grid(np.ones((2, 3)), "density", EXTENT)

    def test_bad_magic(self, valid):
        """Test files must start with the format tag"""
        with pytest.raises(GridFormatError, match="magic"):
            decode_grid(b"BFLOW2" + valid[6:])

    def test_truncated_payload(self, valid):
        """Test short payloads are reported"""
        with pytest.raises(GridFormatError, match="Truncated"):
            decode_grid(valid[:-8])

    def test_trailing_data(self, valid):
        """Test extra bytes after the payload are reported"""
        with pytest.raises(GridFormatError, match="Trailing"):
            decode_grid(valid + b"\x00")

    def test_bytes_mismatch(self, valid):
        """Test the declared size must match shape and dtype"""
        with pytest.raises(GridFormatError, match="Declared"):
            decode_grid(valid.replace(b"bytes 48", b"bytes 40"))

    def test_unknown_dtype(self, valid):
        """Test unknown dtype tags are rejected"""
        with pytest.raises(GridFormatError, match="dtype"):
            decode_grid(valid.replace(b"f64le", b"f32le"))

    def test_missing_terminator(self):
        """Test headers need a closing blank line"""
        with pytest.raises(GridFormatError):
            decode_grid(b"BFLOW1\nname x\n")

    def test_invalid_inputs(self):
        """Test names, dimensions and empty arrays are validated on write"""
        with pytest.raises(GridFormatError):
            encode_grid(np.zeros((2, 2)), "two words", EXTENT)
        with pytest.raises(GridFormatError):
            encode_grid(np.zeros(4), "flat", EXTENT)
        with pytest.raises(GridFormatError):
            encode_grid(np.zeros((0, 3)), "empty", EXTENT)
        with pytest.raises(GridFormatError):
            encode_points(np.zeros((4, 2)), "points")

    def test_missing_file(self):
        """Test unreadable paths raise a format error"""
        with pytest.raises(GridFormatError):
            read_grid("/nonexistent/density.bflow")
