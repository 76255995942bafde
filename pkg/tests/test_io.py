import hashlib
import struct

import numpy as np
import pytest

from gqmu.errors import FormatError
from gqmu.io import (
    read_btf,
    read_config,
    read_csv_matrix,
    write_btf,
    write_csv_matrix,
    write_heatmap,
)

RNG = np.random.default_rng(83)


class TestBtf:
    def test_round_trip_dims_and_precision(self, tmp_path):
        t = RNG.uniform(0, 1, size=(4, 4, 3))
        path = tmp_path / "t.btf"
        write_btf(path, t)
        back = read_btf(path)
        assert back.shape == (4, 4, 3)
        assert np.max(np.abs(back - t)) <= 1e-6  # 32-bit payload quantization

    def test_band_sequential_layout(self, tmp_path):
        t = np.arange(12, dtype=float).reshape(2, 2, 3)
        path = tmp_path / "t.btf"
        write_btf(path, t)
        blob = path.read_bytes()
        payload = np.frombuffer(blob, dtype="<f4", offset=17)
        # element (l1, l2, k) at offset k*L1*L2 + l1*L2 + l2
        for k in range(3):
            for l1 in range(2):
                for l2 in range(2):
                    assert payload[k * 4 + l1 * 2 + l2] == np.float32(t[l1, l2, k])

    def test_wrong_magic_offset_zero(self, tmp_path):
        path = tmp_path / "bad.btf"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(FormatError, match="offset 0"):
            read_btf(path)

    def test_truncated_payload_reports_lengths(self, tmp_path):
        t = np.ones((2, 2, 2))
        path = tmp_path / "t.btf"
        write_btf(path, t)
        blob = path.read_bytes()
        (tmp_path / "cut.btf").write_bytes(blob[:-5])
        with pytest.raises(FormatError, match="expected 49 bytes total, got 44"):
            read_btf(tmp_path / "cut.btf")

    def test_zero_dim_rejected(self, tmp_path):
        header = b"BTF1" + struct.pack("<B", 3) + struct.pack("<3I", 0, 2, 2)
        path = tmp_path / "zero.btf"
        path.write_bytes(header)
        with pytest.raises(FormatError, match="zero-sized"):
            read_btf(path)

    def test_write_is_deterministic(self, tmp_path):
        t = RNG.uniform(0, 1, size=(3, 5, 2))
        p1, p2 = tmp_path / "a.btf", tmp_path / "b.btf"
        write_btf(p1, t)
        write_btf(p2, t)
        assert p1.read_bytes() == p2.read_bytes()


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        m = RNG.standard_normal((4, 3))
        path = tmp_path / "m.csv"
        write_csv_matrix(path, m)
        np.testing.assert_array_equal(read_csv_matrix(path), m)

    def test_ragged_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3\n4,5\n")
        with pytest.raises(FormatError, match="ragged"):
            read_csv_matrix(path)

    def test_non_numeric_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3,x\n")
        with pytest.raises(FormatError, match="line 2"):
            read_csv_matrix(path)


class TestHeatmap:
    def test_constant_zero_all_black(self, tmp_path):
        path = tmp_path / "z.pgm"
        write_heatmap(path, np.zeros((3, 4)), scale=1.0)
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n4 3\n65535\n")
        assert blob[13:] == b"\x00" * 24

    def test_full_scale_all_white(self, tmp_path):
        path = tmp_path / "w.pgm"
        write_heatmap(path, np.full((2, 2), 3.0), scale=3.0)
        assert path.read_bytes()[13:] == b"\xff" * 8

    def test_byte_hash_replay(self, tmp_path):
        img = RNG.uniform(0, 1, size=(5, 7))
        p1, p2 = tmp_path / "a.pgm", tmp_path / "b.pgm"
        write_heatmap(p1, img)
        write_heatmap(p2, img)
        h1 = hashlib.sha256(p1.read_bytes()).hexdigest()
        assert h1 == hashlib.sha256(p2.read_bytes()).hexdigest()

    def test_clipping(self, tmp_path):
        path = tmp_path / "c.pgm"
        write_heatmap(path, np.array([[-1.0, 2.0]]), scale=1.0)
        samples = np.frombuffer(path.read_bytes()[13:], dtype=">u2")
        np.testing.assert_array_equal(samples, [0, 65535])


class TestConfig:
    def test_parse_flat_pairs(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lambda1 = 0.5\n# comment\nprior = qdip\n\nmu=2\n")
        assert read_config(path) == {"lambda1": "0.5", "prior": "qdip", "mu": "2"}

    def test_bad_line_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("just words\n")
        with pytest.raises(FormatError):
            read_config(path)
