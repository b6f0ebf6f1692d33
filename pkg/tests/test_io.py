import struct

import numpy as np
import pytest

from relbgk.errors import DomainError
from relbgk.io import FIELD_MAGIC, load_field, save_field
from relbgk.phase_space import DistributionField, MomentumGrid


def test_round_trip_is_exact(tmp_path, rng):
    g = MomentumGrid((3.0, 4.0, 5.0), (4, 6, 8), center=(0.5, 0.0, -0.25))
    f = DistributionField(g, rng.random((3, g.size)), {"t": 1.5, "label": "x"})
    path = save_field(f, tmp_path / "f.rbgk")
    back = load_field(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)
    assert back.meta == {"t": 1.5, "label": "x"}


def test_layout_is_documented_header_then_float64(tmp_path):
    g = MomentumGrid.cube(1.0, 2)
    vals = np.arange(2 * g.size, dtype=float).reshape(2, g.size)
    buf = save_field(DistributionField(g, vals), tmp_path / "f.rbgk").read_bytes()
    assert buf[:8] == FIELD_MAGIC
    (hlen,) = struct.unpack("<I", buf[8:12])
    data = np.frombuffer(buf[12 + hlen:], dtype="<f8")
    assert np.array_equal(data, vals.ravel())


def test_rejects_foreign_files(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOTAFILE" + b"\0" * 10)
    with pytest.raises(DomainError):
        load_field(p)


def test_rejects_truncated_payload(tmp_path):
    g = MomentumGrid.cube(1.0, 2)
    p = save_field(DistributionField(g, np.ones(g.size)), tmp_path / "f.rbgk")
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(DomainError):
        load_field(p)
