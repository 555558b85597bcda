import numpy as np
import pytest

from swarmsim.grid import ScalarField, SwarmerField
from swarmsim.snapshot import MAGIC, SnapshotError, snapshot_read, snapshot_write


def test_scalar_round_trip(tmp_path):
    vals = np.random.default_rng(0).random((4, 6))
    snapshot_write(ScalarField(vals, dx=0.1, dy=0.3, role="M"), tmp_path / "m.bin")
    f = snapshot_read(tmp_path / "m.bin")
    assert isinstance(f, ScalarField) and f.role == "M"
    assert (f.dx, f.dy) == (0.1, 0.3)
    np.testing.assert_array_equal(f.values, vals)


def test_swarmer_round_trip(tmp_path):
    vals = np.random.default_rng(1).random((3, 4, 5))
    snapshot_write(SwarmerField(vals, da=1 / 3, dx=0.2, dy=0.25), tmp_path / "r.bin")
    f = snapshot_read(tmp_path / "r.bin")
    assert isinstance(f, SwarmerField)
    assert f.da == 1 / 3
    np.testing.assert_array_equal(f.values, vals)


def test_header_layout(tmp_path):
    snapshot_write(ScalarField(np.ones((3, 4)), dx=0.25, dy=0.5, role="Q"), tmp_path / "q.bin")
    raw = (tmp_path / "q.bin").read_bytes()
    header = f"{MAGIC}\nQ 3 4\n0.5 0.25\n".encode()
    assert raw.startswith(header)
    assert len(raw) == len(header) + 8 * 12
    assert np.frombuffer(raw[len(header):], "<f8")[0] == 1.0


def _write(path, text, payload=b""):
    path.write_bytes(text.encode() + payload)
    return path


@pytest.mark.parametrize("text,payload,match", [
    ("NOTSWARM\nQ 2 2\n1 1\n", b"\0" * 32, "bad magic"),
    (f"{MAGIC}\nQ 2 2\n1 1\n", b"\0" * 24, "payload"),
    (f"{MAGIC}\nQ 2 0\n1 1\n", b"", "empty dimension"),
    (f"{MAGIC}\nrho 2 2\n1 1\n", b"\0" * 32, "inconsistent"),
    (f"{MAGIC}\nQ 2 2\n", b"", "truncated"),
    (f"{MAGIC}\nQ 2 x\n1 1\n", b"", "malformed"),
])
def test_rejects_corrupt(tmp_path, text, payload, match):
    with pytest.raises(SnapshotError, match=match):
        snapshot_read(_write(tmp_path / "bad.bin", text, payload))
