"""Binary field snapshots.

Layout::

    SWARMSIM1
    <role> <dims...>          # "rho na ny nx" or "Q ny nx"
    <spacings...>             # "da dy dx" or "dy dx", written with repr()
    <row-major little-endian float64 payload>
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import ScalarField, SwarmerField

MAGIC = "SWARMSIM1"


class SnapshotError(ValueError):
    pass


def snapshot_write(field: ScalarField | SwarmerField, path) -> None:
    values = np.ascontiguousarray(field.values, dtype="<f8")
    if isinstance(field, SwarmerField):
        spacings = (field.da, field.dy, field.dx)
    else:
        spacings = (field.dy, field.dx)
    header = "\n".join([
        MAGIC,
        " ".join([field.role, *map(str, values.shape)]),
        " ".join(repr(float(s)) for s in spacings),
    ]) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(values.tobytes(order="C"))


def _readline(fh) -> str:
    line = fh.readline()
    if not line.endswith(b"\n"):
        raise SnapshotError("truncated snapshot header")
    try:
        return line.decode("ascii").rstrip("\n")
    except UnicodeDecodeError as exc:
        raise SnapshotError("snapshot header is not ASCII") from exc


def snapshot_read(path) -> ScalarField | SwarmerField:
    with open(Path(path), "rb") as fh:
        magic = _readline(fh)
        if magic != MAGIC:
            raise SnapshotError(f"bad magic {magic!r}, expected {MAGIC!r}")
        role, *dims_txt = _readline(fh).split()
        try:
            dims = tuple(int(d) for d in dims_txt)
            spacings = tuple(float(s) for s in _readline(fh).split())
        except ValueError as exc:
            raise SnapshotError(f"malformed header: {exc}") from exc
        if len(dims) not in (2, 3) or len(spacings) != len(dims):
            raise SnapshotError(f"header dims {dims} / spacings {spacings} do not match")
        if any(d <= 0 for d in dims):
            raise SnapshotError(f"empty dimension in header {dims}")
        if (len(dims) == 3) != (role == "rho"):
            raise SnapshotError(f"role {role!r} inconsistent with {len(dims)} dimensions")
        payload = fh.read()
    expected = 8 * int(np.prod(dims))
    if len(payload) != expected:
        raise SnapshotError(f"payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    try:
        if len(dims) == 3:
            da, dy, dx = spacings
            return SwarmerField(values, da=da, dx=dx, dy=dy)
        dy, dx = spacings
        return ScalarField(values, dx=dx, dy=dy, role=role)
    except ValueError as exc:
        raise SnapshotError(str(exc)) from exc
