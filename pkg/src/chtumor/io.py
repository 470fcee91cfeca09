"""Binary field snapshots, CSV tables and key-value reports."""
from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .grid import Grid

MAGIC = b"PFC1"
SNAPSHOT_VERSION = 1


def write_snapshot(path, grid: Grid, t: float, values) -> None:
    """One field at one time: header then row-major little-endian f64 values."""
    v = np.ascontiguousarray(grid.check(values, "snapshot values"), dtype="<f8")
    head = MAGIC + struct.pack("<IB", SNAPSHOT_VERSION, grid.dim)
    head += struct.pack(f"<{grid.dim}I", *grid.n)
    head += struct.pack(f"<{grid.dim}d", *grid.lengths)
    head += struct.pack("<d", float(t))
    Path(path).write_bytes(head + v.tobytes(order="C"))


def read_snapshot(path) -> tuple[Grid, float, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a field snapshot (bad magic {data[:4]!r})")
    version, dim = struct.unpack_from("<IB", data, 4)
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    if dim not in (1, 2):
        raise ValueError(f"{path}: unsupported dimension {dim}")
    off = 9
    n = struct.unpack_from(f"<{dim}I", data, off)
    off += 4 * dim
    lengths = struct.unpack_from(f"<{dim}d", data, off)
    off += 8 * dim
    (t,) = struct.unpack_from("<d", data, off)
    off += 8
    size = int(np.prod(n))
    if len(data) - off != 8 * size:
        raise ValueError(f"{path}: expected {size} values, found {(len(data) - off) / 8:g}")
    values = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(n).astype(float)
    return Grid(tuple(n), tuple(lengths)), t, values


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path, header, rows) -> None:
    """Comma-separated, header first, floats with 17 significant digits."""
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_columns(path, columns: dict) -> None:
    keys = list(columns)
    n = len(next(iter(columns.values()))) if columns else 0
    write_csv(path, keys, [[columns[k][i] for k in keys] for i in range(n)])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    header = lines[0].split(",")
    rows = [[float(x) if x not in ("true", "false") else float(x == "true") for x in ln.split(",")]
            for ln in lines[1:] if ln.strip()]
    return header, np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def config_hash(pairs: dict[str, str], seed: int | None = None) -> str:
    """SHA-256 over the sorted effective key=value pairs and the seed."""
    text = "\n".join(f"{k}={pairs[k]}" for k in sorted(pairs))
    text += f"\nseed={seed}"
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_report(path, fields: dict, cfg_hash: str) -> None:
    lines = [f"artifact_version = {__version__}", f"config_hash = {cfg_hash}"]
    for k, v in fields.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = " ".join(_fmt(x) for x in np.ravel(v))
        else:
            v = _fmt(v)
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_report(path) -> dict[str, str]:
    out = {}
    for ln in Path(path).read_text(encoding="utf-8").splitlines():
        if " = " in ln:
            k, v = ln.split(" = ", 1)
            out[k] = v
    return out
