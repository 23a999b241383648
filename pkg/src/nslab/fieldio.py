"""Binary and CSV serialization of fields and trajectories.

Field file layout (all little-endian)::

    offset  type     content
    0       4 bytes  magic b"MNSF"
    4       u32      format version (1)
    8       u32      dimension d
    12      u32      points per axis N
    16      f64      box scale Lambda
    24      f64      dealias fraction
    32      u32      number of components m (d for velocity fields)
    36      u32      flags; bit 0 set for complex (non-Hermitian) fields
    40      c128     m arrays of N**d coefficients, row-major lattice order
                     (numpy FFT ordering along each axis)

Trajectory file layout::

    0       4 bytes  magic b"MNST"
    4       u32      format version (1)
    8       u32      number of samples K
    12      K times  { f64 time, u64 byte length L, L bytes of a field file }
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .spectral import Grid, SpectralField, Trajectory, to_physical

FIELD_MAGIC = b"MNSF"
TRAJ_MAGIC = b"MNST"
VERSION = 1
_HEADER = struct.Struct("<4sIIIddII")
_THEADER = struct.Struct("<4sII")
_ENTRY = struct.Struct("<dQ")


def field_to_bytes(f: SpectralField) -> bytes:
    g = f.grid
    head = _HEADER.pack(FIELD_MAGIC, VERSION, g.d, g.N, g.box_scale, g.dealias,
                        f.ncomp, 0 if f.real else 1)
    return head + np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes()


def field_from_bytes(buf: bytes) -> SpectralField:
    if len(buf) < _HEADER.size:
        raise ConfigError("truncated field header")
    magic, ver, d, N, lam, dealias, m, flags = _HEADER.unpack_from(buf)
    if magic != FIELD_MAGIC:
        raise ConfigError(f"bad field magic {magic!r}")
    if ver != VERSION:
        raise ConfigError(f"unsupported field format version {ver}")
    g = Grid(d, N, lam, dealias)
    count = m * N**d
    if len(buf) < _HEADER.size + 16 * count:
        raise ConfigError(f"truncated field data: expected {count} coefficients")
    arr = np.frombuffer(buf, dtype="<c16", count=count, offset=_HEADER.size)
    return SpectralField(g, arr.reshape((m,) + g.shape).astype(np.complex128), not flags & 1)


def save_field(f: SpectralField, path) -> None:
    Path(path).write_bytes(field_to_bytes(f))


def load_field(path) -> SpectralField:
    return field_from_bytes(Path(path).read_bytes())


def save_trajectory(tr: Trajectory, path, stride: int = 1) -> None:
    """Write every ``stride``-th sample; the final sample is always kept."""
    idx = list(range(0, len(tr), max(1, stride)))
    if idx[-1] != len(tr) - 1:
        idx.append(len(tr) - 1)
    with open(path, "wb") as fh:
        fh.write(_THEADER.pack(TRAJ_MAGIC, VERSION, len(idx)))
        for i in idx:
            blob = field_to_bytes(tr.fields[i])
            fh.write(_ENTRY.pack(tr.times[i], len(blob)))
            fh.write(blob)


def load_trajectory(path) -> Trajectory:
    buf = Path(path).read_bytes()
    if len(buf) < _THEADER.size:
        raise ConfigError("truncated trajectory header")
    magic, ver, count = _THEADER.unpack_from(buf)
    if magic != TRAJ_MAGIC:
        raise ConfigError(f"bad trajectory magic {magic!r}")
    if ver != VERSION:
        raise ConfigError(f"unsupported trajectory format version {ver}")
    off = _THEADER.size
    tr = Trajectory()
    for _ in range(count):
        if len(buf) < off + _ENTRY.size:
            raise ConfigError("truncated trajectory entry")
        t, n = _ENTRY.unpack_from(buf, off)
        off += _ENTRY.size
        tr.append(t, field_from_bytes(buf[off : off + n]))
        off += n
    return tr


def physical_csv(f: SpectralField, path) -> None:
    """CSV of physical samples: coordinates then one column per component."""
    g = f.grid
    u = to_physical(f)
    cols = [g.x[i].ravel() for i in range(g.d)] + [np.real(c).ravel() for c in u]
    names = [f"x{i + 1}" for i in range(g.d)] + [f"u{i + 1}" for i in range(f.ncomp)]
    if not f.real:
        cols += [np.imag(c).ravel() for c in u]
        names += [f"im_u{i + 1}" for i in range(f.ncomp)]
    write_csv(path, names, np.column_stack(cols))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    """Deterministic CSV writer (``repr`` floats, ``\\n`` line endings)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def records_csv(records, path, columns=None) -> None:
    """Write a list of dicts; columns default to the keys of the first record."""
    records = list(records)
    if columns is None:
        columns = list(records[0].keys()) if records else []
    write_csv(path, columns, ([r.get(c, "") for c in columns] for r in records))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(io.StringIO(fh.read())))
