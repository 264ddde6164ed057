"""Binary snapshot format for fields, shared by the library and the CLI.

Layout (all little-endian): the 4-byte magic ``CHF1``, a u32 dimension, a u32
boundary tag (0 = sine/Dirichlet, 1 = cosine/Neumann), one u32 mode count per
axis, one f64 length per axis, then the f64 samples in C order.  Optional run
metadata (time stamp, time step, model parameters, seed) travels in a JSON
sidecar next to the binary file.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .spectral import DIRICHLET, NEUMANN, Field, Grid, make_grid

MAGIC = b"CHF1"
_BC_TAGS = {DIRICHLET: 0, NEUMANN: 1}
_TAG_BCS = {v: k for k, v in _BC_TAGS.items()}


class SnapshotError(ValueError):
    """Malformed snapshot file."""


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def save_field(path, field: Field, meta: dict | None = None) -> Path:
    """Write a field (and optional metadata sidecar); returns the data path."""
    path = Path(path)
    grid = field.grid
    header = MAGIC + struct.pack("<II", grid.dimension, _BC_TAGS[grid.bc])
    header += struct.pack(f"<{grid.dimension}I", *grid.modes)
    header += struct.pack(f"<{grid.dimension}d", *grid.lengths)
    samples = np.ascontiguousarray(field.values, dtype="<f8")
    path.write_bytes(header + samples.tobytes())
    if meta is not None:
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def load_field(path) -> tuple[Field, dict | None]:
    """Read a field and its metadata sidecar (None when absent)."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise SnapshotError(f"{path}: not a field snapshot (bad magic)")
    off = 4
    dim, tag = struct.unpack_from("<II", blob, off)
    off += 8
    if tag not in _TAG_BCS:
        raise SnapshotError(f"{path}: unknown boundary tag {tag}")
    if dim not in (1, 2):
        raise SnapshotError(f"{path}: unsupported dimension {dim}")
    modes = struct.unpack_from(f"<{dim}I", blob, off)
    off += 4 * dim
    lengths = struct.unpack_from(f"<{dim}d", blob, off)
    off += 8 * dim
    count = int(np.prod(modes))
    expected = off + 8 * count
    if len(blob) != expected:
        raise SnapshotError(f"{path}: expected {expected} bytes, found {len(blob)}")
    values = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(modes)
    grid = make_grid(dim, lengths, modes, _TAG_BCS[tag])
    meta = None
    sp = sidecar_path(path)
    if sp.exists():
        meta = json.loads(sp.read_text())
    return Field(grid, values.copy()), meta


def render_heatmap(field: Field, path) -> dict:
    """Write a 2D field as a binary portable graymap with a value-range sidecar.

    Values are mapped linearly onto 0..255 over ``[min, max]``; a constant
    field renders as a uniform zero image.  Output bytes are deterministic
    for a given field.
    """
    if field.grid.dimension != 2:
        raise ValueError("heatmaps are defined for 2D fields only")
    path = Path(path)
    values = field.values
    vmin, vmax = float(values.min()), float(values.max())
    if vmax > vmin:
        pixels = np.round(255.0 * (values - vmin) / (vmax - vmin)).astype(np.uint8)
    else:
        pixels = np.zeros(values.shape, dtype=np.uint8)
    rows, cols = pixels.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    path.write_bytes(header + pixels.tobytes())
    meta = {"vmin": vmin, "vmax": vmax, "rows": rows, "cols": cols}
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return meta
