"""Binary container for patched complex fields.

Layout, all little-endian::

    magic            8 bytes   b"MAGNLSF1"
    dim              uint32
    n_patches        uint32
    per patch        dim x float64 centre, float64 half_width,
                     float64 spacing, uint32 nodes_per_axis
    payload          per patch, nodes_per_axis**dim complex values as
                     interleaved (re, im) float64 pairs in row-major order

A JSON sidecar ``<file>.json`` repeats the patch metadata and carries the
run provenance.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .grid import Patch, PatchedField

__all__ = ["MAGIC", "write_field", "read_field"]

MAGIC = b"MAGNLSF1"


def write_field(path, u: PatchedField, sidecar: dict | None = None) -> None:
    dim = u.patches[0].dim
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", dim, len(u.patches)))
        for pt in u.patches:
            fh.write(struct.pack(f"<{dim}d", *pt.center))
            fh.write(struct.pack("<ddI", pt.half_width, pt.spacing, pt.nodes_per_axis))
        for v in u.values:
            c = np.ascontiguousarray(v, dtype="<c16")
            fh.write(c.tobytes(order="C"))
    meta = {
        "format": MAGIC.decode(),
        "dim": dim,
        "patches": [
            {
                "center": [float(x) for x in pt.center],
                "half_width": pt.half_width,
                "spacing": pt.spacing,
                "nodes_per_axis": pt.nodes_per_axis,
            }
            for pt in u.patches
        ],
    }
    if sidecar:
        meta.update(sidecar)
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_field(path):
    """Return (PatchedField, sidecar dict or None)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a field file")
    dim, npatch = struct.unpack_from("<II", data, 8)
    off = 16
    patches = []
    for _ in range(npatch):
        center = np.array(struct.unpack_from(f"<{dim}d", data, off))
        off += 8 * dim
        hw, h, n = struct.unpack_from("<ddI", data, off)
        off += 20
        pt = Patch(center, hw, h)
        if pt.nodes_per_axis != n:
            raise ValueError(f"{path}: inconsistent node count {n}")
        patches.append(pt)
    values = []
    for pt in patches:
        count = int(np.prod(pt.shape))
        arr = np.frombuffer(data, dtype="<c16", count=count, offset=off)
        values.append(arr.reshape(pt.shape).astype(complex))
        off += 16 * count
    try:
        with open(str(path) + ".json") as fh:
            side = json.load(fh)
    except FileNotFoundError:
        side = None
    return PatchedField(patches, values), side
