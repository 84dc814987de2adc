"""Writer/reader for the engine's binary embedding format (``.cemb``).

Little-endian: magic ``CEMB`` | version u32 = 1 | modality u8 (0 image,
1 text) | normalized u8 | dim u32 | count u64 | records of
id_len u16 | id UTF-8 bytes | dim x f32. Written atomically.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"CEMB"
VERSION = 1
_HEADER = struct.Struct("<4sIBBIQ")
_ID_LEN = struct.Struct("<H")
_MODALITY = {"image": 0, "text": 1}


def write_cemb(path, ids, vectors, modality, normalized):
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise ValueError("vectors must be (len(ids), dim)")
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".cemb.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, _MODALITY[modality],
                                  1 if normalized else 0,
                                  vectors.shape[1], len(ids)))
            for row, item_id in enumerate(ids):
                raw = item_id.encode("utf-8")
                fh.write(_ID_LEN.pack(len(raw)))
                fh.write(raw)
                fh.write(vectors[row].tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_cemb(path):
    """Minimal reader used by tests to verify round-trips."""
    with open(path, "rb") as fh:
        magic, version, modality, normalized, dim, count = _HEADER.unpack(
            fh.read(_HEADER.size)
        )
        if magic != MAGIC or version != VERSION:
            raise ValueError(f"{path}: not a supported .cemb file")
        ids = []
        vectors = np.empty((count, dim), dtype=np.float32)
        for row in range(count):
            (id_len,) = _ID_LEN.unpack(fh.read(_ID_LEN.size))
            ids.append(fh.read(id_len).decode("utf-8"))
            vectors[row] = np.frombuffer(fh.read(4 * dim), dtype="<f4")
    return ids, vectors, ("image", "text")[modality], bool(normalized)
