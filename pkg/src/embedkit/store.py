"""Embedding stores: validation, L2 normalization, binary persistence.

File format (``.cemb``, little-endian, no padding or compression):

    magic ``CEMB`` (4 bytes)
    version     u32 = 1
    modality    u8   (0 = image, 1 = text)
    normalized  u8   (0 / 1)
    dim         u32
    count       u64
    count records, each:  id_len u16 | id bytes (UTF-8) | dim x f32
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from ._kernels import row_norms
from .errors import (
    DegenerateVectorError,
    FormatError,
    IntegrityError,
    TruncatedFileError,
)

MAGIC = b"CEMB"
VERSION = 1
MODALITIES = ("image", "text")

_HEADER = struct.Struct("<4sIBBIQ")
_ID_LEN = struct.Struct("<H")

# Norm slack allowed for a store that claims to be normalized.
NORM_TOLERANCE = 1e-4
# Below this norm a vector has no usable direction.
DEGENERATE_NORM = 1e-12


@dataclass
class EmbeddingStore:
    """Immutable id-indexed matrix of fixed-dimension float32 vectors.

    Entry order is significant: it defines the deterministic tie-break
    order for every downstream ranking.
    """

    dim: int
    modality: str
    ids: list[str]
    vectors: np.ndarray  # (count, dim) float32
    normalized: bool = False
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim <= 0:
            raise IntegrityError(f"dim must be positive, got {self.dim}")
        if self.modality not in MODALITIES:
            raise IntegrityError(f"unknown modality {self.modality!r}")
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape != (len(self.ids), self.dim):
            raise IntegrityError(
                f"vector matrix shape {self.vectors.shape} does not match "
                f"{len(self.ids)} entries of dim {self.dim}"
            )
        self._index = {}
        for row, item_id in enumerate(self.ids):
            if not item_id:
                raise IntegrityError("empty id")
            if len(item_id.encode("utf-8")) > 65535:
                raise IntegrityError(f"id exceeds 65535 bytes: {item_id[:40]}...")
            if item_id in self._index:
                raise IntegrityError(f"duplicate id {item_id!r}")
            self._index[item_id] = row
        if self.vectors.size and not np.all(np.isfinite(self.vectors)):
            bad = int(np.argwhere(~np.isfinite(self.vectors).all(axis=1))[0][0])
            raise IntegrityError(f"non-finite value in vector {self.ids[bad]!r}")
        if self.normalized and len(self.ids):
            norms = row_norms(self.vectors)
            off = np.abs(norms - 1.0) > NORM_TOLERANCE
            if np.any(off):
                bad = int(np.argmax(off))
                raise IntegrityError(
                    f"store flagged normalized but {self.ids[bad]!r} has norm "
                    f"{norms[bad]:.6g}"
                )

    def __len__(self):
        return len(self.ids)

    def __contains__(self, item_id):
        return item_id in self._index

    def row(self, item_id: str) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise KeyError(f"id {item_id!r} not in store") from None

    def vector(self, item_id: str) -> np.ndarray:
        return self.vectors[self.row(item_id)]

    def submatrix(self, item_ids) -> np.ndarray:
        """Rows for the given ids, in the given order."""
        return self.vectors[[self.row(i) for i in item_ids]]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.modality == other.modality
            and self.normalized == other.normalized
            and self.ids == other.ids
            and np.array_equal(
                self.vectors.view(np.uint32), other.vectors.view(np.uint32)
            )
        )


def l2_normalize(store: EmbeddingStore) -> EmbeddingStore:
    """Scale every vector to unit Euclidean norm (computed in float64).

    Raises DegenerateVectorError for any vector with norm <= 1e-12.
    """
    norms = row_norms(store.vectors)
    bad = norms <= DEGENERATE_NORM
    if np.any(bad):
        offender = store.ids[int(np.argmax(bad))]
        raise DegenerateVectorError(
            f"cannot normalize {offender!r}: norm {norms[int(np.argmax(bad))]:.3g}",
            vector_id=offender,
        )
    scaled = (store.vectors.astype(np.float64) / norms[:, None]).astype(np.float32)
    return EmbeddingStore(
        dim=store.dim,
        modality=store.modality,
        ids=list(store.ids),
        vectors=scaled,
        normalized=True,
    )


def save_store(store: EmbeddingStore, path) -> None:
    """Write the store atomically (temp file in the same dir + rename)."""
    path = os.fspath(path)
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        MODALITIES.index(store.modality),
        1 if store.normalized else 0,
        store.dim,
        len(store.ids),
    )
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".cemb.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            for row, item_id in enumerate(store.ids):
                raw = item_id.encode("utf-8")
                fh.write(_ID_LEN.pack(len(raw)))
                fh.write(raw)
                fh.write(store.vectors[row].tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_store(path) -> EmbeddingStore:
    """Read a ``.cemb`` file back into a validated store."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise TruncatedFileError(f"{path}: file shorter than header")
        magic, version, modality_code, normalized, dim, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if modality_code >= len(MODALITIES):
            raise FormatError(f"{path}: unknown modality code {modality_code}")
        rec_bytes = 4 * dim
        ids: list[str] = []
        vectors = np.empty((count, dim), dtype=np.float32)
        for row in range(count):
            raw_len = fh.read(_ID_LEN.size)
            if len(raw_len) < _ID_LEN.size:
                raise TruncatedFileError(f"{path}: truncated at record {row}")
            (id_len,) = _ID_LEN.unpack(raw_len)
            raw_id = fh.read(id_len)
            if len(raw_id) < id_len:
                raise TruncatedFileError(f"{path}: truncated id at record {row}")
            payload = fh.read(rec_bytes)
            if len(payload) < rec_bytes:
                raise TruncatedFileError(f"{path}: truncated vector at record {row}")
            ids.append(raw_id.decode("utf-8"))
            vectors[row] = np.frombuffer(payload, dtype="<f4")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} records")
    return EmbeddingStore(
        dim=dim,
        modality=MODALITIES[modality_code],
        ids=ids,
        vectors=vectors,
        normalized=bool(normalized),
    )
