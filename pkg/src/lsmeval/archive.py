"""LSM archive and query-lexicon I/O.

Archive layout (little-endian): magic ``LSMM`` | version u16 | cell_size
f32 | dim u32 | voxel count u64 | flags u8 (bit0 semantics, bit1
instances) | label count u16 with u16-length-prefixed UTF-8 labels |
per-voxel records sorted by (x, y, z), each ``x,y,z i32 | label u16
(0xFFFF = unlabeled) | instance u32 (0xFFFFFFFF = none) | dim * f32``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    BadMagicError,
    LabelRangeError,
    LexiconError,
    NonFiniteEmbeddingError,
    TruncatedArchiveError,
    UnsupportedVersionError,
)
from .grid import (
    EmbeddingGrid,
    InstanceGrid,
    LabelVocabulary,
    MapBundle,
    SemanticGrid,
)

MAGIC = b"LSMM"
VERSION = 1
HEADER_STRUCT = struct.Struct("<4sHfIQB")
HEADER_SIZE = HEADER_STRUCT.size  # 23 bytes

FLAG_SEMANTICS = 0x01
FLAG_INSTANCES = 0x02

UNLABELED = 0xFFFF
NO_INSTANCE = 0xFFFFFFFF


def record_size(dim: int) -> int:
    return 12 + 2 + 4 + 4 * dim


def record_dtype(dim: int) -> np.dtype:
    return np.dtype(
        [
            ("x", "<i4"),
            ("y", "<i4"),
            ("z", "<i4"),
            ("label", "<u2"),
            ("instance", "<u4"),
            ("vec", "<f4", (dim,)),
        ]
    )


def vocabulary_block_size(labels) -> int:
    return 2 + sum(2 + len(str(name).encode("utf-8")) for name in labels)


def write_map_archive(bundle: MapBundle, path) -> int:
    """Serialize a bundle; returns bytes written (= footprint_bytes)."""
    emb = bundle.embeddings
    flags = 0
    labels: tuple = ()
    if bundle.semantics is not None:
        flags |= FLAG_SEMANTICS
        labels = bundle.semantics.vocabulary.labels
    if bundle.instances is not None:
        flags |= FLAG_INSTANCES

    header = HEADER_STRUCT.pack(
        MAGIC, VERSION, np.float32(emb.cell_size), emb.dim, len(emb), flags
    )
    vocab = bytearray(struct.pack("<H", len(labels)))
    for name in labels:
        encoded = str(name).encode("utf-8")
        vocab += struct.pack("<H", len(encoded))
        vocab += encoded

    records = np.empty(len(emb), dtype=record_dtype(emb.dim))
    records["x"] = emb.indices[:, 0]
    records["y"] = emb.indices[:, 1]
    records["z"] = emb.indices[:, 2]
    records["label"] = (
        bundle.semantics.labels if bundle.semantics is not None else UNLABELED
    )
    records["instance"] = (
        bundle.instances.ids if bundle.instances is not None else NO_INSTANCE
    )
    records["vec"] = emb.vectors

    payload = header + bytes(vocab) + records.tobytes()
    Path(path).write_bytes(payload)
    return len(payload)


def read_map_archive(path, map_id: Optional[str] = None) -> MapBundle:
    """Parse an LSM archive into a validated MapBundle.

    map_id defaults to the file stem; the archive itself carries no id.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an LSM archive (bad magic)")
    if len(data) < HEADER_SIZE:
        raise TruncatedArchiveError(f"{path}: truncated header")
    _, version, cell_size, dim, count, flags = HEADER_STRUCT.unpack_from(data, 0)
    if version != VERSION:
        raise UnsupportedVersionError(
            f"{path}: unsupported archive version {version} (expected {VERSION})"
        )

    offset = HEADER_SIZE
    if len(data) < offset + 2:
        raise TruncatedArchiveError(f"{path}: truncated vocabulary block")
    (label_count,) = struct.unpack_from("<H", data, offset)
    offset += 2
    names = []
    for _ in range(label_count):
        if len(data) < offset + 2:
            raise TruncatedArchiveError(f"{path}: truncated vocabulary block")
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if len(data) < offset + name_len:
            raise TruncatedArchiveError(f"{path}: truncated vocabulary block")
        names.append(data[offset : offset + name_len].decode("utf-8"))
        offset += name_len

    body = len(data) - offset
    expected = count * record_size(dim)
    if body < expected:
        raise TruncatedArchiveError(
            f"{path}: payload holds {body} bytes, header declares "
            f"{count} voxels ({expected} bytes)"
        )
    if body > expected:
        raise TruncatedArchiveError(
            f"{path}: {body - expected} trailing bytes after declared payload"
        )

    records = np.frombuffer(data, dtype=record_dtype(dim), count=count, offset=offset)
    vectors = records["vec"]
    if not np.isfinite(vectors).all():
        bad = np.flatnonzero(~np.isfinite(vectors).all(axis=1))[0]
        voxel = (int(records["x"][bad]), int(records["y"][bad]), int(records["z"][bad]))
        raise NonFiniteEmbeddingError(
            f"{path}: non-finite embedding component at voxel {voxel}"
        )

    indices = np.stack(
        [records["x"], records["y"], records["z"]], axis=1
    ).astype(np.int32)
    embeddings = EmbeddingGrid(cell_size, dim, indices, vectors)

    semantics = None
    if flags & FLAG_SEMANTICS:
        labels = records["label"]
        if len(labels) and labels.max(initial=0) >= label_count:
            bad = int(np.flatnonzero(labels >= label_count)[0])
            raise LabelRangeError(
                f"{path}: label id {int(labels[bad])} >= vocabulary size {label_count}"
            )
        semantics = SemanticGrid(indices, labels, LabelVocabulary(names))

    instances = None
    if flags & FLAG_INSTANCES:
        instances = InstanceGrid(indices, records["instance"])

    if map_id is None:
        map_id = path.stem
    return MapBundle(embeddings, semantics, instances, map_id=map_id)


class QueryLexicon:
    """Precomputed text embeddings keyed by query string."""

    def __init__(self, dim: int, entries: dict):
        dim = int(dim)
        if dim < 1:
            raise LexiconError(f"lexicon dim must be >= 1, got {dim}")
        validated = {}
        for key, vec in entries.items():
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (dim,):
                raise LexiconError(
                    f"lexicon entry {key!r} has length {arr.shape}, expected ({dim},)"
                )
            if not np.isfinite(arr).all():
                raise LexiconError(f"lexicon entry {key!r} has non-finite values")
            arr.setflags(write=False)
            validated[str(key)] = arr
        self.dim = dim
        self.entries = validated

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def __getitem__(self, key: str) -> np.ndarray:
        if key not in self.entries:
            raise LexiconError(f"query {key!r} not in lexicon")
        return self.entries[key]

    def keys(self):
        return self.entries.keys()


def _reject_duplicate_keys(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise LexiconError(f"duplicate lexicon key {key!r}")
        seen[key] = value
    return seen


def load_lexicon(path) -> QueryLexicon:
    """Read a ``{"dim": D, "entries": {query: [floats...]}}`` JSON lexicon."""
    path = Path(path)
    try:
        doc = json.loads(
            path.read_text(encoding="utf-8"), object_pairs_hook=_reject_duplicate_keys
        )
    except json.JSONDecodeError as exc:
        raise LexiconError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "dim" not in doc or "entries" not in doc:
        raise LexiconError(f"{path}: lexicon must carry 'dim' and 'entries'")
    return QueryLexicon(doc["dim"], doc["entries"])


def write_lexicon(lexicon: QueryLexicon, path) -> None:
    doc = {
        "dim": lexicon.dim,
        "entries": {
            key: [float(v) for v in vec] for key, vec in sorted(lexicon.entries.items())
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
