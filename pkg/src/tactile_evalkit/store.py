"""Embedding and metadata storage.

Embeddings travel in a small binary container (extension ``.temb``):

    magic   4 bytes  b"TEMB"
    version u16      currently 1
    dtype   u8       1 = float32
    n       u64      row count
    d       u64      embedding dimension
    ids     u32 count (== n), then per id: u32 byte length + UTF-8 bytes,
            in row order
    data    n * d float32 values, little-endian, row-major, no padding

Values are stored as float32 on disk and in memory; metric code promotes
to float64 before any arithmetic. Metadata rides alongside as NDJSON with
one record per sample (fields: sample_id, video_id, frame_index, class,
split). A CSV loader (header ``sample_id`` plus d numeric columns) covers
small hand-written fixtures and spreadsheet exports.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

_MAGIC = b"TEMB"
_VERSION = 1
_DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<4sHBQQ")
_U32 = struct.Struct("<I")

_SPLITS = ("train", "test", "unassigned")


class StoreError(ValueError):
    """Base class for storage and format failures."""


class TembFormatError(StoreError):
    """Structurally invalid .temb container."""


class BadMagicError(TembFormatError):
    """File does not start with the TEMB magic."""


class UnsupportedVersionError(TembFormatError):
    """Container version this reader does not understand."""


class UnsupportedDtypeError(TembFormatError):
    """Dtype tag other than float32."""


class TruncatedFileError(TembFormatError):
    """Byte length disagrees with the header (short read or trailing data)."""


class NonFiniteValueError(StoreError):
    """Embedding payload contains NaN or Inf."""


class DuplicateIdError(StoreError):
    """The same sample id appears more than once."""


class CsvFormatError(StoreError):
    """Malformed embedding CSV."""


class MetaFormatError(StoreError):
    """Malformed metadata record."""


def _sha256_hex(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


@dataclass(frozen=True)
class EmbeddingSet:
    """Immutable (n, d) float32 matrix with one unique string id per row."""

    data: np.ndarray
    ids: tuple[str, ...]
    source_path: str | None = None
    source_digest: str | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise StoreError("embedding data must be 2-D (n, d), got shape %r" % (data.shape,))
        if data.shape[1] < 1:
            raise StoreError("embedding dimension must be positive")
        if not np.isfinite(data).all():
            raise NonFiniteValueError("embedding data contains NaN or Inf")
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != data.shape[0]:
            raise StoreError(
                "id count %d does not match row count %d" % (len(ids), data.shape[0])
            )
        if len(set(ids)) != len(ids):
            seen: set[str] = set()
            dup = next(i for i in ids if i in seen or seen.add(i))  # type: ignore[func-returns-value]
            raise DuplicateIdError("duplicate sample id %r" % dup)
        data = data.copy(order="C")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", ids)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def as_float64(self) -> np.ndarray:
        """Promote to float64 for arithmetic; storage stays float32."""
        return self.data.astype(np.float64)

    def take(self, indices) -> "EmbeddingSet":
        idx = np.asarray(indices, dtype=np.intp)
        return EmbeddingSet(self.data[idx], tuple(self.ids[i] for i in idx))

    def __len__(self) -> int:
        return self.count


def load_embeddings(path) -> EmbeddingSet:
    """Read a .temb container. The writer is its exact inverse."""
    path = str(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        if raw[:4] != _MAGIC:
            raise BadMagicError("%s: not a TEMB file" % path)
        raise TruncatedFileError("%s: header truncated" % path)
    magic, version, dtype, n, d = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise BadMagicError("%s: not a TEMB file (magic %r)" % (path, magic))
    if version != _VERSION:
        raise UnsupportedVersionError("%s: unsupported version %d" % (path, version))
    if dtype != _DTYPE_FLOAT32:
        raise UnsupportedDtypeError("%s: unsupported dtype tag %d" % (path, dtype))
    if d < 1:
        raise TembFormatError("%s: dimension must be positive" % path)
    off = _HEADER.size
    try:
        (id_count,) = _U32.unpack_from(raw, off)
    except struct.error:
        raise TruncatedFileError("%s: id block truncated" % path) from None
    off += _U32.size
    if id_count != n:
        raise TembFormatError("%s: id count %d != row count %d" % (path, id_count, n))
    ids = []
    for _ in range(n):
        try:
            (length,) = _U32.unpack_from(raw, off)
        except struct.error:
            raise TruncatedFileError("%s: id block truncated" % path) from None
        off += _U32.size
        chunk = raw[off : off + length]
        if len(chunk) != length:
            raise TruncatedFileError("%s: id block truncated" % path)
        try:
            ids.append(chunk.decode("utf-8"))
        except UnicodeDecodeError:
            raise TembFormatError("%s: sample id is not valid UTF-8" % path) from None
        off += length
    expected = off + n * d * 4
    if len(raw) < expected:
        raise TruncatedFileError(
            "%s: payload truncated (%d bytes, expected %d)" % (path, len(raw), expected)
        )
    if len(raw) > expected:
        raise TruncatedFileError(
            "%s: %d trailing bytes after payload" % (path, len(raw) - expected)
        )
    data = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    return EmbeddingSet(data, tuple(ids), source_path=path, source_digest=_sha256_hex(raw))


def dump_embeddings(e: EmbeddingSet) -> bytes:
    parts = [_HEADER.pack(_MAGIC, _VERSION, _DTYPE_FLOAT32, e.count, e.dim)]
    parts.append(_U32.pack(e.count))
    for sample_id in e.ids:
        encoded = sample_id.encode("utf-8")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
    parts.append(np.ascontiguousarray(e.data, dtype="<f4").tobytes())
    return b"".join(parts)


def write_embeddings(e: EmbeddingSet, path) -> str:
    """Serialize to .temb; returns the file's sha256 hex digest."""
    raw = dump_embeddings(e)
    with open(str(path), "wb") as fh:
        fh.write(raw)
    return _sha256_hex(raw)


def load_embeddings_csv(path) -> EmbeddingSet:
    """Read the CSV alternative: header ``sample_id`` then d numeric columns."""
    path = str(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = raw.decode("utf-8").splitlines()
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvFormatError("%s: empty file" % path) from None
    if not header or header[0] != "sample_id" or len(header) < 2:
        raise CsvFormatError("%s: header must be sample_id plus numeric columns" % path)
    dim = len(header) - 1
    ids = []
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise CsvFormatError("%s:%d: expected %d fields, got %d" % (path, lineno, dim + 1, len(row)))
        ids.append(row[0])
        try:
            rows.append([float(v) for v in row[1:]])
        except ValueError:
            raise CsvFormatError("%s:%d: non-numeric value" % (path, lineno)) from None
    data = np.asarray(rows, dtype=np.float32).reshape(len(ids), dim)
    return EmbeddingSet(data, tuple(ids), source_path=path, source_digest=_sha256_hex(raw))


@dataclass(frozen=True)
class MetaRow:
    """Per-sample metadata; optional fields stay None when absent."""

    sample_id: str
    video_id: str | None = None
    frame_index: int | None = None
    class_label: str | None = None
    split: str = "unassigned"

    def __post_init__(self):
        if not isinstance(self.sample_id, str) or not self.sample_id:
            raise MetaFormatError("sample_id must be a non-empty string")
        if self.video_id is not None and not isinstance(self.video_id, str):
            raise MetaFormatError("video_id must be a string")
        if self.frame_index is not None:
            if isinstance(self.frame_index, bool) or not isinstance(self.frame_index, int):
                raise MetaFormatError("frame_index must be an integer")
            if self.frame_index < 0:
                raise MetaFormatError("frame_index must be non-negative")
        if self.class_label is not None and not isinstance(self.class_label, str):
            raise MetaFormatError("class must be a string")
        if self.split not in _SPLITS:
            raise MetaFormatError("split must be one of %s" % (_SPLITS,))


@dataclass(frozen=True)
class MetaTable:
    """Metadata rows keyed by sample id, preserving file order."""

    rows: tuple[MetaRow, ...]
    source_path: str | None = None
    source_digest: str | None = None
    by_id: Mapping[str, MetaRow] = field(init=False, repr=False)

    def __post_init__(self):
        by_id: dict[str, MetaRow] = {}
        frames_seen: set[tuple[str, int]] = set()
        for row in self.rows:
            if row.sample_id in by_id:
                raise DuplicateIdError("duplicate sample id %r" % row.sample_id)
            by_id[row.sample_id] = row
            if row.video_id is not None and row.frame_index is not None:
                key = (row.video_id, row.frame_index)
                if key in frames_seen:
                    raise MetaFormatError(
                        "duplicate frame: video %r already has frame_index %d"
                        % (row.video_id, row.frame_index)
                    )
                frames_seen.add(key)
        object.__setattr__(self, "by_id", by_id)

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self.by_id

    def get(self, sample_id: str) -> MetaRow | None:
        return self.by_id.get(sample_id)


def _row_from_record(record: dict, where: str) -> MetaRow:
    if not isinstance(record, dict):
        raise MetaFormatError("%s: record is not a JSON object" % where)
    if "sample_id" not in record:
        raise MetaFormatError("%s: missing sample_id" % where)
    try:
        return MetaRow(
            sample_id=record["sample_id"],
            video_id=record.get("video_id"),
            frame_index=record.get("frame_index"),
            class_label=record.get("class"),
            split=record.get("split", "unassigned"),
        )
    except MetaFormatError as exc:
        raise MetaFormatError("%s: %s" % (where, exc)) from None


def load_meta(path) -> MetaTable:
    """Read NDJSON metadata, one record per line."""
    path = str(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    rows = []
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        where = "%s:%d" % (path, lineno)
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            raise MetaFormatError("%s: invalid JSON" % where) from None
        rows.append(_row_from_record(record, where))
    return MetaTable(tuple(rows), source_path=path, source_digest=_sha256_hex(raw))


def write_meta(table: MetaTable, path) -> str:
    """Serialize metadata as NDJSON; omits unset fields. Returns sha256."""
    lines = []
    for row in table.rows:
        record: dict = {"sample_id": row.sample_id}
        if row.video_id is not None:
            record["video_id"] = row.video_id
        if row.frame_index is not None:
            record["frame_index"] = row.frame_index
        if row.class_label is not None:
            record["class"] = row.class_label
        if row.split != "unassigned":
            record["split"] = row.split
        lines.append(json.dumps(record, sort_keys=True))
    raw = ("\n".join(lines) + "\n" if lines else "").encode("utf-8")
    with open(str(path), "wb") as fh:
        fh.write(raw)
    return _sha256_hex(raw)


@dataclass(frozen=True)
class ClassPartition:
    """Row indices of an EmbeddingSet grouped by class label.

    Classes are ordered lexicographically and, within a class, rows are
    ordered by sample id so downstream results cannot depend on the row
    order of the source file.
    """

    classes: tuple[str, ...]
    indices: Mapping[str, np.ndarray]

    def sizes(self) -> dict[str, int]:
        return {label: int(self.indices[label].size) for label in self.classes}


def partition_by_class(e: EmbeddingSet, meta: MetaTable) -> ClassPartition:
    """Group embedding rows by the class label recorded in ``meta``.

    Unlabeled samples are left out. A labeled sample id with no embedding
    row is an error; extra embedding rows that never appear in the
    metadata are fine.
    """
    position = {sample_id: i for i, sample_id in enumerate(e.ids)}
    groups: dict[str, list[tuple[str, int]]] = {}
    for row in meta.rows:
        if row.class_label is None:
            continue
        if row.sample_id not in position:
            raise StoreError(
                "labeled sample %r has no embedding row" % row.sample_id
            )
        groups.setdefault(row.class_label, []).append((row.sample_id, position[row.sample_id]))
    classes = tuple(sorted(groups))
    indices = {
        label: np.asarray([pos for _, pos in sorted(groups[label])], dtype=np.intp)
        for label in classes
    }
    return ClassPartition(classes, indices)


def sha256_file(path) -> str:
    with open(str(path), "rb") as fh:
        return _sha256_hex(fh.read())
