"""Encoding index: one stored encoding per library image, in a binary file.

File layout (little-endian):

    b"SIMX"  u32 version  u64 seed  u32 entry_count
    per entry:
        u32 image_id
        u16 path_length, UTF-8 path bytes
        u16 height, u16 width, u16 channels
        height*width*channels float32 values, row-major (h, w, c)
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imaging import ImageDecodeError, load_image, to_library, to_tensor
from .nn import Network, NetworkSpec

log = logging.getLogger(__name__)

MAGIC = b"SIMX"
FORMAT_VERSION = 1
NORMALIZATION_TAG = "rgb/255"

_HEADER = struct.Struct("<4sIQI")
_ENTRY_ID = struct.Struct("<IH")
_DIMS = struct.Struct("<HHH")


class IndexFormatError(ValueError):
    pass


class IndexVersionError(IndexFormatError):
    def __init__(self, found: int, expected: int = FORMAT_VERSION):
        super().__init__(f"index format version {found} is not supported (expected {expected})")
        self.found = found
        self.expected = expected


class IndexCorruptError(IndexFormatError):
    pass


class EmptyCorpusError(ValueError):
    pass


@dataclass(eq=False)
class IndexEntry:
    image_id: int
    source_path: str
    encoding: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, IndexEntry):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.source_path == other.source_path
            and self.encoding.shape == other.encoding.shape
            and self.encoding.tobytes() == other.encoding.tobytes()
        )


@dataclass
class EncodingIndex:
    network_seed: int
    entries: list = field(default_factory=list)
    format_version: int = FORMAT_VERSION
    normalization_tag: str = NORMALIZATION_TAG

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, image_id: int) -> IndexEntry:
        return self.entries[image_id]

    def validate(self) -> None:
        paths = set()
        for i, entry in enumerate(self.entries):
            if entry.image_id != i:
                raise IndexFormatError(f"entry ids must be dense 0..n-1, found {entry.image_id} at position {i}")
            if entry.source_path in paths:
                raise IndexFormatError(f"duplicate source path {entry.source_path!r}")
            paths.add(entry.source_path)

    def stacked_encodings(self) -> np.ndarray:
        return np.stack([e.encoding for e in self.entries])


def encode_image(net: Network, img: np.ndarray) -> np.ndarray:
    return net.forward(to_tensor(to_library(img)))


def _sort_key(rel: str) -> bytes:
    return rel.encode("utf-8")


def list_files(directory) -> list[str]:
    """Relative POSIX paths of every regular file, in UTF-8 byte order."""
    root = Path(directory)
    rels = [p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file()]
    return sorted(rels, key=_sort_key)


def load_library(directory, rel_paths):
    """Decode and resize images; returns (kept paths, images, skipped paths)."""
    root = Path(directory)
    kept, images, skipped = [], [], []
    for rel in rel_paths:
        try:
            img = load_image(root / rel)
        except ImageDecodeError as exc:
            log.warning("skipping %s", exc)
            skipped.append(rel)
            continue
        kept.append(rel)
        images.append(to_library(img))
    return kept, images, skipped


def build_index(directory, net: Network | NetworkSpec | None = None, batch_size: int = 16):
    """Encode every decodable image under ``directory``.

    Returns ``(index, skipped)`` where ``skipped`` lists the relative paths
    that could not be decoded.
    """
    root = Path(directory)
    if not root.is_dir():
        raise EmptyCorpusError(f"empty corpus: {root} is not a directory")
    if not isinstance(net, Network):
        net = Network(net)
    rels = list_files(root)
    entries, skipped = [], []
    for start in range(0, len(rels), batch_size):
        kept, images, bad = load_library(root, rels[start : start + batch_size])
        skipped.extend(bad)
        if not kept:
            continue
        encodings = net.forward_batch(np.stack([to_tensor(im) for im in images]), batch_size)
        for rel, enc in zip(kept, encodings):
            entries.append(IndexEntry(len(entries), rel, enc))
    if not entries:
        raise EmptyCorpusError(f"empty corpus: no decodable images under {root}")
    return EncodingIndex(network_seed=net.seed, entries=entries), skipped


def dumps(index: EncodingIndex) -> bytes:
    index.validate()
    parts = [_HEADER.pack(MAGIC, index.format_version, index.network_seed, len(index.entries))]
    for entry in index.entries:
        path = entry.source_path.encode("utf-8")
        if len(path) > 0xFFFF:
            raise IndexFormatError(f"path too long for the index format: {entry.source_path!r}")
        enc = np.asarray(entry.encoding)
        if enc.ndim != 3:
            raise IndexFormatError("encodings must be rank-3 tensors")
        parts.append(_ENTRY_ID.pack(entry.image_id, len(path)))
        parts.append(path)
        parts.append(_DIMS.pack(*enc.shape))
        parts.append(enc.astype("<f4", copy=False).tobytes())
    return b"".join(parts)


def loads(data: bytes) -> EncodingIndex:
    view = memoryview(data)
    if len(view) < 4 or bytes(view[:4]) != MAGIC:
        raise IndexFormatError(f"bad magic {bytes(view[:4])!r}, expected {MAGIC!r}")
    if len(view) < _HEADER.size:
        raise IndexCorruptError("truncated index header")
    _, version, seed, count = _HEADER.unpack_from(view, 0)
    if version != FORMAT_VERSION:
        raise IndexVersionError(version)
    offset = _HEADER.size
    entries = []

    def need(n):
        if offset + n > len(view):
            raise IndexCorruptError(f"truncated index: entry {len(entries)} needs {n} bytes at offset {offset}")

    for _ in range(count):
        need(_ENTRY_ID.size)
        image_id, path_len = _ENTRY_ID.unpack_from(view, offset)
        offset += _ENTRY_ID.size
        need(path_len)
        try:
            path = bytes(view[offset : offset + path_len]).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IndexCorruptError(f"entry {len(entries)} path is not UTF-8") from exc
        offset += path_len
        need(_DIMS.size)
        dims = _DIMS.unpack_from(view, offset)
        offset += _DIMS.size
        nbytes = 4 * dims[0] * dims[1] * dims[2]
        need(nbytes)
        enc = np.frombuffer(view[offset : offset + nbytes], dtype="<f4").astype(np.float32).reshape(dims)
        offset += nbytes
        entries.append(IndexEntry(image_id, path, enc))
    if offset != len(view):
        raise IndexCorruptError(f"{len(view) - offset} trailing bytes after the last entry")
    index = EncodingIndex(network_seed=seed, entries=entries)
    index.validate()
    return index


def save_index(index: EncodingIndex, path) -> None:
    Path(path).write_bytes(dumps(index))


def load_index(path) -> EncodingIndex:
    return loads(Path(path).read_bytes())
