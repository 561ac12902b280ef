"""Shared binary container for checkpoints and dataset caches.

Layout (little-endian throughout):

    magic           6 bytes
    format version  u32
    config block    u32 byte length + canonical key-value text (UTF-8)
    tensor count    u32
    per tensor:     u32 name length, name bytes,
                    u32 rank, u32 x rank dims,
                    float64 x prod(dims) payload
    metadata block  u32 byte length + canonical key-value text (UTF-8)

Canonical key-value text is one `key=value` line per entry, sorted by key,
newline-terminated. Values must not contain newlines; list values use tab
separators.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import FormatError


def canonical_text(entries: dict[str, str]) -> str:
    for key, value in entries.items():
        if "=" in key or "\n" in key:
            raise FormatError(f"invalid canonical key: {key!r}")
        if "\n" in value:
            raise FormatError(f"canonical value for {key!r} contains a newline")
    return "".join(f"{k}={entries[k]}\n" for k in sorted(entries))


def parse_canonical_text(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line in text.splitlines():
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"malformed canonical line: {line!r}")
        key, value = line.split("=", 1)
        if key in entries:
            raise FormatError(f"duplicate canonical key: {key!r}")
        entries[key] = value
    return entries


def encode_str_list(items) -> str:
    joined = list(items)
    for item in joined:
        if "\t" in item or "\n" in item:
            raise FormatError(f"list item contains a separator: {item!r}")
    return "\t".join(joined)


def decode_str_list(value: str) -> list[str]:
    return value.split("\t") if value else []


def write_container(
    path: str,
    magic: bytes,
    version: int,
    config: dict[str, str],
    tensors: list[tuple[str, np.ndarray]],
    metadata: dict[str, str],
) -> None:
    """Write atomically: a temp file in the target directory, then rename."""
    if len(magic) != 6:
        raise FormatError("container magic must be exactly 6 bytes")
    parts: list[bytes] = [magic, struct.pack("<I", version)]
    config_bytes = canonical_text(config).encode("utf-8")
    parts.append(struct.pack("<I", len(config_bytes)))
    parts.append(config_bytes)
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        name_bytes = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        parts.append(struct.pack("<I", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        parts.append(arr.astype("<f8").tobytes())
    meta_bytes = canonical_text(metadata).encode("utf-8")
    parts.append(struct.pack("<I", len(meta_bytes)))
    parts.append(meta_bytes)

    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-container-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(parts))
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"{self.path}: truncated container (needed {n} more bytes)")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def text_block(self, what: str) -> str:
        length = self.u32()
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{self.path}: {what} block is not valid UTF-8") from exc


def read_container(
    path: str, magic: bytes, version: int
) -> tuple[dict[str, str], list[tuple[str, np.ndarray]], dict[str, str]]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read container {path}: {exc}") from exc
    r = _Reader(blob, path)
    found_magic = r.take(6)
    if found_magic != magic:
        raise FormatError(
            f"{path}: bad magic {found_magic!r}, expected {magic!r}"
        )
    found_version = r.u32()
    if found_version != version:
        raise FormatError(
            f"{path}: unsupported format version {found_version}, expected {version}"
        )
    config = parse_canonical_text(r.text_block("config"))
    count = r.u32()
    tensors: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        name_len = r.u32()
        name = r.take(name_len).decode("utf-8")
        rank = r.u32()
        if rank > 8:
            raise FormatError(f"{path}: implausible tensor rank {rank} for {name!r}")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank)) if rank else ()
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = r.take(8 * size)
        arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
        tensors.append((name, arr))
    metadata = parse_canonical_text(r.text_block("metadata"))
    if r.pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - r.pos} trailing bytes after metadata")
    return config, tensors, metadata
