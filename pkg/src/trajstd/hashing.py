"""64-bit FNV-1a for content hashes, plus a bit mixer for split assignment."""

from __future__ import annotations

from pathlib import Path

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes, h: int = FNV64_OFFSET) -> int:
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & _MASK
    return h


def fmix64(h: int) -> int:
    """MurmurHash3 64-bit finalizer. FNV-1a leaves its high bits poorly mixed
    when keys differ only in their last bytes, which skews ``h / 2**64``."""
    h ^= h >> 33
    h = (h * 0xFF51AFD7ED558CCD) & _MASK
    h ^= h >> 33
    h = (h * 0xC4CEB9FE1A85EC53) & _MASK
    h ^= h >> 33
    return h


def fnv1a_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return f"{fnv1a_64(data):016x}"


def file_hash(*paths: str | Path) -> str:
    """Hash of the concatenated bytes of ``paths``, in order."""
    h = FNV64_OFFSET
    for p in paths:
        h = fnv1a_64(Path(p).read_bytes(), h)
    return f"{h:016x}"
