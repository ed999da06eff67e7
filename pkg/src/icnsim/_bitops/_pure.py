"""Pure-Python bit-vector primitives over fixed-width byte strings.

Reference implementation for the compiled kernel in _core.pyx.  Both
backends must produce identical results for identical inputs; the test
suite enforces that equivalence.
"""

from __future__ import annotations

BACKEND = "pure"


def bor(a: bytes, b: bytes) -> bytes:
    """Bitwise OR of two equal-length byte strings."""
    if len(a) != len(b):
        raise ValueError("width mismatch")
    n = len(a)
    return (int.from_bytes(a, "little") | int.from_bytes(b, "little")).to_bytes(n, "little")


def or_many(vectors, width_bytes: int) -> bytes:
    """OR an iterable of byte strings; empty input yields all zeros."""
    acc = 0
    for v in vectors:
        if len(v) != width_bytes:
            raise ValueError("width mismatch")
        acc |= int.from_bytes(v, "little")
    return acc.to_bytes(width_bytes, "little")


def is_subset(sub: bytes, sup: bytes) -> bool:
    """True iff every set bit of sub is also set in sup."""
    if len(sub) != len(sup):
        raise ValueError("width mismatch")
    a = int.from_bytes(sub, "little")
    return a & int.from_bytes(sup, "little") == a


def popcount(a: bytes) -> int:
    return int.from_bytes(a, "little").bit_count()


def select_covered(fid: bytes, packed: bytes, n: int, width_bytes: int) -> list:
    """Indices i in [0, n) whose pattern packed[i*w:(i+1)*w] is a subset of fid.

    packed concatenates n patterns of width_bytes each.
    """
    if len(packed) != n * width_bytes:
        raise ValueError("packed buffer size mismatch")
    if len(fid) != width_bytes:
        raise ValueError("width mismatch")
    f = int.from_bytes(fid, "little")
    out = []
    for i in range(n):
        p = int.from_bytes(packed[i * width_bytes:(i + 1) * width_bytes], "little")
        if p & f == p:
            out.append(i)
    return out


def count_covered(fid: bytes, packed: bytes, n: int, width_bytes: int) -> int:
    """Number of patterns in packed that are subsets of fid."""
    if len(packed) != n * width_bytes:
        raise ValueError("packed buffer size mismatch")
    if len(fid) != width_bytes:
        raise ValueError("width mismatch")
    f = int.from_bytes(fid, "little")
    hits = 0
    for i in range(n):
        p = int.from_bytes(packed[i * width_bytes:(i + 1) * width_bytes], "little")
        if p & f == p:
            hits += 1
    return hits
