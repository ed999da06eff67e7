"""Pure and compiled bit-vector kernels must agree bit for bit."""

import os
import random

import pytest

from icnsim import _bitops
from icnsim._bitops import _pure

_core = pytest.importorskip(
    "icnsim._bitops._core",
    reason="compiled kernel not built; pure fallback covered elsewhere")


def _random_vectors(rng, width, count):
    return [rng.randbytes(width) for _ in range(count)]


def test_backend_names():
    assert _pure.BACKEND == "pure"
    assert _core.BACKEND == "compiled"
    assert _bitops.BACKEND in ("pure", "compiled")
    if os.environ.get("ICNSIM_PURE_BITOPS") != "1":
        assert _bitops.BACKEND == "compiled"


def test_bor_equivalence():
    rng = random.Random(1)
    for width in (1, 8, 32, 33):
        for _ in range(200):
            a, b = rng.randbytes(width), rng.randbytes(width)
            assert _core.bor(a, b) == _pure.bor(a, b)


def test_or_many_equivalence():
    rng = random.Random(2)
    for width in (8, 32):
        for n in (0, 1, 2, 7):
            vecs = _random_vectors(rng, width, n)
            assert _core.or_many(vecs, width) == _pure.or_many(vecs, width)


def test_is_subset_equivalence():
    rng = random.Random(3)
    for _ in range(500):
        width = rng.choice((4, 8, 32))
        sup = rng.randbytes(width)
        # bias half the probes toward true subsets
        if rng.random() < 0.5:
            mask = rng.randbytes(width)
            sub = bytes(s & m for s, m in zip(sup, mask))
        else:
            sub = rng.randbytes(width)
        assert _core.is_subset(sub, sup) == _pure.is_subset(sub, sup)


def test_popcount_equivalence_and_value():
    rng = random.Random(4)
    for _ in range(300):
        a = rng.randbytes(rng.randrange(1, 40))
        expect = int.from_bytes(a, "little").bit_count()
        assert _pure.popcount(a) == expect
        assert _core.popcount(a) == expect


def test_select_and_count_covered_equivalence():
    rng = random.Random(5)
    for _ in range(200):
        width = rng.choice((4, 8, 16))
        n = rng.randrange(0, 12)
        fid = rng.randbytes(width)
        patterns = []
        for _ in range(n):
            if rng.random() < 0.5:
                mask = rng.randbytes(width)
                patterns.append(bytes(f & m for f, m in zip(fid, mask)))
            else:
                patterns.append(rng.randbytes(width))
        packed = b"".join(patterns)
        sel_pure = _pure.select_covered(fid, packed, n, width)
        sel_core = _core.select_covered(fid, packed, n, width)
        assert sel_pure == sel_core
        assert _pure.count_covered(fid, packed, n, width) == len(sel_pure)
        assert _core.count_covered(fid, packed, n, width) == len(sel_pure)
        # every selected pattern really is covered
        for i in sel_pure:
            assert _pure.is_subset(patterns[i], fid)


def test_width_mismatch_rejected_by_both():
    for impl in (_pure, _core):
        with pytest.raises(ValueError):
            impl.bor(b"\x01", b"\x01\x02")
        with pytest.raises(ValueError):
            impl.is_subset(b"\x01", b"\x01\x02")
        with pytest.raises(ValueError):
            impl.or_many([b"\x01\x02"], 1)
        with pytest.raises(ValueError):
            impl.select_covered(b"\x01", b"\x01\x02", 1, 1)


def test_subset_identities():
    zero = bytes(8)
    ones = bytes([0xFF] * 8)
    for impl in (_pure, _core):
        assert impl.is_subset(zero, zero)
        assert impl.is_subset(zero, ones)
        assert impl.is_subset(ones, ones)
        assert not impl.is_subset(ones, zero)
