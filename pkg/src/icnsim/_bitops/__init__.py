"""Bit-vector kernel with compiled and pure-Python backends.

The compiled extension is preferred when importable; setting the
environment variable ICNSIM_PURE_BITOPS=1 forces the pure backend
(used by the equivalence tests and the benchmark).
"""

import os

if os.environ.get("ICNSIM_PURE_BITOPS") == "1":
    from . import _pure as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pure as _impl

BACKEND = _impl.BACKEND
bor = _impl.bor
or_many = _impl.or_many
is_subset = _impl.is_subset
popcount = _impl.popcount
select_covered = _impl.select_covered
count_covered = _impl.count_covered

__all__ = [
    "BACKEND", "bor", "or_many", "is_subset", "popcount",
    "select_covered", "count_covered",
]
