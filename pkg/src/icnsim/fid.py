"""Forwarding identifiers: bit-vector encodings of link sets.

Every directed link carries a fixed-width link identifier.  In exact mode
each link owns one globally unique bit, so a forwarding identifier (FID)
built by ORing link identifiers matches exactly the encoded link set.  In
Bloom mode each link sets k of m bits; OR-composition then admits false
positives (a link not on the path whose bits happen to be covered) but
never false negatives.  Forwarding state lives entirely in the packet:
a node forwards on a link iff the link's bits are a subset of the FID.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import _bitops
from .simkernel import substream_seed


class CapacityError(ValueError):
    """Exact mode needs at least as many bits as directed links."""


@dataclass(frozen=True)
class FidConfig:
    m: int = 256
    k: int = 5
    mode: str = "exact"

    def __post_init__(self):
        if self.mode not in ("exact", "bloom"):
            raise ValueError(f"unknown fid mode {self.mode!r}")
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.mode == "bloom" and not 1 <= self.k < self.m:
            raise ValueError("bloom mode requires 1 <= k < m")

    @property
    def width_bytes(self) -> int:
        return (self.m + 7) // 8


@dataclass(frozen=True)
class FID:
    """OR-combination of link identifiers; all-zeros forwards nowhere."""

    bits: bytes
    width: int

    def __post_init__(self):
        if len(self.bits) != (self.width + 7) // 8:
            raise ValueError("bits length does not match width")

    def popcount(self) -> int:
        return _bitops.popcount(self.bits)


@dataclass(frozen=True)
class LinkId:
    bits: bytes
    width: int
    link_index: int

    def popcount(self) -> int:
        return _bitops.popcount(self.bits)


def zero_fid(width: int) -> FID:
    return FID(bytes((width + 7) // 8), width)


def _bits_from_positions(positions, m: int) -> bytes:
    value = 0
    for p in positions:
        value |= 1 << p
    return value.to_bytes((m + 7) // 8, "little")


def assign_link_ids(topology, config: FidConfig, seed: int) -> dict[str, LinkId]:
    """Assign a LinkId to every directed link of the topology.

    Accepts a TopologyGraph or any ordered iterable of link keys.  The
    same (topology, config, seed) always yields the same assignment.
    """
    if hasattr(topology, "sorted_link_keys"):
        keys = topology.sorted_link_keys()
    else:
        keys = list(topology)
    if config.mode == "exact":
        if len(keys) > config.m:
            raise CapacityError(
                f"exact mode with m={config.m} cannot label {len(keys)} links")
        return {
            key: LinkId(_bits_from_positions((i,), config.m), config.m, i)
            for i, key in enumerate(keys)
        }
    rng = random.Random(substream_seed(seed, "link_ids"))
    out = {}
    for i, key in enumerate(keys):
        positions = rng.sample(range(config.m), config.k)
        out[key] = LinkId(_bits_from_positions(positions, config.m), config.m, i)
    return out


def encode_path(link_ids, width: int | None = None) -> FID:
    """OR the identifiers of a link sequence into one FID.

    An empty sequence yields the all-zeros FID, which forwards nowhere;
    width must then be given explicitly.
    """
    ids = list(link_ids)
    if not ids:
        if width is None:
            raise ValueError("width required to encode an empty path")
        return zero_fid(width)
    w = ids[0].width
    if width is not None and width != w:
        raise ValueError("width mismatch")
    for lid in ids:
        if lid.width != w:
            raise ValueError("mixed link identifier widths")
    bits = _bitops.or_many([lid.bits for lid in ids], (w + 7) // 8)
    return FID(bits, w)


def should_forward(fid: FID, lid: LinkId) -> bool:
    """Forwarding decision: does the FID cover every bit of the link id?"""
    if fid.width != lid.width:
        raise ValueError("width mismatch")
    return _bitops.is_subset(lid.bits, fid.bits)


def combine_trees(fids, width: int | None = None) -> FID:
    """OR several FIDs into a multicast delivery tree."""
    items = list(fids)
    if not items:
        if width is None:
            raise ValueError("width required to combine an empty set")
        return zero_fid(width)
    w = items[0].width
    if width is not None and width != w:
        raise ValueError("width mismatch")
    for f in items:
        if f.width != w:
            raise ValueError("mixed FID widths")
    bits = _bitops.or_many([f.bits for f in items], (w + 7) // 8)
    return FID(bits, w)


def false_positive_rate(m: int, k: int, n: int) -> float:
    """Analytic false-positive probability for n links ORed into one FID.

    Probability that all k bits of an unrelated link are covered:
    (1 - (1 - 1/m)^(k*n))^k.  Zero encoded links can cover nothing.
    """
    if n == 0:
        return 0.0
    return (1.0 - (1.0 - 1.0 / m) ** (k * n)) ** k


def pack_link_ids(lids) -> bytes:
    """Concatenate LinkId bit patterns for the batch kernel calls."""
    return b"".join(l.bits for l in lids)
