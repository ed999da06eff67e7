"""Compare the compiled and pure-Python bit-vector kernels.

Runs every kernel operation on identical inputs against both backends,
checks they agree, and reports per-call timings plus the speedup.  The
shapes default to the hot-path profile of the simulator: one forwarding
identifier checked against a node's whole egress table per packet hop.

Usage:
    python benchmarks/bench_bitops.py [--width-bits 256] [--fanout 32]
"""

import argparse
import random
import timeit

from icnsim._bitops import _pure

try:
    from icnsim._bitops import _core
except ImportError:
    _core = None


def make_inputs(width_bits: int, fanout: int, members: int, seed: int):
    """Random link patterns, a FID covering some of them, and the
    packed egress table the batch kernels consume."""
    rng = random.Random(seed)
    width_bytes = (width_bits + 7) // 8
    patterns = []
    for _ in range(fanout):
        bits = bytearray(width_bytes)
        for pos in rng.sample(range(width_bits), 5):
            bits[pos // 8] |= 1 << (pos % 8)
        patterns.append(bytes(bits))
    fid = bytearray(width_bytes)
    for pat in rng.sample(patterns, members):
        for i, byte in enumerate(pat):
            fid[i] |= byte
    return {
        "width_bytes": width_bytes,
        "patterns": patterns,
        "fid": bytes(fid),
        "packed": b"".join(patterns),
    }


def build_cases(data):
    w = data["width_bytes"]
    a, b = data["patterns"][0], data["patterns"][1]
    fid, packed = data["fid"], data["packed"]
    n = len(data["patterns"])
    return [
        ("bor", lambda m: m.bor(a, b)),
        ("or_many", lambda m: m.or_many(data["patterns"], w)),
        ("is_subset", lambda m: m.is_subset(a, fid)),
        ("popcount", lambda m: m.popcount(fid)),
        ("select_covered", lambda m: m.select_covered(fid, packed, n, w)),
        ("count_covered", lambda m: m.count_covered(fid, packed, n, w)),
    ]


def bench(fn, repeat: int, number: int) -> float:
    """Best-of-repeat per-call time in nanoseconds."""
    timer = timeit.Timer(fn)
    return min(timer.repeat(repeat, number)) / number * 1e9


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--width-bits", type=int, default=256)
    parser.add_argument("--fanout", type=int, default=32,
                        help="egress table entries per batch call")
    parser.add_argument("--members", type=int, default=10,
                        help="patterns ORed into the probe FID")
    parser.add_argument("--number", type=int, default=20_000,
                        help="calls per timing sample")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args(argv)

    data = make_inputs(args.width_bits, args.fanout, args.members, args.seed)
    cases = build_cases(data)

    if _core is None:
        print("compiled backend not importable; timing pure backend only")
    else:
        for name, call in cases:
            if call(_pure) != call(_core):
                raise SystemExit(f"backend mismatch on {name}")

    print(f"width={args.width_bits} bits, fanout={args.fanout}, "
          f"members={args.members}, number={args.number}")
    header = f"{'op':<16} {'pure ns':>10} {'compiled ns':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        pure_ns = bench(lambda: call(_pure), args.repeat, args.number)
        if _core is None:
            print(f"{name:<16} {pure_ns:>10.0f} {'-':>12} {'-':>8}")
            continue
        core_ns = bench(lambda: call(_core), args.repeat, args.number)
        print(f"{name:<16} {pure_ns:>10.0f} {core_ns:>12.0f} "
              f"{pure_ns / core_ns:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
