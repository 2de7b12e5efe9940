"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--packets N] [--repeat R]
"""
from __future__ import annotations

import argparse
import io
import sys
import timeit

import numpy as np

from trafficlrd import _kernels_py
from trafficlrd.classify import default_ruleset
from trafficlrd.ingest import pcap_header, write_pcap
from trafficlrd.records import PacketRecord

try:
    from trafficlrd import _kernels as _compiled
except ImportError:
    _compiled = None


def make_capture(n: int, seed: int = 0) -> bytes:
    rng = np.random.default_rng(seed)
    ports = rng.integers(1, 65536, (n, 2))
    lengths = rng.integers(60, 1500, n)
    records = (
        PacketRecord(1_700_000_000 + i * 1e-3, "10.0.0.1", "10.0.0.2", 6 if i % 3 else 17,
                     int(ports[i, 0]), int(ports[i, 1]), int(lengths[i]), 0)
        for i in range(n)
    )
    buf = io.BytesIO()
    write_pcap(records, buf)
    return buf.getvalue()


def cases(n: int):
    rng = np.random.default_rng(1)
    capture = make_capture(n)
    big, nano, linktype = pcap_header(capture)
    tables = default_ruleset().tables()
    proto = rng.choice([6, 17, 1], n).astype(np.uint8)
    sport = rng.integers(0, 65536, n).astype(np.uint16)
    dport = rng.integers(0, 65536, n).astype(np.uint16)
    index = np.sort(rng.integers(0, 36000, n)).astype(np.int64)
    weights = rng.integers(40, 1500, n).astype(np.uint32)
    series = rng.standard_normal(2**16)
    return {
        f"decode_pcap ({n} frames)": lambda k: k.decode_pcap(capture, big, nano, linktype),
        f"classify_ports ({n})": lambda k: k.classify_ports(proto, sport, dport, *tables),
        f"bin_accumulate ({n})": lambda k: k.bin_accumulate(index, weights, 36000),
        "rs_average (2^16, block 16)": lambda k: k.rs_average(series, 16),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--packets", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _compiled is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    print(f"{'kernel':<30} {'cython ms':>10} {'python ms':>10} {'speedup':>8}")
    for name, call in cases(args.packets).items():
        timings = {}
        for label, module in (("cython", _compiled), ("python", _kernels_py)):
            timings[label] = min(timeit.repeat(lambda: call(module), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<30} {timings['cython']:>10.2f} {timings['python']:>10.2f} "
              f"{timings['python'] / timings['cython']:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
