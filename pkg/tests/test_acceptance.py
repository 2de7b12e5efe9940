"""Acceptance suite: one test per criterion, each logging a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
happen; they are also repeated in the terminal summary.
"""
import io
import ipaddress
import json
import subprocess
import sys
import time
from decimal import Decimal
from pathlib import Path

import numpy as np

from _support import fgn_web_capture, pcap_bytes, record_criterion
from trafficlrd.calibrate import TOLERANCES, WHITE_NOISE_RANGE, calibration_grid, summarize
from trafficlrd.classify import CLASS_IDS, ClassCounters, classify, classify_batch, classify_stream, default_ruleset
from trafficlrd.cli import main
from trafficlrd.estimators import BUCKETS, METHODS, theoretical_acov
from trafficlrd.ingest import ActivityPeriod, parse_packet_log, parse_pcap, write_packet_log
from trafficlrd.records import PacketBatch, PacketRecord
from trafficlrd.report import ScoredSample, hurst_distribution_report, volume_report
from trafficlrd.series import aggregate_level, sample_mean_var
from trafficlrd.synth import SynthSpec, gen_fgn

H_GRID = (0.55, 0.6, 0.7, 0.8, 0.9)
SEEDS = 20
N = 2**16


def test_criterion_1_estimator_calibration():
    started = time.perf_counter()
    rows = calibration_grid(H_GRID, SEEDS, N, METHODS)
    elapsed = time.perf_counter() - started
    summary = summarize(rows)
    failures = []
    worst = {}
    for (method, h), s in summary.items():
        worst[method] = max(worst.get(method, 0.0), s["mean_abs_err"])
        if s["mean_abs_err"] > TOLERANCES[method]:
            failures.append(f"{method} h={h} err={s['mean_abs_err']:.4f}")
    ok = not failures and elapsed < 180 and len(summary) == len(METHODS) * len(H_GRID)
    detail = ", ".join(f"{m} worst {worst[m]:.4f} <= {TOLERANCES[m]}" for m in METHODS)
    record_criterion(1, ok, f"{detail}; {elapsed:.1f} s for the grid" + (f"; over: {failures}" if failures else ""))
    assert not failures, failures
    assert elapsed < 180


def test_criterion_2_white_noise_baseline():
    rows = calibration_grid((0.5,), SEEDS, N, METHODS, iid=True)
    means = {method: s["mean_h"] for (method, _), s in summarize(rows).items()}
    bad = {m: v for m, v in means.items() if not WHITE_NOISE_RANGE[m][0] <= v <= WHITE_NOISE_RANGE[m][1]}
    record_criterion(2, not bad, ", ".join(f"{m} mean {v:.4f} in {list(WHITE_NOISE_RANGE[m])}" for m, v in means.items()))
    assert not bad, bad


def test_criterion_3_autocovariance_exactness():
    lags = np.arange(1, 1001)
    white = np.abs(theoretical_acov(0.5, 2.5, lags)).max()
    ratios = {}
    for h in (0.6, 0.75, 0.9):
        k = 10**4
        ratios[h] = float(theoretical_acov(h, 2.5, k)) / (h * (2 * h - 1) * 2.5 * k ** (2 * h - 2))
    ok = white <= 1e-12 and all(0.99 <= r <= 1.01 for r in ratios.values())
    record_criterion(3, ok, f"max |acov(0.5, k)| = {white:.2e}; ratios at k=1e4 "
                     + ", ".join(f"h={h}: {r:.6f}" for h, r in ratios.items()))
    assert white <= 1e-12
    assert all(0.99 <= r <= 1.01 for r in ratios.values()), ratios


def test_criterion_4_variance_decay_law():
    h = 0.8
    ratios = {m: [] for m in (4, 16, 64)}
    for seed in range(SEEDS):
        x = gen_fgn(SynthSpec(h, N, 1.0, seed))
        base = sample_mean_var(x)[1]
        for m in ratios:
            ratios[m].append(sample_mean_var(aggregate_level(x, m))[1] / base)
    rel = {m: abs(np.mean(v) / m ** (2 * h - 2) - 1) for m, v in ratios.items()}
    ok = all(r <= 0.10 for r in rel.values())
    record_criterion(4, ok, ", ".join(f"m={m}: rel dev {r:.4f}" for m, r in rel.items()) + " (limit 0.10)")
    assert ok, rel


def fuzzed_batch(n, seed):
    rng = np.random.default_rng(seed)
    rules = default_ruleset()
    known = np.array(sorted({0, 1023, 1024, 65535} | set().union(*(getattr(rules, a) for a in (
        "interactive_tcp_ports", "bulk_tcp_ports", "http_ports", "mgmt_ports", "generic_udp_ports")))))
    proto = np.where(rng.random(n) < 0.8, rng.choice([6, 17], n), rng.integers(0, 256, n)).astype(np.uint8)

    def ports():
        return np.where(rng.random(n) < 0.5, rng.choice(known, n), rng.integers(0, 65536, n)).astype(np.uint16)

    sport, dport = ports(), ports()
    ported = np.isin(proto, (6, 17))
    sport[~ported] = 0
    dport[~ported] = 0
    version = np.where(rng.random(n) < 0.7, 4, 6).astype(np.uint8)
    src = rng.integers(0, 256, (n, 16), dtype=np.uint8)
    dst = rng.integers(0, 256, (n, 16), dtype=np.uint8)
    src[version == 4, 4:] = 0
    dst[version == 4, 4:] = 0
    length = rng.integers(40, 65536, n).astype(np.uint32)
    ts = np.sort(rng.integers(0, 86400 * 10**6, n)) + 1_700_000_000 * 10**6
    return PacketBatch(ts, version, src, dst, proto, sport, dport, length, rng.integers(0, 64, n)), rules


def expected_masks(batch, rules):
    """Independent class predicates, precedence applied by hand."""
    both = (batch.sport > 0) & (batch.dport > 0)
    port = np.where(both, np.minimum(batch.sport, batch.dport), np.maximum(batch.sport, batch.dport))
    tcp, udp = batch.proto == 6, batch.proto == 17
    member = lambda ports: np.isin(port, np.fromiter(ports, int, len(ports)))
    mgmt = np.isin(batch.proto, list(rules.mgmt_ip_protos)) | ((tcp | udp) & member(rules.mgmt_ports))
    c1 = ~mgmt & tcp & member(rules.interactive_tcp_ports)
    c2 = ~mgmt & tcp & member(rules.bulk_tcp_ports)
    c3 = ~mgmt & tcp & member(rules.http_ports)
    c5 = ~mgmt & udp & (member(rules.generic_udp_ports) | (port < 1024))
    c6 = ~(mgmt | c1 | c2 | c3 | c5)
    return {1: c1, 2: c2, 3: c3, 4: mgmt, 5: c5, 6: c6}


def test_criterion_5_classifier_partition():
    n = 10**6
    batch, rules = fuzzed_batch(n, 2024)
    ids = classify_batch(batch, rules)
    masks = expected_masks(batch, rules)
    membership = sum(m.astype(np.int64) for m in masks.values())
    oracle = sum(c * m.astype(np.int64) for c, m in masks.items())
    one_each = bool(np.all(membership == 1)) and ids.shape == (n,) and bool(np.isin(ids, CLASS_IDS).all())
    mismatches = int(np.count_nonzero(ids != oracle))

    parts, counters = classify_stream(batch, rules)
    total_bytes = int(batch.length.sum(dtype=np.int64))
    conserved = (
        sum(len(p) for p in parts.values()) == n
        and sum(counters.packets.values()) == n
        and sum(counters.bytes.values()) == total_bytes
        and all(int(parts[c].length.sum(dtype=np.int64)) == counters.bytes[c] for c in CLASS_IDS)
        and all(len(parts[c]) == counters.packets[c] for c in CLASS_IDS)
    )
    sample = batch.take(np.arange(0, n, 97))
    scalar_ids = np.array([int(classify(rec, rules)) for rec in sample])
    scalar_ok = bool(np.array_equal(scalar_ids, classify_batch(sample, rules)))

    ok = one_each and mismatches == 0 and conserved and scalar_ok
    record_criterion(5, ok, f"{n} records, {mismatches} misclassified, one class each: {one_each}, "
                     f"bytes {sum(counters.bytes.values())} == {total_bytes}: {conserved}, scalar path agrees: {scalar_ok}")
    assert one_each and mismatches == 0
    assert conserved
    assert scalar_ok


def test_criterion_6_pipeline_end_to_end(tmp_path, capsys):
    records, sizes = fgn_web_capture(h=0.8, seed=7)
    pcap = tmp_path / "fgn.pcap"
    pcap.write_bytes(pcap_bytes(records))
    code = main(["analyze", str(pcap), "--out", str(tmp_path / "run"), "--intervals", "100ms",
                 "--measure", "bytes"])
    capsys.readouterr()
    run = json.loads((tmp_path / "run" / "run.json").read_text())
    match = [e for e in run["estimates"] if e["class_id"] == 3 and e["interval_ms"] == 100
             and e["measure"] == "bytes" and e["method"] == "variance_time"]
    h = match[0]["estimate"]["h"] if len(match) == 1 and match[0]["estimate"] else float("nan")
    bins_ok = run["counters"]["bytes"]["3"] == int(sizes.sum())
    ok = code == 0 and 0.72 <= h <= 0.88 and bins_ok
    record_criterion(6, ok, f"class 3 variance-time H = {h:.4f} (target [0.72, 0.88]), class 3 bytes conserved: {bins_ok}")
    assert code == 0 and bins_ok
    assert 0.72 <= h <= 0.88


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "trafficlrd", *map(str, args)], capture_output=True, check=True)


def _tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_7_determinism(tmp_path):
    records, _ = fgn_web_capture(h=0.7, seed=3)
    pcap = tmp_path / "cap.pcap"
    pcap.write_bytes(pcap_bytes(records))
    trees = []
    for i in range(2):
        _cli("analyze", pcap, "--out", tmp_path / f"analyze{i}", "--format", "csv")
        trees.append(_tree(tmp_path / f"analyze{i}"))
    analyze_same = trees[0] == trees[1] and len(trees[0]) == 5
    outputs = []
    for i in range(2):
        out = tmp_path / f"cal{i}.csv"
        proc = _cli("calibrate", "--h-grid", "0.6,0.8", "--seeds", "3", "--n", "8192", "--seed", "11", "--out", out)
        outputs.append((out.read_bytes(), proc.stdout, proc.stderr))
    calibrate_same = outputs[0] == outputs[1]
    ok = analyze_same and calibrate_same
    record_criterion(7, ok, f"analyze outputs identical: {analyze_same} ({len(trees[0])} files), "
                     f"calibrate outputs identical: {calibrate_same}")
    assert analyze_same
    assert calibrate_same


def fixture_records(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        v6 = rng.random() < 0.4
        width = 16 if v6 else 4
        addr = lambda: str(ipaddress.ip_address(bytes(rng.integers(0, 256, width, dtype=np.uint8))))
        proto = int(rng.choice([6, 17, 1, 47, 89]))
        ported = proto in (6, 17)
        sport = int(rng.integers(0, 65536)) if ported else 0
        dport = int(rng.integers(0, 65536)) if ported else 0
        ts = (1_700_000_000_000_000 + int(rng.integers(0, 10**12))) / 1e6
        length = int(rng.integers(60, 65536))
        out.append(PacketRecord(ts, addr(), addr(), proto, sport, dport, length, int(rng.integers(0, 64))))
    out.sort(key=lambda r: r.ts)
    return out


def test_criterion_8_format_fidelity():
    records = fixture_records(3000, 8)
    streams = {}
    for big in (False, True):
        for nano in (False, True):
            batch, stats = parse_pcap(pcap_bytes(records, big_endian=big, nanosecond=nano))
            streams[(big, nano)] = (list(batch), stats.packets_skipped_non_ip)
    identical = all(s == (records, 0) for s in streams.values())

    text = io.StringIO()
    write_packet_log(records, text)
    back, _ = parse_packet_log(io.StringIO(text.getvalue()))
    again = io.StringIO()
    write_packet_log(back, again)
    lossless = list(back) == records and again.getvalue() == text.getvalue()

    ok = identical and lossless
    record_criterion(8, ok, f"{len(records)} records identical across 4 pcap layouts: {identical}; "
                     f"log round trip lossless: {lossless}")
    assert identical
    assert lossless


def decimal_deviation(cells) -> float:
    """|sum - 100| of report cells, summed exactly as the decimals they represent."""
    return float(abs(sum(Decimal(repr(v)) for v in cells) - 100))


def test_criterion_9_report_invariants():
    rng = np.random.default_rng(9)
    worst_col = 0.0
    for _ in range(5000):
        scale = 10 ** rng.integers(0, 13)
        b = rng.integers(0, scale + 1, 6) * (rng.random(6) < 0.8)
        p = rng.integers(0, 10**6, 6) * (rng.random(6) < 0.8)
        if b.sum() == 0 or p.sum() == 0:
            continue
        rep = volume_report(ClassCounters(dict(zip(CLASS_IDS, map(int, p))), dict(zip(CLASS_IDS, map(int, b)))))
        worst_col = max(worst_col, decimal_deviation(rep.bytes_pct.values()), decimal_deviation(rep.packets_pct.values()))

    periods = list(ActivityPeriod)
    worst_row = 0.0
    for _ in range(2000):
        k = int(rng.integers(1, 80))
        samples = [
            ScoredSample(int(rng.choice(CLASS_IDS)), periods[int(rng.integers(0, 3))],
                         float(rng.uniform(-0.2, 1.2)), int(rng.integers(1, 10**9)))
            for _ in range(k)
        ]
        rep = hurst_distribution_report(samples)
        present = {s.class_id for s in samples}
        for c in present:
            for table in (rep.sample_pct, rep.volume_pct):
                worst_row = max(worst_row, decimal_deviation(table[c][b] for b in BUCKETS))
    ok = worst_col <= 0.05 and worst_row <= 0.2
    record_criterion(9, ok, f"worst volume column deviation {worst_col:.4f} (<= 0.05), "
                     f"worst H-distribution row deviation {worst_row:.4f} (<= 0.2)")
    assert worst_col <= 0.05
    assert worst_row <= 0.2
