"""The compiled kernels and the numpy fallback must agree exactly."""
import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import packet_records, pcap_bytes
from trafficlrd import _kernels_py
from trafficlrd.classify import default_ruleset
from trafficlrd.errors import TruncatedCapture

try:
    compiled = importlib.import_module("trafficlrd._kernels")
except ImportError:  # pragma: no cover - depends on the build
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def decode_both(data, linktype=1, big=False, nano=False):
    out = []
    for mod in (compiled, _kernels_py):
        try:
            out.append(mod.decode_pcap(data, big, nano, linktype))
        except TruncatedCapture as exc:
            out.append(("truncated", type(exc)))
    return out


def assert_same_decode(a, b):
    if isinstance(a, tuple) and a and a[0] == "truncated":
        assert a == b
        return
    cols_a, total_a, skip_a = a
    cols_b, total_b, skip_b = b
    assert (total_a, skip_a) == (total_b, skip_b)
    assert cols_a.keys() == cols_b.keys()
    for key in cols_a:
        assert cols_a[key].dtype == cols_b[key].dtype, key
        np.testing.assert_array_equal(cols_a[key], cols_b[key], err_msg=key)


@needs_compiled
@settings(max_examples=100, deadline=None)
@given(st.lists(packet_records(ported_zero_ok=True), max_size=25), st.sampled_from([1, 101]),
       st.booleans(), st.booleans())
def test_decode_agrees_on_valid_captures(records, linktype, big, nano):
    data = pcap_bytes(records, big_endian=big, nanosecond=nano, linktype=linktype)
    a, b = decode_both(data, linktype, big, nano)
    assert_same_decode(a, b)


@needs_compiled
@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=400), st.sampled_from([1, 101]))
def test_decode_agrees_on_garbage(body, linktype):
    data = pcap_bytes([], linktype=linktype) + body
    a, b = decode_both(data, linktype)
    assert_same_decode(a, b)


@needs_compiled
@settings(max_examples=200, deadline=None)
@given(st.lists(packet_records(), min_size=1, max_size=5), st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 255)), max_size=12))
def test_decode_agrees_on_corrupted_frames(records, flips):
    data = bytearray(pcap_bytes(records))
    for pos, val in flips:
        i = 24 + pos % (len(data) - 24)
        data[i] ^= val
    a, b = decode_both(bytes(data))
    assert_same_decode(a, b)


@needs_compiled
@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_classify_ports_agree(seed):
    rng = np.random.default_rng(seed)
    n = 2000
    proto = rng.choice([1, 2, 6, 17, 47, 89, 0, 255], n).astype(np.uint8)
    sport = rng.choice([0, 22, 53, 80, 123, 443, 1023, 1024, 50000, 65535], n).astype(np.uint16)
    dport = rng.integers(0, 65536, n).astype(np.uint16)
    tables = default_ruleset().tables()
    np.testing.assert_array_equal(
        compiled.classify_ports(proto, sport, dport, *tables),
        _kernels_py.classify_ports(proto, sport, dport, *tables),
    )


@needs_compiled
@pytest.mark.parametrize("weighted", [False, True])
def test_bin_accumulate_agrees(weighted):
    rng = np.random.default_rng(4)
    index = rng.integers(0, 500, 10_000).astype(np.int64)
    weights = rng.integers(20, 1500, 10_000).astype(np.uint32) if weighted else None
    np.testing.assert_array_equal(
        compiled.bin_accumulate(index, weights, 600), _kernels_py.bin_accumulate(index, weights, 600)
    )


@needs_compiled
@pytest.mark.parametrize("block", [2, 8, 64, 1000, 4096])
def test_rs_average_agrees(block):
    x = np.random.default_rng(block).standard_normal(8192)
    x[:block] = 1.0  # one flat block
    ca, cu = compiled.rs_average(x, block)
    pa, pu = _kernels_py.rs_average(x, block)
    assert cu == pu
    assert ca == pytest.approx(pa, rel=1e-12)


def test_rs_average_all_flat():
    ratio, used = _kernels_py.rs_average(np.zeros(64), 16)
    assert used == 0 and np.isnan(ratio)
    if compiled is not None:
        ratio, used = compiled.rs_average(np.zeros(64), 16)
        assert used == 0 and np.isnan(ratio)


def test_environment_variable_forces_fallback():
    env = dict(os.environ, TRAFFICLRD_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import trafficlrd; print(trafficlrd.BACKEND)"],
        capture_output=True, text=True, env=env, check=True,
    )
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("module", [m for m in (compiled, _kernels_py) if m is not None],
                         ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_truncated_file_raises_cleanly_on_each_backend(module, tmp_path, monkeypatch):
    # A decode error must not leave the memory-mapped file pinned by a live buffer.
    from trafficlrd import ingest

    monkeypatch.setattr(ingest, "kernels", module)
    path = tmp_path / "cut.pcap"
    path.write_bytes(pcap_bytes([_tcp_record()])[:-5])
    with pytest.raises(TruncatedCapture):
        ingest.parse_pcap(path)


def _tcp_record():
    from trafficlrd.records import PacketRecord

    return PacketRecord(1.0, "10.0.0.1", "10.0.0.2", 6, 1234, 80, 60, 0)
