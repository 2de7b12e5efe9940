"""Pure-Python/numpy implementations of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; used when the compiled
extension is unavailable or ``TRAFFICLRD_PURE_PYTHON`` is set.
"""
import math
import struct

import numpy as np

from .errors import TruncatedCapture

_IPV6_EXT_HEADERS = (0, 43, 60)
_IPV6_FRAGMENT = 44


def _decode_ip(frame, off, caplen):
    """Decode an IP datagram at ``frame[off:]``.

    Returns ``(version, src, dst, proto, sport, dport, length, dscp)`` or None
    when the bytes do not hold a well-formed IPv4/IPv6 header.
    """
    if caplen - off < 1:
        return None
    version = frame[off] >> 4
    if version == 4:
        if caplen - off < 20:
            return None
        ihl = (frame[off] & 0x0F) * 4
        total = (frame[off + 2] << 8) | frame[off + 3]
        if ihl < 20 or total < ihl:
            return None
        dscp = frame[off + 1] >> 2
        frag_offset = ((frame[off + 6] & 0x1F) << 8) | frame[off + 7]
        proto = frame[off + 9]
        src = bytes(frame[off + 12:off + 16])
        dst = bytes(frame[off + 16:off + 20])
        pos = off + ihl
        first_fragment = frag_offset == 0
        length = total
    elif version == 6:
        if caplen - off < 40:
            return None
        tclass = ((frame[off] & 0x0F) << 4) | (frame[off + 1] >> 4)
        dscp = tclass >> 2
        length = ((frame[off + 4] << 8) | frame[off + 5]) + 40
        proto = frame[off + 6]
        src = bytes(frame[off + 8:off + 24])
        dst = bytes(frame[off + 24:off + 40])
        pos = off + 40
        first_fragment = True
        while pos + 8 <= caplen:
            if proto == _IPV6_FRAGMENT:
                if ((frame[pos + 2] << 8) | frame[pos + 3]) >> 3:
                    first_fragment = False
                proto = frame[pos]
                pos += 8
            elif proto in _IPV6_EXT_HEADERS:
                nxt = frame[pos]
                pos += (frame[pos + 1] + 1) * 8
                proto = nxt
            else:
                break
    else:
        return None
    sport = dport = 0
    if (proto == 6 or proto == 17) and first_fragment and pos + 4 <= caplen:
        sport = (frame[pos] << 8) | frame[pos + 1]
        dport = (frame[pos + 2] << 8) | frame[pos + 3]
    return version, src, dst, proto, sport, dport, length, dscp


def _decode_frame(frame, linktype):
    caplen = len(frame)
    if linktype == 1:
        if caplen < 14:
            return None
        ethertype = (frame[12] << 8) | frame[13]
        off = 14
        if ethertype == 0x8100:
            if caplen < 18:
                return None
            ethertype = (frame[16] << 8) | frame[17]
            off = 18
        if ethertype == 0x0800:
            want = 4
        elif ethertype == 0x86DD:
            want = 6
        else:
            return None
        decoded = _decode_ip(frame, off, caplen)
        if decoded is None or decoded[0] != want:
            return None
        return decoded
    return _decode_ip(frame, 0, caplen)


def decode_pcap(buf, big_endian, nanosecond, linktype):
    """Decode every record after the 24-byte global header of a pcap image."""
    view = memoryview(buf)
    frame = None
    try:
        rec = struct.Struct(">IIII" if big_endian else "<IIII")
        size = len(view)
        pos = 24
        ts_us, version, src, dst = [], [], [], []
        proto, sport, dport, length, dscp = [], [], [], [], []
        total = skipped = 0
        while pos < size:
            if size - pos < 16:
                raise TruncatedCapture(f"record header at byte {pos} is cut short")
            sec, frac, incl, _orig = rec.unpack_from(view, pos)
            pos += 16
            if size - pos < incl:
                raise TruncatedCapture(
                    f"record body at byte {pos} declares {incl} bytes, {size - pos} remain"
                )
            frame = view[pos:pos + incl]
            pos += incl
            total += 1
            decoded = _decode_frame(frame, linktype)
            if decoded is None:
                skipped += 1
                continue
            ts_us.append(sec * 1_000_000 + (frac // 1000 if nanosecond else frac))
            v, s, d, p, sp, dp, ln, ds = decoded
            version.append(v)
            src.append(s.ljust(16, b"\0"))
            dst.append(d.ljust(16, b"\0"))
            proto.append(p)
            sport.append(sp)
            dport.append(dp)
            length.append(ln)
            dscp.append(ds)
    finally:
        # Release the views so a memory-mapped source can close even after an error.
        if frame is not None:
            frame.release()
        view.release()
    n = len(ts_us)
    columns = {
        "ts_us": np.array(ts_us, dtype=np.int64),
        "version": np.array(version, dtype=np.uint8),
        "src": np.frombuffer(b"".join(src), dtype=np.uint8).reshape(n, 16).copy(),
        "dst": np.frombuffer(b"".join(dst), dtype=np.uint8).reshape(n, 16).copy(),
        "proto": np.array(proto, dtype=np.uint8),
        "sport": np.array(sport, dtype=np.uint16),
        "dport": np.array(dport, dtype=np.uint16),
        "length": np.array(length, dtype=np.uint32),
        "dscp": np.array(dscp, dtype=np.uint8),
    }
    return columns, total, skipped


def classify_ports(proto, sport, dport, tcp_class, mgmt_port, udp_generic, mgmt_proto):
    proto = np.asarray(proto, dtype=np.intp)
    sport = np.asarray(sport, dtype=np.intp)
    dport = np.asarray(dport, dtype=np.intp)
    both = (sport != 0) & (dport != 0)
    service = np.where(both, np.minimum(sport, dport), np.maximum(sport, dport))
    is_tcp = proto == 6
    is_udp = proto == 17
    out = np.full(proto.shape, 6, dtype=np.uint8)
    tcp_hit = tcp_class[service]
    out[is_tcp & (tcp_hit != 0)] = tcp_hit[is_tcp & (tcp_hit != 0)]
    out[is_udp & ((udp_generic[service] != 0) | (service < 1024))] = 5
    mgmt = (mgmt_proto[proto] != 0) | ((is_tcp | is_udp) & (mgmt_port[service] != 0))
    out[mgmt] = 4
    return out


def bin_accumulate(index, weights, nbins):
    index = np.asarray(index, dtype=np.int64)
    if weights is None:
        return np.bincount(index, minlength=nbins).astype(np.float64)
    return np.bincount(index, weights=np.asarray(weights, dtype=np.float64), minlength=nbins)


def rs_average(x, block):
    """Mean R/S over the non-overlapping blocks of ``x``; blocks with S=0 are skipped."""
    x = np.asarray(x, dtype=np.float64)
    nblocks = x.size // block
    blocks = x[: nblocks * block].reshape(nblocks, block)
    dev = blocks - blocks.mean(axis=1, keepdims=True)
    walk = np.cumsum(dev, axis=1)
    r = walk.max(axis=1) - walk.min(axis=1)
    s = np.sqrt(np.mean(dev * dev, axis=1))
    ok = s > 0
    used = int(ok.sum())
    if used == 0:
        return math.nan, 0
    return float(np.mean(r[ok] / s[ok])), used
