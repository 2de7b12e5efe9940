# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Must stay behaviourally identical to _kernels_py."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, NAN
from libc.stdint cimport uint8_t, uint16_t, uint32_t, int64_t

from trafficlrd.errors import TruncatedCapture

cnp.import_array()


cdef inline uint32_t _u32(const uint8_t[::1] b, Py_ssize_t p, bint big) noexcept nogil:
    if big:
        return (<uint32_t>b[p] << 24) | (<uint32_t>b[p + 1] << 16) | (<uint32_t>b[p + 2] << 8) | b[p + 3]
    return (<uint32_t>b[p + 3] << 24) | (<uint32_t>b[p + 2] << 16) | (<uint32_t>b[p + 1] << 8) | b[p]


cdef inline uint32_t _be16(const uint8_t[::1] b, Py_ssize_t p) noexcept nogil:
    return (<uint32_t>b[p] << 8) | b[p + 1]


def decode_pcap(buf, bint big_endian, bint nanosecond, int linktype):
    cdef const uint8_t[::1] b = buf
    cdef Py_ssize_t size = b.shape[0]
    cdef Py_ssize_t pos = 24, start, end, off, ipos, k
    cdef Py_ssize_t cap = max((size - 24) // 32, 16)
    cdef uint32_t sec, frac, incl, ethertype, ihl, total_len, frag, tclass
    cdef int version, want, proto
    cdef bint first_frag
    cdef Py_ssize_t n = 0, total = 0, skipped = 0

    ts_arr = np.empty(cap, dtype=np.int64)
    ver_arr = np.empty(cap, dtype=np.uint8)
    src_arr = np.zeros((cap, 16), dtype=np.uint8)
    dst_arr = np.zeros((cap, 16), dtype=np.uint8)
    proto_arr = np.empty(cap, dtype=np.uint8)
    sport_arr = np.empty(cap, dtype=np.uint16)
    dport_arr = np.empty(cap, dtype=np.uint16)
    len_arr = np.empty(cap, dtype=np.uint32)
    dscp_arr = np.empty(cap, dtype=np.uint8)
    cdef int64_t[::1] ts_v = ts_arr
    cdef uint8_t[::1] ver_v = ver_arr
    cdef uint8_t[:, ::1] src_v = src_arr
    cdef uint8_t[:, ::1] dst_v = dst_arr
    cdef uint8_t[::1] proto_v = proto_arr
    cdef uint16_t[::1] sport_v = sport_arr
    cdef uint16_t[::1] dport_v = dport_arr
    cdef uint32_t[::1] len_v = len_arr
    cdef uint8_t[::1] dscp_v = dscp_arr

    while pos < size:
        if size - pos < 16:
            raise TruncatedCapture(f"record header at byte {pos} is cut short")
        sec = _u32(b, pos, big_endian)
        frac = _u32(b, pos + 4, big_endian)
        incl = _u32(b, pos + 8, big_endian)
        pos += 16
        if <Py_ssize_t>incl > size - pos:
            raise TruncatedCapture(
                f"record body at byte {pos} declares {incl} bytes, {size - pos} remain"
            )
        start = pos
        end = pos + incl
        pos = end
        total += 1

        off = start
        if linktype == 1:
            if end - off < 14:
                skipped += 1
                continue
            ethertype = _be16(b, off + 12)
            off += 14
            if ethertype == 0x8100:
                if end - off < 4:
                    skipped += 1
                    continue
                ethertype = _be16(b, off + 2)
                off += 4
            if ethertype == 0x0800:
                want = 4
            elif ethertype == 0x86DD:
                want = 6
            else:
                skipped += 1
                continue
        else:
            want = 0
        if end - off < 1:
            skipped += 1
            continue
        version = b[off] >> 4
        if want and version != want:
            skipped += 1
            continue

        if n == cap:
            cap *= 2
            ts_arr = np.resize(ts_arr, cap); ts_v = ts_arr
            ver_arr = np.resize(ver_arr, cap); ver_v = ver_arr
            src_arr = np.resize(src_arr, (cap, 16)); src_v = src_arr
            dst_arr = np.resize(dst_arr, (cap, 16)); dst_v = dst_arr
            proto_arr = np.resize(proto_arr, cap); proto_v = proto_arr
            sport_arr = np.resize(sport_arr, cap); sport_v = sport_arr
            dport_arr = np.resize(dport_arr, cap); dport_v = dport_arr
            len_arr = np.resize(len_arr, cap); len_v = len_arr
            dscp_arr = np.resize(dscp_arr, cap); dscp_v = dscp_arr

        if version == 4:
            if end - off < 20:
                skipped += 1
                continue
            ihl = (b[off] & 0x0F) * 4
            total_len = _be16(b, off + 2)
            if ihl < 20 or total_len < ihl:
                skipped += 1
                continue
            dscp_v[n] = b[off + 1] >> 2
            frag = _be16(b, off + 6) & 0x1FFF
            proto = b[off + 9]
            for k in range(16):
                src_v[n, k] = b[off + 12 + k] if k < 4 else 0
                dst_v[n, k] = b[off + 16 + k] if k < 4 else 0
            ipos = off + ihl
            first_frag = frag == 0
            len_v[n] = total_len
        elif version == 6:
            if end - off < 40:
                skipped += 1
                continue
            tclass = ((b[off] & 0x0F) << 4) | (b[off + 1] >> 4)
            dscp_v[n] = tclass >> 2
            len_v[n] = _be16(b, off + 4) + 40
            proto = b[off + 6]
            for k in range(16):
                src_v[n, k] = b[off + 8 + k]
                dst_v[n, k] = b[off + 24 + k]
            ipos = off + 40
            first_frag = True
            while ipos + 8 <= end:
                if proto == 44:
                    if (_be16(b, ipos + 2) >> 3) != 0:
                        first_frag = False
                    proto = b[ipos]
                    ipos += 8
                elif proto == 0 or proto == 43 or proto == 60:
                    k = (b[ipos + 1] + 1) * 8
                    proto = b[ipos]
                    ipos += k
                else:
                    break
        else:
            skipped += 1
            continue

        ver_v[n] = version
        proto_v[n] = proto
        if (proto == 6 or proto == 17) and first_frag and ipos + 4 <= end:
            sport_v[n] = _be16(b, ipos)
            dport_v[n] = _be16(b, ipos + 2)
        else:
            sport_v[n] = 0
            dport_v[n] = 0
        ts_v[n] = <int64_t>sec * 1000000 + (frac // 1000 if nanosecond else frac)
        n += 1

    columns = {
        "ts_us": ts_arr[:n].copy(),
        "version": ver_arr[:n].copy(),
        "src": src_arr[:n].copy(),
        "dst": dst_arr[:n].copy(),
        "proto": proto_arr[:n].copy(),
        "sport": sport_arr[:n].copy(),
        "dport": dport_arr[:n].copy(),
        "length": len_arr[:n].copy(),
        "dscp": dscp_arr[:n].copy(),
    }
    return columns, total, skipped


def classify_ports(proto_in, sport_in, dport_in, tcp_class_in, mgmt_port_in, udp_generic_in, mgmt_proto_in):
    cdef const uint8_t[::1] proto = np.ascontiguousarray(proto_in, dtype=np.uint8)
    cdef const uint16_t[::1] sport = np.ascontiguousarray(sport_in, dtype=np.uint16)
    cdef const uint16_t[::1] dport = np.ascontiguousarray(dport_in, dtype=np.uint16)
    cdef const uint8_t[::1] tcp_class = np.ascontiguousarray(tcp_class_in, dtype=np.uint8)
    cdef const uint8_t[::1] mgmt_port = np.ascontiguousarray(mgmt_port_in, dtype=np.uint8)
    cdef const uint8_t[::1] udp_generic = np.ascontiguousarray(udp_generic_in, dtype=np.uint8)
    cdef const uint8_t[::1] mgmt_proto = np.ascontiguousarray(mgmt_proto_in, dtype=np.uint8)
    cdef Py_ssize_t i, n = proto.shape[0]
    cdef uint32_t sp, dp, service
    cdef uint8_t p, c
    out_arr = np.empty(n, dtype=np.uint8)
    cdef uint8_t[::1] out = out_arr
    with nogil:
        for i in range(n):
            p = proto[i]
            sp = sport[i]
            dp = dport[i]
            if sp != 0 and dp != 0:
                service = sp if sp < dp else dp
            else:
                service = sp if sp > dp else dp
            if mgmt_proto[p] or ((p == 6 or p == 17) and mgmt_port[service]):
                c = 4
            elif p == 6:
                c = tcp_class[service] if tcp_class[service] else 6
            elif p == 17:
                c = 5 if (udp_generic[service] or service < 1024) else 6
            else:
                c = 6
            out[i] = c
    return out_arr


def bin_accumulate(index_in, weights_in, Py_ssize_t nbins):
    cdef const int64_t[::1] index = np.ascontiguousarray(index_in, dtype=np.int64)
    cdef const double[::1] weights
    cdef Py_ssize_t i, n = index.shape[0]
    out_arr = np.zeros(nbins, dtype=np.float64)
    cdef double[::1] out = out_arr
    if weights_in is None:
        with nogil:
            for i in range(n):
                out[index[i]] += 1.0
    else:
        weights = np.ascontiguousarray(weights_in, dtype=np.float64)
        with nogil:
            for i in range(n):
                out[index[i]] += weights[i]
    return out_arr


def rs_average(x_in, Py_ssize_t block):
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t nblocks = x.shape[0] // block
    cdef Py_ssize_t bi, i, base, used = 0
    cdef double mean, walk, lo, hi, ss, d, acc = 0.0
    with nogil:
        for bi in range(nblocks):
            base = bi * block
            mean = 0.0
            for i in range(block):
                mean += x[base + i]
            mean /= block
            walk = 0.0
            lo = 0.0
            hi = 0.0
            ss = 0.0
            for i in range(block):
                d = x[base + i] - mean
                ss += d * d
                walk += d
                if i == 0:
                    lo = walk
                    hi = walk
                elif walk < lo:
                    lo = walk
                elif walk > hi:
                    hi = walk
            if ss > 0.0:
                acc += (hi - lo) / sqrt(ss / block)
                used += 1
    if used == 0:
        return NAN, 0
    return acc / used, used
