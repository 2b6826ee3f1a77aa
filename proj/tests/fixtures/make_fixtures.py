#!/usr/bin/env python3
"""Writes the capture fixtures and the decodings expected from them.

Frames are assembled field by field with struct so the expectations do not
depend on the C++ parser. Run from this directory; outputs are checked in.
"""
import json
import struct

N_P = 8
LINKTYPE_ETHERNET = 1


def ip_bytes(dotted):
    return bytes(int(x) for x in dotted.split("."))


def ethernet(ethertype, body):
    frame = b"\x02\x00\x00\x00\x00\x01" + b"\x02\x00\x00\x00\x00\x02" + struct.pack(">H", ethertype) + body
    if len(frame) < 60:
        frame += b"\x00" * (60 - len(frame))
    return frame


def ipv4(proto, src, dst, l4, declared_ihl_words=5):
    # The header is always 20 bytes; declared_ihl_words may lie about it.
    total_len = 20 + len(l4)
    hdr = struct.pack(">BBHHHBBH4s4s", (4 << 4) | declared_ihl_words, 0, total_len, 1, 0, 64, proto, 0,
                      ip_bytes(src), ip_bytes(dst))
    return hdr + l4


def udp(sport, dport, payload):
    return struct.pack(">HHHH", sport, dport, 8 + len(payload), 0) + payload


def tcp(sport, dport, payload, options=b""):
    offset_words = (20 + len(options)) // 4
    return struct.pack(">HHIIBBHHH", sport, dport, 1, 0, offset_words << 4, 0x18, 1024, 0, 0) + options + payload


def pcap(records, big_endian=False, magic=0xA1B2C3D4):
    e = ">" if big_endian else "<"
    out = struct.pack(e + "IHHiIII", magic, 2, 4, 0, 0, 65535, LINKTYPE_ETHERNET)
    for sec, frac, frame in records:
        out += struct.pack(e + "IIII", sec, frac, len(frame), len(frame)) + frame
    return out


def expect(ts, src, dst, sport, dport, proto, payload):
    padded = list(payload[:N_P]) + [0] * max(0, N_P - len(payload))
    return {"ts": ts, "src_ip": src, "dst_ip": dst, "src_port": sport, "dst_port": dport, "proto": proto,
            "payload": padded}


def main():
    expected = {"n_p": N_P}

    # Little-endian, microseconds: UDP (padded frame), TCP with options and a
    # long payload, ARP, ICMP, and an IPv4 header longer than the frame.
    sec = 1700000000
    le_records = [
        (sec, 1, ethernet(0x0800, ipv4(17, "10.0.0.1", "10.0.0.2", udp(5353, 53, b"AB")))),
        (sec, 500000, ethernet(0x0800, ipv4(6, "192.168.1.10", "93.184.216.34",
                                            tcp(40000, 80, b"hello, world", options=b"\x01\x01\x01\x01")))),
        (sec + 1, 0, ethernet(0x0806, b"\x00\x01\x08\x00\x06\x04\x00\x01" + b"\x00" * 20)),
        (sec + 1, 250000, ethernet(0x0800, ipv4(1, "10.0.0.3", "10.0.0.4", b"\x08\x00\xf7\xff\x00\x01\x00\x01"))),
        (sec + 2, 0, ethernet(0x0800, ipv4(17, "10.0.0.1", "10.0.0.2", udp(1, 2, b"x"), declared_ihl_words=15))),
    ]
    assert len(le_records[0][2]) == 60
    with open("le_micro.pcap", "wb") as f:
        f.write(pcap(le_records))
    expected["le_micro.pcap"] = {
        "records": [
            expect(sec + 1 * 1e-6, "10.0.0.1", "10.0.0.2", 5353, 53, "UDP", b"AB"),
            expect(sec + 500000 * 1e-6, "192.168.1.10", "93.184.216.34", 40000, 80, "TCP", b"hello, world"),
            expect(sec + 1 + 250000 * 1e-6, "10.0.0.3", "10.0.0.4", 0, 0, "OTHER",
                   b"\x08\x00\xf7\xff\x00\x01\x00\x01"),
        ],
        "raw_count": 5,
        "caplens": [len(r[2]) for r in le_records],
        "stats": {"packets_read": 5, "malformed": 1, "unsupported": 1, "truncated": 1},
    }

    # Big-endian, microseconds: a two-packet UDP exchange.
    be_records = [
        (sec + 10, 123456, ethernet(0x0800, ipv4(17, "172.16.0.5", "172.16.0.9", udp(4000, 4001, b"\x00\xff\x10")))),
        (sec + 10, 623456, ethernet(0x0800, ipv4(17, "172.16.0.9", "172.16.0.5", udp(4001, 4000, bytes(range(1, 11)))))),
    ]
    with open("be_micro.pcap", "wb") as f:
        f.write(pcap(be_records, big_endian=True))
    expected["be_micro.pcap"] = {
        "records": [
            expect(sec + 10 + 123456 * 1e-6, "172.16.0.5", "172.16.0.9", 4000, 4001, "UDP", b"\x00\xff\x10"),
            expect(sec + 10 + 623456 * 1e-6, "172.16.0.9", "172.16.0.5", 4001, 4000, "UDP", bytes(range(1, 11))),
        ],
        "raw_count": 2,
        "caplens": [len(r[2]) for r in be_records],
        "stats": {"packets_read": 2, "malformed": 0, "unsupported": 0, "truncated": 1},
    }

    # One good record, then a record header claiming 100 bytes with 40 left.
    good = ethernet(0x0800, ipv4(17, "10.0.0.1", "10.0.0.2", udp(1, 2, b"ok")))
    data = pcap([(sec, 0, good)])
    bad_offset = len(data)
    data += struct.pack("<IIII", sec, 1, 100, 100) + b"\x00" * 40
    with open("truncated.pcap", "wb") as f:
        f.write(data)
    expected["truncated.pcap"] = {"error": "TruncatedRecord", "offset": bad_offset}

    # Nanosecond-resolution variant.
    ns_records = [(sec, 123456789, ethernet(0x0800, ipv4(17, "10.0.0.1", "10.0.0.2", udp(7, 9, b"ns"))))]
    with open("le_nano.pcap", "wb") as f:
        f.write(pcap(ns_records, magic=0xA1B23C4D))
    expected["le_nano.pcap"] = {
        "records": [expect(sec + 123456789 * 1e-9, "10.0.0.1", "10.0.0.2", 7, 9, "UDP", b"ns")],
        "raw_count": 1,
        "caplens": [60],
        "stats": {"packets_read": 1, "malformed": 0, "unsupported": 0, "truncated": 0},
    }

    with open("expected.json", "w") as f:
        json.dump(expected, f, indent=2, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
