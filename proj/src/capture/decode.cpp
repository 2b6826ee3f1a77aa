#include <algorithm>
#include <cstdio>
#include <sstream>

#include "pktdt/capture.hpp"

namespace pktdt {
namespace {

constexpr std::size_t kEthernetHeaderLen = 14;
constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
constexpr std::uint8_t kIpProtoTcp = 6;
constexpr std::uint8_t kIpProtoUdp = 17;

std::uint16_t be16(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

}  // namespace

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::TCP: return "TCP";
    case Protocol::UDP: return "UDP";
    case Protocol::OTHER: return "OTHER";
  }
  return "OTHER";
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "TCP") return Protocol::TCP;
  if (s == "UDP") return Protocol::UDP;
  if (s == "OTHER") return Protocol::OTHER;
  throw DataError("unknown protocol '" + s + "'");
}

std::string Ipv4::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", octets[0], octets[1], octets[2], octets[3]);
  return buf;
}

Ipv4 Ipv4::parse(const std::string& dotted) {
  Ipv4 ip;
  std::istringstream in(dotted);
  for (int i = 0; i < 4; ++i) {
    int v = -1;
    if (!(in >> v) || v < 0 || v > 255) throw DataError("bad IPv4 address '" + dotted + "'");
    ip.octets[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
    if (i < 3 && in.get() != '.') throw DataError("bad IPv4 address '" + dotted + "'");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("bad IPv4 address '" + dotted + "'");
  return ip;
}

CaptureError::CaptureError(Kind kind, std::size_t offset, const std::string& what)
    : DataError(what + " (offset " + std::to_string(offset) + ")"), kind_(kind), offset_(offset) {}

PacketRecord extract_features(const RawPacket& pkt, std::size_t n_p, IngestStats& stats) {
  using Kind = CaptureError::Kind;
  const auto& b = pkt.link_payload;
  if (b.size() < kEthernetHeaderLen) throw CaptureError(Kind::MalformedHeader, 0, "frame shorter than Ethernet header");
  const std::uint16_t ether_type = be16(b, 12);
  if (ether_type != kEtherTypeIpv4) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%04x", ether_type);
    throw CaptureError(Kind::UnsupportedProtocol, 12, std::string("ethertype ") + buf + " is not IPv4");
  }

  const std::size_t ip = kEthernetHeaderLen;
  const std::size_t avail = b.size() - ip;
  if (avail < 20) throw CaptureError(Kind::MalformedHeader, ip, "IPv4 header truncated");
  if ((b[ip] >> 4) != 4) throw CaptureError(Kind::MalformedHeader, ip, "IP version is not 4");
  const std::size_t ihl = static_cast<std::size_t>(b[ip] & 0x0F) * 4;
  const std::size_t total_len = be16(b, ip + 2);
  if (ihl < 20 || ihl > avail || total_len < ihl) {
    throw CaptureError(Kind::MalformedHeader, ip, "IPv4 header length inconsistent with captured length");
  }
  // Trailing Ethernet padding is excluded; snaplen-truncated frames keep what was captured.
  const std::size_t ip_end = ip + std::min(total_len, avail);

  PacketRecord rec;
  rec.timestamp = pkt.timestamp;
  std::copy_n(b.begin() + ip + 12, 4, rec.src_ip.octets.begin());
  std::copy_n(b.begin() + ip + 16, 4, rec.dst_ip.octets.begin());

  std::size_t payload_start = ip + ihl;
  const std::uint8_t proto = b[ip + 9];
  if (proto == kIpProtoTcp) {
    if (ip_end - payload_start < 20) throw CaptureError(Kind::MalformedHeader, payload_start, "TCP header truncated");
    const std::size_t data_off = static_cast<std::size_t>(b[payload_start + 12] >> 4) * 4;
    if (data_off < 20 || data_off > ip_end - payload_start) {
      throw CaptureError(Kind::MalformedHeader, payload_start, "TCP data offset inconsistent with packet length");
    }
    rec.protocol = Protocol::TCP;
    rec.src_port = be16(b, payload_start);
    rec.dst_port = be16(b, payload_start + 2);
    payload_start += data_off;
  } else if (proto == kIpProtoUdp) {
    if (ip_end - payload_start < 8) throw CaptureError(Kind::MalformedHeader, payload_start, "UDP header truncated");
    rec.protocol = Protocol::UDP;
    rec.src_port = be16(b, payload_start);
    rec.dst_port = be16(b, payload_start + 2);
    payload_start += 8;
  } else {
    rec.protocol = Protocol::OTHER;
  }

  const std::size_t payload_len = ip_end - payload_start;
  rec.payload.assign(n_p, 0);
  const std::size_t keep = std::min(payload_len, n_p);
  std::copy_n(b.begin() + static_cast<std::ptrdiff_t>(payload_start), keep, rec.payload.begin());
  if (payload_len > n_p) ++stats.truncated_payloads;
  return rec;
}

std::vector<PacketRecord> extract_all(std::span<const RawPacket> packets, std::size_t n_p, IngestStats& stats) {
  std::vector<PacketRecord> out;
  out.reserve(packets.size());
  for (const auto& p : packets) {
    ++stats.packets_read;
    try {
      out.push_back(extract_features(p, n_p, stats));
    } catch (const CaptureError& e) {
      if (e.kind() == CaptureError::Kind::UnsupportedProtocol) {
        ++stats.unsupported;
      } else {
        ++stats.malformed;
      }
    }
  }
  return out;
}

}  // namespace pktdt
