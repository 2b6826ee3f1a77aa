#include <cmath>
#include <fstream>
#include <iterator>

#include "pktdt/capture.hpp"

namespace pktdt {
namespace {

constexpr std::uint32_t kMagicMicros = 0xA1B2C3D4;
constexpr std::uint32_t kMagicNanos = 0xA1B23C4D;
constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::size_t kGlobalHeaderLen = 24;
constexpr std::size_t kRecordHeaderLen = 16;

std::uint32_t load_u32(std::span<const std::uint8_t> b, std::size_t at, bool big_endian) {
  if (big_endian) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
  }
  return std::uint32_t{b[at]} | (std::uint32_t{b[at + 1]} << 8) | (std::uint32_t{b[at + 2]} << 16) |
         (std::uint32_t{b[at + 3]} << 24);
}

void store_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void store_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

std::vector<RawPacket> parse_capture(std::span<const std::uint8_t> bytes) {
  using Kind = CaptureError::Kind;
  if (bytes.size() < 4) throw CaptureError(Kind::UnknownMagic, 0, "file too short for a capture header");

  const std::uint32_t magic_le = load_u32(bytes, 0, false);
  bool big_endian = false;
  bool nanos = false;
  if (magic_le == kMagicMicros || magic_le == kMagicNanos) {
    nanos = magic_le == kMagicNanos;
  } else {
    const std::uint32_t magic_be = load_u32(bytes, 0, true);
    if (magic_be != kMagicMicros && magic_be != kMagicNanos) {
      throw CaptureError(Kind::UnknownMagic, 0, "unrecognized capture magic number");
    }
    big_endian = true;
    nanos = magic_be == kMagicNanos;
  }
  if (bytes.size() < kGlobalHeaderLen) {
    throw CaptureError(Kind::TruncatedRecord, 0, "global header shorter than 24 bytes");
  }
  const std::uint32_t link_type = load_u32(bytes, 20, big_endian);
  if (link_type != kLinkEthernet) {
    throw CaptureError(Kind::UnsupportedLinkType, 20, "link type " + std::to_string(link_type) + " is not Ethernet");
  }

  const double frac_scale = nanos ? 1e-9 : 1e-6;
  std::vector<RawPacket> out;
  std::size_t pos = kGlobalHeaderLen;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < kRecordHeaderLen) {
      throw CaptureError(Kind::TruncatedRecord, pos, "record header truncated");
    }
    const std::uint32_t ts_sec = load_u32(bytes, pos, big_endian);
    const std::uint32_t ts_frac = load_u32(bytes, pos + 4, big_endian);
    const std::uint32_t caplen = load_u32(bytes, pos + 8, big_endian);
    const std::size_t body = pos + kRecordHeaderLen;
    if (caplen > bytes.size() - body) {
      throw CaptureError(Kind::TruncatedRecord, pos,
                         "record declares caplen " + std::to_string(caplen) + " but only " +
                             std::to_string(bytes.size() - body) + " bytes remain");
    }
    RawPacket pkt;
    pkt.timestamp = static_cast<double>(ts_sec) + static_cast<double>(ts_frac) * frac_scale;
    pkt.caplen = caplen;
    pkt.link_payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(body),
                            bytes.begin() + static_cast<std::ptrdiff_t>(body + caplen));
    out.push_back(std::move(pkt));
    pos = body + caplen;
  }
  return out;
}

std::vector<RawPacket> parse_capture(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open capture " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return parse_capture(bytes);
  } catch (const CaptureError& e) {
    throw CaptureError(e.kind(), e.offset(), path.string() + ": " + e.what());
  }
}

void write_capture(const std::filesystem::path& path, std::span<const RawPacket> packets) {
  std::string out;
  store_u32le(out, kMagicMicros);
  store_u16le(out, 2);
  store_u16le(out, 4);
  store_u32le(out, 0);       // thiszone
  store_u32le(out, 0);       // sigfigs
  store_u32le(out, 65535);   // snaplen
  store_u32le(out, kLinkEthernet);
  for (const auto& p : packets) {
    const auto sec = static_cast<std::uint32_t>(p.timestamp);
    auto usec = static_cast<std::uint32_t>(std::llround((p.timestamp - sec) * 1e6));
    store_u32le(out, sec + usec / 1000000);
    store_u32le(out, usec % 1000000);
    store_u32le(out, static_cast<std::uint32_t>(p.link_payload.size()));
    store_u32le(out, static_cast<std::uint32_t>(p.link_payload.size()));
    out.append(p.link_payload.begin(), p.link_payload.end());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace pktdt
