#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pktdt/error.hpp"

namespace pktdt {

inline constexpr std::size_t kDefaultPayloadBytes = 1500;
inline constexpr double kDefaultGapTimeout = 60.0;

enum class Protocol : std::uint8_t { TCP = 0, UDP = 1, OTHER = 2 };

enum class Label : std::int8_t { Unlabeled = -1, Benign = 0, Malicious = 1 };

const char* to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);

struct Ipv4 {
  std::array<std::uint8_t, 4> octets{};

  std::string to_string() const;
  static Ipv4 parse(const std::string& dotted);

  friend auto operator<=>(const Ipv4&, const Ipv4&) = default;
};

// One captured frame as it appears in the capture file.
struct RawPacket {
  double timestamp = 0.0;  // seconds since epoch, microsecond resolution
  std::vector<std::uint8_t> link_payload;
  std::uint32_t caplen = 0;

  friend bool operator==(const RawPacket&, const RawPacket&) = default;
};

struct PacketRecord {
  double timestamp = 0.0;
  Ipv4 src_ip;
  Ipv4 dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Protocol protocol = Protocol::OTHER;
  std::vector<std::uint8_t> payload;  // exactly N_p entries
  std::string flow_id;
  Label label = Label::Unlabeled;

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

struct Flow {
  std::string flow_id;
  std::vector<PacketRecord> packets;
  Label label = Label::Unlabeled;

  std::size_t packet_count() const { return packets.size(); }
  // t_last - t_first
  double duration() const;

  friend bool operator==(const Flow&, const Flow&) = default;
};

using LabelTable = std::map<std::string, Label>;

class CaptureError : public DataError {
 public:
  enum class Kind { UnknownMagic, TruncatedRecord, UnsupportedLinkType, MalformedHeader, UnsupportedProtocol };

  CaptureError(Kind kind, std::size_t offset, const std::string& what);

  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

// Counters surfaced by ingest for auditing.
struct IngestStats {
  std::size_t packets_read = 0;
  std::size_t malformed = 0;
  std::size_t unsupported = 0;  // non-IPv4 frames
  std::size_t truncated_payloads = 0;
  std::size_t flows = 0;
  std::size_t dropped_flows = 0;
};

// Classic libpcap reader (both byte orders, microsecond or nanosecond
// variants, Ethernet link type only).
std::vector<RawPacket> parse_capture(const std::filesystem::path& path);
std::vector<RawPacket> parse_capture(std::span<const std::uint8_t> bytes);

// Little-endian classic pcap writer with Ethernet link type.
void write_capture(const std::filesystem::path& path, std::span<const RawPacket> packets);

// Decodes Ethernet/IPv4/{TCP,UDP,other}. Throws CaptureError(MalformedHeader)
// or CaptureError(UnsupportedProtocol) for frames it cannot decode. The
// payload is zero-padded or truncated to n_p bytes; truncations are counted.
PacketRecord extract_features(const RawPacket& pkt, std::size_t n_p, IngestStats& stats);

// Runs extract_features over a capture, skipping and counting bad frames.
std::vector<PacketRecord> extract_all(std::span<const RawPacket> packets, std::size_t n_p, IngestStats& stats);

// Bidirectional 5-tuple grouping with an inter-packet gap timeout.
std::vector<Flow> group_flows(std::vector<PacketRecord> records, double gap_timeout = kDefaultGapTimeout);

// Grouping for records that already carry a flow_id.
std::vector<Flow> group_by_flow_id(std::vector<PacketRecord> records);

// Keeps flows present in truth (labels propagated to every packet); drops the
// rest and adds them to *dropped.
std::vector<Flow> label_flows(std::vector<Flow> flows, const LabelTable& truth, std::size_t* dropped = nullptr);

// Canonical JSONL packet record interchange format.
void write_records_jsonl(std::ostream& out, std::span<const PacketRecord> records);
std::vector<PacketRecord> read_records_jsonl(std::istream& in, const std::string& origin = "<jsonl>");
void write_flows_jsonl(const std::filesystem::path& path, std::span<const Flow> flows);
std::vector<Flow> read_flows_jsonl(const std::filesystem::path& path);

// Ground truth CSV with header "flow_id,label".
LabelTable read_label_table(const std::filesystem::path& path);
void write_label_table(const std::filesystem::path& path, const LabelTable& table);

}  // namespace pktdt
