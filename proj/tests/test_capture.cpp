#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pktdt/capture.hpp"
#include "pktdt/json_util.hpp"

using namespace pktdt;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = PKTDT_FIXTURES;

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "pktdt_test_capture";
  fs::create_directories(dir);
  return dir;
}

void put16(std::vector<std::uint8_t>& b, unsigned v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

// Ethernet/IPv4/UDP frame carrying payload.
RawPacket udp_frame(const std::vector<std::uint8_t>& payload, double ts = 1.0) {
  std::vector<std::uint8_t> f(12, 0x02);
  put16(f, 0x0800);
  f.push_back(0x45);
  f.push_back(0);
  put16(f, static_cast<unsigned>(28 + payload.size()));
  put16(f, 0);
  put16(f, 0);
  f.push_back(64);
  f.push_back(17);
  put16(f, 0);
  for (std::uint8_t o : {10, 0, 0, 1, 10, 0, 0, 2}) f.push_back(o);
  put16(f, 1234);
  put16(f, 53);
  put16(f, static_cast<unsigned>(8 + payload.size()));
  put16(f, 0);
  f.insert(f.end(), payload.begin(), payload.end());
  RawPacket p;
  p.timestamp = ts;
  p.caplen = static_cast<std::uint32_t>(f.size());
  p.link_payload = std::move(f);
  return p;
}

PacketRecord rec(const std::string& src, std::uint16_t sport, const std::string& dst, std::uint16_t dport, double ts,
                 Protocol proto = Protocol::TCP) {
  PacketRecord r;
  r.src_ip = Ipv4::parse(src);
  r.dst_ip = Ipv4::parse(dst);
  r.src_port = sport;
  r.dst_port = dport;
  r.timestamp = ts;
  r.protocol = proto;
  r.payload.assign(4, 0);
  return r;
}

std::vector<std::uint8_t> capture_header_le() {
  std::vector<std::uint8_t> b{0xd4, 0xc3, 0xb2, 0xa1, 2, 0, 4, 0};
  b.resize(16, 0);
  for (std::uint8_t x : {0xff, 0xff, 0, 0, 1, 0, 0, 0}) b.push_back(x);
  return b;
}

}  // namespace

TEST_CASE("one 60-byte Ethernet/IPv4/UDP record parses to one packet") {
  auto bytes = capture_header_le();
  RawPacket frame = udp_frame({0x41, 0x42});
  frame.link_payload.resize(60, 0);
  const std::uint8_t rh[16] = {1, 0, 0, 0, 0, 0, 0, 0, 60, 0, 0, 0, 60, 0, 0, 0};
  bytes.insert(bytes.end(), rh, rh + 16);
  bytes.insert(bytes.end(), frame.link_payload.begin(), frame.link_payload.end());
  const auto pkts = parse_capture(bytes);
  REQUIRE(pkts.size() == 1);
  CHECK(pkts[0].caplen == 60);
  CHECK(pkts[0].link_payload.size() == 60);
}

TEST_CASE("zero magic is rejected") {
  std::vector<std::uint8_t> bytes(24, 0);
  try {
    parse_capture(bytes);
    FAIL("expected UnknownMagic");
  } catch (const CaptureError& e) {
    CHECK(e.kind() == CaptureError::Kind::UnknownMagic);
  }
}

TEST_CASE("record claiming more bytes than remain is truncated") {
  auto bytes = capture_header_le();
  const std::uint8_t rh[16] = {0, 0, 0, 0, 0, 0, 0, 0, 100, 0, 0, 0, 100, 0, 0, 0};
  bytes.insert(bytes.end(), rh, rh + 16);
  bytes.resize(bytes.size() + 40, 0);
  try {
    parse_capture(bytes);
    FAIL("expected TruncatedRecord");
  } catch (const CaptureError& e) {
    CHECK(e.kind() == CaptureError::Kind::TruncatedRecord);
    CHECK(e.offset() == 24);
  }
}

TEST_CASE("non-Ethernet link type is rejected") {
  auto bytes = capture_header_le();
  bytes[20] = 113;
  try {
    parse_capture(bytes);
    FAIL("expected UnsupportedLinkType");
  } catch (const CaptureError& e) {
    CHECK(e.kind() == CaptureError::Kind::UnsupportedLinkType);
  }
}

TEST_CASE("payload padding and truncation") {
  IngestStats stats;
  CHECK(extract_features(udp_frame({0x41, 0x42}), 4, stats).payload == std::vector<std::uint8_t>{65, 66, 0, 0});
  CHECK(extract_features(udp_frame({}), 3, stats).payload == std::vector<std::uint8_t>{0, 0, 0});
  CHECK(stats.truncated_payloads == 0);
  const auto r = extract_features(udp_frame({1, 2, 3, 4, 5, 6}), 4, stats);
  CHECK(r.payload == std::vector<std::uint8_t>{1, 2, 3, 4});
  CHECK(stats.truncated_payloads == 1);
  CHECK(r.label == Label::Unlabeled);
  CHECK(r.flow_id.empty());
  CHECK(r.src_port == 1234);
  CHECK(r.protocol == Protocol::UDP);
}

TEST_CASE("inconsistent IPv4 header length is malformed and skipped") {
  RawPacket p = udp_frame({1, 2});
  p.link_payload[14] = 0x4f;
  IngestStats stats;
  CHECK_THROWS_AS(extract_features(p, 4, stats), CaptureError);
  const auto out = extract_all(std::vector<RawPacket>{p, udp_frame({3})}, 4, stats);
  CHECK(out.size() == 1);
  CHECK(stats.malformed == 1);
  CHECK(stats.packets_read == 2);
}

TEST_CASE("golden capture fixtures") {
  const Json expected = read_json_file(kFixtures / "expected.json");
  const auto n_p = expected.at("n_p").get<std::size_t>();
  for (const char* name : {"le_micro.pcap", "be_micro.pcap", "le_nano.pcap"}) {
    CAPTURE(name);
    const Json& e = expected.at(name);
    const auto raw = parse_capture(kFixtures / name);
    REQUIRE(raw.size() == e.at("raw_count").get<std::size_t>());
    for (std::size_t i = 0; i < raw.size(); ++i) CHECK(raw[i].caplen == e.at("caplens")[i].get<std::uint32_t>());
    IngestStats stats;
    const auto records = extract_all(raw, n_p, stats);
    REQUIRE(records.size() == e.at("records").size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      const Json& x = e.at("records")[i];
      CHECK(records[i].timestamp == x.at("ts").get<double>());
      CHECK(records[i].src_ip.to_string() == x.at("src_ip").get<std::string>());
      CHECK(records[i].dst_ip.to_string() == x.at("dst_ip").get<std::string>());
      CHECK(records[i].src_port == x.at("src_port").get<int>());
      CHECK(records[i].dst_port == x.at("dst_port").get<int>());
      CHECK(to_string(records[i].protocol) == x.at("proto").get<std::string>());
      CHECK(records[i].payload == x.at("payload").get<std::vector<std::uint8_t>>());
    }
    const Json& s = e.at("stats");
    CHECK(stats.packets_read == s.at("packets_read").get<std::size_t>());
    CHECK(stats.malformed == s.at("malformed").get<std::size_t>());
    CHECK(stats.unsupported == s.at("unsupported").get<std::size_t>());
    CHECK(stats.truncated_payloads == s.at("truncated").get<std::size_t>());
  }
  try {
    parse_capture(kFixtures / "truncated.pcap");
    FAIL("expected TruncatedRecord");
  } catch (const CaptureError& e) {
    CHECK(e.kind() == CaptureError::Kind::TruncatedRecord);
    CHECK(e.offset() == expected.at("truncated.pcap").at("offset").get<std::size_t>());
  }
}

TEST_CASE("writer output parses back identically") {
  std::vector<RawPacket> pkts{udp_frame({1, 2, 3}, 1700000000.25), udp_frame({9}, 1700000001.000001)};
  const auto path = temp_dir() / "rt.pcap";
  write_capture(path, pkts);
  CHECK(parse_capture(path) == pkts);
}

TEST_CASE("missing capture file is a clear error") {
  CHECK_THROWS_WITH_AS(parse_capture(temp_dir() / "does-not-exist.pcap"), doctest::Contains("does-not-exist"),
                       DataError);
}

TEST_CASE("group_flows canonicalizes direction and splits on the gap timeout") {
  auto a = rec("10.0.0.1", 1000, "10.0.0.2", 80, 0.0);
  auto b = rec("10.0.0.2", 80, "10.0.0.1", 1000, 1.0);
  auto flows = group_flows({a, b}, 60.0);
  REQUIRE(flows.size() == 1);
  CHECK(flows[0].packet_count() == 2);
  CHECK(flows[0].packets[0].flow_id == flows[0].flow_id);

  auto c = rec("10.0.0.1", 1000, "10.0.0.2", 80, 120.0);
  CHECK(group_flows({a, c}, 60.0).size() == 2);
  CHECK(group_flows({}, 60.0).empty());
}

TEST_CASE("group_flows is permutation invariant and conserves packets") {
  std::mt19937_64 rng(5);
  std::vector<PacketRecord> records;
  std::uniform_int_distribution<int> host(1, 4), port(1, 3);
  std::uniform_real_distribution<double> ts(0.0, 500.0);
  for (int i = 0; i < 200; ++i) {
    auto r = rec("10.0.0." + std::to_string(host(rng)), static_cast<std::uint16_t>(port(rng)),
                 "10.0.1." + std::to_string(host(rng)), static_cast<std::uint16_t>(port(rng)), ts(rng),
                 i % 3 ? Protocol::TCP : Protocol::UDP);
    records.push_back(r);
  }
  const auto base = group_flows(records, 60.0);
  std::size_t total = 0;
  for (const auto& f : base) {
    total += f.packet_count();
    CHECK(std::is_sorted(f.packets.begin(), f.packets.end(),
                         [](const PacketRecord& x, const PacketRecord& y) { return x.timestamp < y.timestamp; }));
    CHECK(f.duration() >= 0.0);
  }
  CHECK(total == records.size());
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(records.begin(), records.end(), rng);
    CHECK(group_flows(records, 60.0) == base);
  }
}

TEST_CASE("label_flows propagates labels and drops unmatched flows") {
  Flow f1{"f1", {rec("1.1.1.1", 1, "2.2.2.2", 2, 0.0)}, Label::Unlabeled};
  Flow f2{"f2", {rec("1.1.1.1", 1, "2.2.2.2", 3, 0.0)}, Label::Unlabeled};
  std::size_t dropped = 0;
  auto out = label_flows({f1}, {{"f1", Label::Malicious}}, &dropped);
  REQUIRE(out.size() == 1);
  CHECK(out[0].label == Label::Malicious);
  CHECK(out[0].packets[0].label == Label::Malicious);
  CHECK(dropped == 0);

  CHECK(label_flows({f2}, {{"f1", Label::Malicious}}, &dropped).empty());
  CHECK(dropped == 1);
  dropped = 0;
  CHECK(label_flows({f1, f2}, {}, &dropped).empty());
  CHECK(dropped == 2);
}

TEST_CASE("JSONL round trip is field exact and byte stable") {
  IngestStats stats;
  auto records = extract_all(parse_capture(kFixtures / "le_micro.pcap"), 16, stats);
  records[0].label = Label::Malicious;
  records[1].flow_id = "abc";
  std::ostringstream first;
  write_records_jsonl(first, records);
  std::istringstream in(first.str());
  const auto back = read_records_jsonl(in);
  CHECK(back == records);
  std::ostringstream second;
  write_records_jsonl(second, back);
  CHECK(second.str() == first.str());
}

TEST_CASE("JSONL validation names the key and line") {
  std::istringstream in(
      "{\"ts\":1,\"src_ip\":\"1.2.3.4\",\"dst_ip\":\"1.2.3.5\",\"src_port\":1,\"dst_port\":2,\"proto\":\"TCP\","
      "\"payload\":[1],\"flow_id\":\"\",\"label\":null}\n"
      "{\"ts\":1,\"src_ip\":\"1.2.3.4\",\"dst_ip\":\"1.2.3.5\",\"src_port\":70000,\"dst_port\":2,\"proto\":\"TCP\","
      "\"payload\":[1],\"flow_id\":\"\",\"label\":null}\n");
  CHECK_THROWS_WITH_AS(read_records_jsonl(in, "recs.jsonl"), doctest::Contains("recs.jsonl:2: key 'src_port'"),
                       DataError);
  std::istringstream bad_payload(
      "{\"ts\":1,\"src_ip\":\"1.2.3.4\",\"dst_ip\":\"1.2.3.5\",\"src_port\":1,\"dst_port\":2,\"proto\":\"TCP\","
      "\"payload\":[256],\"flow_id\":\"\",\"label\":null}\n");
  CHECK_THROWS_WITH_AS(read_records_jsonl(bad_payload, "p.jsonl"), doctest::Contains("key 'payload'"), DataError);
}

TEST_CASE("label table CSV") {
  const auto path = temp_dir() / "truth.csv";
  write_label_table(path, {{"a", Label::Benign}, {"b", Label::Malicious}});
  const auto t = read_label_table(path);
  CHECK(t.at("a") == Label::Benign);
  CHECK(t.at("b") == Label::Malicious);
  {
    std::ofstream f(path);
    f << "flow_id,label\na,1\na,0\n";
  }
  CHECK_THROWS_WITH_AS(read_label_table(path), doctest::Contains("duplicate"), DataError);
  {
    std::ofstream f(path);
    f << "id,label\n";
  }
  CHECK_THROWS_AS(read_label_table(path), DataError);
}
