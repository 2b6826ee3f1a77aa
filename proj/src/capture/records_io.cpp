#include <fstream>
#include <sstream>

#include "pktdt/capture.hpp"
#include "pktdt/json_util.hpp"

namespace pktdt {
namespace {

Json record_to_json(const PacketRecord& r) {
  Json j;
  j["ts"] = r.timestamp;
  j["src_ip"] = r.src_ip.to_string();
  j["dst_ip"] = r.dst_ip.to_string();
  j["src_port"] = r.src_port;
  j["dst_port"] = r.dst_port;
  j["proto"] = to_string(r.protocol);
  j["payload"] = r.payload;
  j["flow_id"] = r.flow_id;
  j["label"] = r.label == Label::Unlabeled ? Json(nullptr) : Json(static_cast<int>(r.label));
  return j;
}

PacketRecord record_from_json(const Json& j, const JsonWhere& w) {
  PacketRecord r;
  r.timestamp = require_number(j, "ts", w);
  if (r.timestamp < 0) w.fail("ts", "timestamp must be non-negative");
  try {
    r.src_ip = Ipv4::parse(require_string(j, "src_ip", w));
  } catch (const DataError& e) {
    w.fail("src_ip", e.what());
  }
  try {
    r.dst_ip = Ipv4::parse(require_string(j, "dst_ip", w));
  } catch (const DataError& e) {
    w.fail("dst_ip", e.what());
  }
  r.src_port = static_cast<std::uint16_t>(require_integer(j, "src_port", w, 0, 65535));
  r.dst_port = static_cast<std::uint16_t>(require_integer(j, "dst_port", w, 0, 65535));
  try {
    r.protocol = protocol_from_string(require_string(j, "proto", w));
  } catch (const DataError& e) {
    w.fail("proto", e.what());
  }
  const Json& payload = require_key(j, "payload", w);
  if (!payload.is_array()) w.fail("payload", "expected array of integers");
  r.payload.reserve(payload.size());
  for (const auto& b : payload) {
    if (!b.is_number_integer() || b.get<long long>() < 0 || b.get<long long>() > 255) {
      w.fail("payload", "expected integers in [0,255]");
    }
    r.payload.push_back(static_cast<std::uint8_t>(b.get<int>()));
  }
  if (const auto it = j.find("flow_id"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) w.fail("flow_id", "expected string");
    r.flow_id = it->get<std::string>();
  }
  if (const auto it = j.find("label"); it != j.end() && !it->is_null()) {
    r.label = static_cast<Label>(require_integer(j, "label", w, 0, 1));
  }
  return r;
}

}  // namespace

void write_records_jsonl(std::ostream& out, std::span<const PacketRecord> records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<PacketRecord> read_records_jsonl(std::istream& in, const std::string& origin) {
  std::vector<PacketRecord> out;
  for_each_jsonl(in, origin, [&](const Json& j, const JsonWhere& w) { out.push_back(record_from_json(j, w)); });
  return out;
}

void write_flows_jsonl(const std::filesystem::path& path, std::span<const Flow> flows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& f : flows) write_records_jsonl(out, f.packets);
}

std::vector<Flow> read_flows_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  auto records = read_records_jsonl(in, path.string());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].flow_id.empty()) {
      throw DataError(path.string() + ": record " + std::to_string(i + 1) + ": key 'flow_id': missing or empty");
    }
  }
  return group_by_flow_id(std::move(records));
}

LabelTable read_label_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || (line != "flow_id,label" && line != "flow_id,label\r")) {
    throw DataError(path.string() + ":1: expected header 'flow_id,label'");
  }
  LabelTable table;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw DataError(path.string() + ":" + std::to_string(n) + ": expected 2 columns");
    const std::string id = line.substr(0, comma);
    const std::string lab = line.substr(comma + 1);
    if (lab != "0" && lab != "1") {
      throw DataError(path.string() + ":" + std::to_string(n) + ": column 'label': expected 0 or 1");
    }
    if (!table.emplace(id, lab == "1" ? Label::Malicious : Label::Benign).second) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": duplicate flow_id '" + id + "'");
    }
  }
  return table;
}

void write_label_table(const std::filesystem::path& path, const LabelTable& table) {
  std::ostringstream out;
  out << "flow_id,label\n";
  for (const auto& [id, lab] : table) out << id << ',' << static_cast<int>(lab) << '\n';
  write_text_file(path, out.str());
}

}  // namespace pktdt
