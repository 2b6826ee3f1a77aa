#include <algorithm>
#include <cstdio>
#include <tuple>

#include "pktdt/capture.hpp"

namespace pktdt {
namespace {

struct FlowKey {
  Ipv4 lo_ip, hi_ip;
  std::uint16_t lo_port = 0, hi_port = 0;
  Protocol protocol = Protocol::OTHER;

  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

FlowKey canonical_key(const PacketRecord& r) {
  auto a = std::tie(r.src_ip, r.src_port);
  auto b = std::tie(r.dst_ip, r.dst_port);
  FlowKey k;
  k.protocol = r.protocol;
  if (b < a) {
    std::tie(k.lo_ip, k.lo_port, k.hi_ip, k.hi_port) = std::tie(r.dst_ip, r.dst_port, r.src_ip, r.src_port);
  } else {
    std::tie(k.lo_ip, k.lo_port, k.hi_ip, k.hi_port) = std::tie(r.src_ip, r.src_port, r.dst_ip, r.dst_port);
  }
  return k;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string make_flow_id(const FlowKey& k, double first_ts) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s:%u-%s:%u/%s@%.6f", k.lo_ip.to_string().c_str(), k.lo_port,
                k.hi_ip.to_string().c_str(), k.hi_port, to_string(k.protocol), first_ts);
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(fnv1a64(buf)));
  return out;
}

// Total order over record content so grouping does not depend on input order.
bool record_less(const PacketRecord& a, const PacketRecord& b) {
  return std::tie(a.timestamp, a.src_ip, a.src_port, a.dst_ip, a.dst_port, a.protocol, a.payload, a.flow_id,
                  a.label) < std::tie(b.timestamp, b.src_ip, b.src_port, b.dst_ip, b.dst_port, b.protocol,
                                      b.payload, b.flow_id, b.label);
}

Label common_label(const std::vector<PacketRecord>& packets) {
  const Label first = packets.front().label;
  for (const auto& p : packets) {
    if (p.label != first) return Label::Unlabeled;
  }
  return first;
}

void sort_flows(std::vector<Flow>& flows) {
  std::sort(flows.begin(), flows.end(), [](const Flow& a, const Flow& b) {
    return std::tie(a.packets.front().timestamp, a.flow_id) < std::tie(b.packets.front().timestamp, b.flow_id);
  });
}

}  // namespace

double Flow::duration() const {
  if (packets.empty()) return 0.0;
  return packets.back().timestamp - packets.front().timestamp;
}

std::vector<Flow> group_flows(std::vector<PacketRecord> records, double gap_timeout) {
  std::vector<std::pair<FlowKey, PacketRecord>> keyed;
  keyed.reserve(records.size());
  for (auto& r : records) keyed.emplace_back(canonical_key(r), std::move(r));
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return record_less(a.second, b.second);
  });

  std::vector<Flow> flows;
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    const bool new_flow = i == 0 || keyed[i].first != keyed[i - 1].first ||
                          keyed[i].second.timestamp - keyed[i - 1].second.timestamp > gap_timeout;
    if (new_flow) {
      flows.emplace_back();
      flows.back().flow_id = make_flow_id(keyed[i].first, keyed[i].second.timestamp);
    }
    flows.back().packets.push_back(std::move(keyed[i].second));
  }
  for (auto& f : flows) {
    for (auto& p : f.packets) p.flow_id = f.flow_id;
    f.label = common_label(f.packets);
  }
  sort_flows(flows);
  return flows;
}

std::vector<Flow> group_by_flow_id(std::vector<PacketRecord> records) {
  std::map<std::string, std::vector<PacketRecord>> by_id;
  for (auto& r : records) by_id[r.flow_id].push_back(std::move(r));
  std::vector<Flow> flows;
  for (auto& [id, packets] : by_id) {
    std::sort(packets.begin(), packets.end(), record_less);
    Flow f;
    f.flow_id = id;
    f.label = common_label(packets);
    f.packets = std::move(packets);
    flows.push_back(std::move(f));
  }
  sort_flows(flows);
  return flows;
}

std::vector<Flow> label_flows(std::vector<Flow> flows, const LabelTable& truth, std::size_t* dropped) {
  std::vector<Flow> out;
  out.reserve(flows.size());
  for (auto& f : flows) {
    const auto it = truth.find(f.flow_id);
    if (it == truth.end()) {
      if (dropped) ++*dropped;
      continue;
    }
    f.label = it->second;
    for (auto& p : f.packets) p.label = it->second;
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace pktdt
