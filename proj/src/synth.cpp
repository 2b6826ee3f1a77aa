#include "pktdt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace pktdt {

void SynthConfig::validate() const {
  if (n_flows == 0) throw DataError("synth: n_flows must be positive");
  if (min_len == 0 || max_len < min_len) throw DataError("synth: need 1 <= min_len <= max_len");
  if (pattern_len == 0 || pattern_len > n_p) throw DataError("synth: pattern_len must lie in [1, n_p]");
  if (!(plant_rate >= 0.0 && plant_rate <= 1.0)) throw DataError("synth: plant_rate must lie in [0,1]");
  if (!(malicious_fraction >= 0.0 && malicious_fraction <= 1.0)) {
    throw DataError("synth: malicious_fraction must lie in [0,1]");
  }
  if (!(mean_gap > 0.0) || !std::isfinite(mean_gap)) throw DataError("synth: mean_gap must be positive");
}

bool contains_pattern(const std::vector<std::uint8_t>& payload, std::uint8_t pattern_byte, std::size_t pattern_len) {
  std::size_t run = 0;
  for (auto b : payload) {
    run = b == pattern_byte ? run + 1 : 0;
    if (run >= pattern_len) return true;
  }
  return false;
}

SynthOutput synthesize(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> len_dist(cfg.min_len, cfg.max_len);
  std::uniform_int_distribution<int> ascii(0x20, 0x7e);
  std::uniform_int_distribution<int> octet(1, 254);
  std::uniform_int_distribution<int> eph_port(1024, 65535);
  std::bernoulli_distribution is_malicious(cfg.malicious_fraction);
  std::bernoulli_distribution plant_later(cfg.plant_rate);
  std::bernoulli_distribution is_udp(0.25);
  std::exponential_distribution<double> gap(1.0 / cfg.mean_gap);
  std::uniform_real_distribution<double> start(0.0, 86400.0);
  std::uniform_int_distribution<std::size_t> offset(0, cfg.n_p - cfg.pattern_len);
  const int service_ports[] = {22, 25, 53, 80, 123, 443, 445, 8080};
  std::uniform_int_distribution<std::size_t> service(0, std::size(service_ports) - 1);

  const auto micro = [](double s) { return std::round(s * 1e6) / 1e6; };

  SynthOutput out;
  for (std::size_t n = 0; n < cfg.n_flows; ++n) {
    char id[32];
    std::snprintf(id, sizeof id, "synth-%06zu", n);
    const Label label = is_malicious(rng) ? Label::Malicious : Label::Benign;
    const std::size_t len = len_dist(rng);
    PacketRecord proto;
    for (auto& o : proto.src_ip.octets) o = static_cast<std::uint8_t>(octet(rng));
    for (auto& o : proto.dst_ip.octets) o = static_cast<std::uint8_t>(octet(rng));
    proto.src_port = static_cast<std::uint16_t>(eph_port(rng));
    proto.dst_port = static_cast<std::uint16_t>(service_ports[service(rng)]);
    proto.protocol = is_udp(rng) ? Protocol::UDP : Protocol::TCP;
    proto.flow_id = id;
    proto.label = label;

    Flow flow;
    flow.flow_id = id;
    flow.label = label;
    double t = micro(start(rng));
    for (std::size_t i = 0; i < len; ++i) {
      PacketRecord p = proto;
      if (i > 0) {
        t = micro(t + std::max(gap(rng), 1e-6));
        // Replies travel in the reverse direction.
        if (i % 2 == 1) {
          std::swap(p.src_ip, p.dst_ip);
          std::swap(p.src_port, p.dst_port);
        }
      }
      p.timestamp = t;
      p.payload.resize(cfg.n_p);
      for (auto& b : p.payload) {
        int v;
        do v = ascii(rng);
        while (v == cfg.pattern_byte);
        b = static_cast<std::uint8_t>(v);
      }
      if (label == Label::Malicious && (i == 0 || plant_later(rng))) {
        const std::size_t at = offset(rng);
        std::fill_n(p.payload.begin() + static_cast<std::ptrdiff_t>(at), cfg.pattern_len, cfg.pattern_byte);
      }
      flow.packets.push_back(std::move(p));
    }
    out.truth[flow.flow_id] = label;
    out.flows.push_back(std::move(flow));
  }
  std::stable_sort(out.flows.begin(), out.flows.end(), [](const Flow& a, const Flow& b) {
    return a.packets.front().timestamp < b.packets.front().timestamp;
  });
  return out;
}

namespace {

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
}

RawPacket frame_of(const PacketRecord& p) {
  std::vector<std::uint8_t> f;
  for (int i = 0; i < 12; ++i) f.push_back(static_cast<std::uint8_t>(i < 6 ? 0x02 : 0x04));
  put16(f, 0x0800);
  const bool tcp = p.protocol == Protocol::TCP;
  const std::size_t l4 = tcp ? 20 : 8;
  const auto total = static_cast<std::uint16_t>(20 + l4 + p.payload.size());
  f.push_back(0x45);
  f.push_back(0);
  put16(f, total);
  put16(f, 0);
  put16(f, 0x4000);
  f.push_back(64);
  f.push_back(tcp ? 6 : 17);
  put16(f, 0);
  f.insert(f.end(), p.src_ip.octets.begin(), p.src_ip.octets.end());
  f.insert(f.end(), p.dst_ip.octets.begin(), p.dst_ip.octets.end());
  put16(f, p.src_port);
  put16(f, p.dst_port);
  if (tcp) {
    for (int i = 0; i < 8; ++i) f.push_back(0);
    f.push_back(0x50);
    f.push_back(0x18);
    put16(f, 65535);
    put16(f, 0);
    put16(f, 0);
  } else {
    put16(f, static_cast<std::uint16_t>(8 + p.payload.size()));
    put16(f, 0);
  }
  f.insert(f.end(), p.payload.begin(), p.payload.end());
  RawPacket raw;
  raw.timestamp = p.timestamp;
  raw.caplen = static_cast<std::uint32_t>(f.size());
  raw.link_payload = std::move(f);
  return raw;
}

}  // namespace

std::vector<RawPacket> synth_frames(const std::vector<Flow>& flows) {
  std::vector<const PacketRecord*> all;
  for (const auto& f : flows) {
    for (const auto& p : f.packets) all.push_back(&p);
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const PacketRecord* a, const PacketRecord* b) { return a->timestamp < b->timestamp; });
  std::vector<RawPacket> out;
  out.reserve(all.size());
  for (const auto* p : all) out.push_back(frame_of(*p));
  return out;
}

}  // namespace pktdt
