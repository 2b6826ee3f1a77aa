#pragma once

#include <cstdint>
#include <vector>

#include "pktdt/capture.hpp"

namespace pktdt {

// Labeled synthetic traffic. Benign payloads are printable ASCII that never
// contains pattern_byte; every malicious flow carries a run of pattern_len
// copies of pattern_byte in its first packet (and each later packet with
// probability plant_rate), so the label is 1 iff the pattern appears.
struct SynthConfig {
  std::size_t n_flows = 2000;
  std::size_t min_len = 2;
  std::size_t max_len = 16;
  std::uint8_t pattern_byte = 0x90;
  std::size_t pattern_len = 16;
  double plant_rate = 0.5;
  double malicious_fraction = 0.5;
  double mean_gap = 1.0;  // seconds, exponential inter-arrival
  std::size_t n_p = 64;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct SynthOutput {
  std::vector<Flow> flows;  // sorted by first timestamp
  LabelTable truth;
};

SynthOutput synthesize(const SynthConfig& cfg);

// True iff payload contains pattern_len consecutive pattern_byte values.
bool contains_pattern(const std::vector<std::uint8_t>& payload, std::uint8_t pattern_byte, std::size_t pattern_len);

// Ethernet/IPv4/TCP-or-UDP frames for every packet, in timestamp order.
std::vector<RawPacket> synth_frames(const std::vector<Flow>& flows);

}  // namespace pktdt
