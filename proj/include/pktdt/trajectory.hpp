#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pktdt/capture.hpp"
#include "pktdt/error.hpp"

namespace pktdt {

// Decision alphabet: 0 flag benign, 1 flag malicious, 2 wait for the next packet.
inline constexpr int kBenign = 0;
inline constexpr int kMalicious = 1;
inline constexpr int kWait = 2;
inline constexpr int kNumDecisions = 3;

struct RewardConfig {
  double c_tp = 1.0;     // d=0, label 0
  double c_tn = 1.0;     // d=1, label 1
  double c_fp = -1.0;    // d=1, label 0
  double c_fn = -1.0;    // d=0, label 1
  double c_wait = -0.05; // d=2

  // Finite constants with correct decisions strictly preferred.
  void validate() const;
  friend bool operator==(const RewardConfig&, const RewardConfig&) = default;
};

class InvalidDecision : public DataError {
 public:
  explicit InvalidDecision(int d) : DataError("invalid decision " + std::to_string(d)) {}
};

// Case table: the d=0/label 0 case pays c_tp and d=1/label 1 pays c_tn.
double reward(int decision, Label label, const RewardConfig& cfg);

// Suffix sums: out[i] = r[i] + out[i+1].
std::vector<double> compute_rtg(std::span<const double> rewards);

// Observation layout: [z (N_b) | src octets/255 (4) | dst octets/255 (4) |
//                      src_port/65535 | dst_port/65535 | proto one-hot (3)]
inline constexpr std::size_t kHeaderFeatures = 13;
std::vector<double> build_observation(std::span<const double> z, const PacketRecord& pkt);

struct ObservedPacket {
  double t = 0.0;  // seconds since the flow's first packet
  std::vector<double> obs;
  friend bool operator==(const ObservedPacket&, const ObservedPacket&) = default;
};

// A labeled flow whose packets have been turned into observations.
struct EncodedFlow {
  std::string flow_id;
  Label label = Label::Unlabeled;
  std::vector<ObservedPacket> packets;

  double duration() const { return packets.empty() ? 0.0 : packets.back().t - packets.front().t; }
  friend bool operator==(const EncodedFlow&, const EncodedFlow&) = default;
};

// embeddings[i] is the payload embedding of flow.packets[i].
EncodedFlow encode_flow(const Flow& flow, std::span<const std::vector<double>> embeddings);

struct Step {
  double t = 0.0;
  double rtg = 0.0;
  std::vector<double> obs;
  int decision = kWait;
  double wait = 0.0;  // gap to the next packet, 0 at the flow's last packet
  double reward = 0.0;
  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  std::string flow_id;
  Label label = Label::Unlabeled;
  std::vector<Step> steps;

  double episode_return() const { return steps.empty() ? 0.0 : steps.front().rtg; }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

enum class PolicyTag { Expert, Medium, Random };
enum class Split { Train, Test };

const char* to_string(PolicyTag p);
PolicyTag policy_from_string(const std::string& s);
const char* to_string(Split s);

struct OfflineDataset {
  std::vector<Trajectory> trajectories;
  PolicyTag policy = PolicyTag::Expert;
  RewardConfig reward;
  Split split = Split::Train;

  std::size_t obs_dim() const;
  double max_return() const;
};

// Behavior policies used to generate offline data:
//   Expert: stops at a uniform index in [1, ceil(I/2)], correct w.p. 0.9
//   Medium: stops at a uniform index in [1, I], correct w.p. 0.5
//   Random: uniform over {0,1,2} per step, wait masked at the last packet
Trajectory simulate_policy(const EncodedFlow& flow, PolicyTag policy, const RewardConfig& cfg, std::uint64_t seed);

// Per-flow seeds are base_seed ^ flow index.
OfflineDataset simulate_dataset(std::span<const EncodedFlow> flows, PolicyTag policy, const RewardConfig& cfg,
                                std::uint64_t base_seed, Split split = Split::Train);

// Fills rewards and RTGs from a decision sequence over the first
// decisions.size() packets of a flow.
Trajectory make_trajectory(const EncodedFlow& flow, std::span<const int> decisions, const RewardConfig& cfg);

class MissingClass : public DataError {
 public:
  MissingClass() : DataError("oversampling needs at least one benign and one malicious flow") {}
};

// Duplicates malicious flows (sampling with replacement) until the malicious
// count reaches 0.9 x benign count, then shuffles.
template <typename FlowT>
std::vector<FlowT> balance_oversample(std::vector<FlowT> flows, std::uint64_t seed) {
  std::vector<std::size_t> malicious;
  std::size_t benign = 0;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    if (flows[i].label == Label::Malicious) malicious.push_back(i);
    if (flows[i].label == Label::Benign) ++benign;
  }
  if (malicious.empty() || benign == 0) throw MissingClass();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, malicious.size() - 1);
  std::size_t count = malicious.size();
  while (static_cast<double>(count) < 0.9 * static_cast<double>(benign)) {
    flows.push_back(flows[malicious[pick(rng)]]);
    ++count;
  }
  std::shuffle(flows.begin(), flows.end(), rng);
  return flows;
}

// Flow-granular, label-stratified split. The test set receives
// round(n * test_fraction) flows, apportioned over labels by largest remainder.
template <typename FlowT>
std::pair<std::vector<FlowT>, std::vector<FlowT>> split_dataset(std::vector<FlowT> flows, double test_fraction,
                                                                std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw DataError("test_fraction must lie in [0,1]");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> by_label(3);
  for (std::size_t i = 0; i < flows.size(); ++i) by_label[static_cast<std::size_t>(static_cast<int>(flows[i].label) + 1)].push_back(i);

  const auto total = static_cast<std::size_t>(std::llround(static_cast<double>(flows.size()) * test_fraction));
  std::vector<std::size_t> quota(3);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double exact = static_cast<double>(by_label[c].size()) * test_fraction;
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(-(exact - std::floor(exact)), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k) {
    const std::size_t c = remainders[k].second;
    if (quota[c] < by_label[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }

  std::vector<char> to_test(flows.size(), 0);
  for (std::size_t c = 0; c < 3; ++c) {
    std::shuffle(by_label[c].begin(), by_label[c].end(), rng);
    for (std::size_t k = 0; k < quota[c]; ++k) to_test[by_label[c][k]] = 1;
  }
  std::pair<std::vector<FlowT>, std::vector<FlowT>> out;
  for (std::size_t i = 0; i < flows.size(); ++i) (to_test[i] ? out.second : out.first).push_back(std::move(flows[i]));
  return out;
}

// A contiguous run of steps [begin, end) of one trajectory.
struct Window {
  std::size_t trajectory = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  friend bool operator==(const Window&, const Window&) = default;
};

// Draws a trajectory with probability proportional to weight x step count,
// then a uniform end index; the window holds the last <= K steps up to it.
Window sample_window(std::span<const Trajectory> trajectories, std::size_t k, std::mt19937_64& rng,
                     std::span<const double> weights = {});

std::span<const Step> window_steps(std::span<const Trajectory> trajectories, const Window& w);

// JSONL persistence: one trajectory per line plus a "<path>.meta.json"
// sidecar holding policy, split and reward constants.
void write_dataset(const std::filesystem::path& path, const OfflineDataset& ds);
OfflineDataset read_dataset(const std::filesystem::path& path);

// Encoded flows: {"flow_id","label","packets":[{"t","obs"}]} per line.
void write_encoded_flows(const std::filesystem::path& path, std::span<const EncodedFlow> flows);
std::vector<EncodedFlow> read_encoded_flows(const std::filesystem::path& path);

}  // namespace pktdt
