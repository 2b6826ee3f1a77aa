#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pktdt/baselines.hpp"
#include "pktdt/json_util.hpp"
#include "pktdt/sequence_model.hpp"
#include "pktdt/trajectory.hpp"

namespace pktdt {

class UnlabeledFlow : public DataError {
 public:
  explicit UnlabeledFlow(const std::string& id) : DataError("flow " + id + " has no ground-truth label") {}
};

class DegenerateNormalization : public DataError {
 public:
  DegenerateNormalization() : DataError("expert and random reference returns are equal; cannot normalize") {}
};

struct AgentDecision {
  int decision = kBenign;
  double wait = 0.0;  // predicted gap, diagnostics only
};

// Policy interface used by replay. Third-party agents plug in here.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  virtual void begin_episode(const EncodedFlow& flow, std::uint64_t episode_seed) {
    (void)flow;
    (void)episode_seed;
  }
  // context holds every step so far; its last entry is the pending step
  // (rtg, t and obs filled in, decision and wait unset).
  virtual AgentDecision decide(std::span<const Step> context, bool mask_wait) = 0;
};

class DtAgent : public Agent {
 public:
  explicit DtAgent(const SequenceModel& model) : model_(model) {}
  std::string name() const override { return "DT"; }
  AgentDecision decide(std::span<const Step> context, bool mask_wait) override;

 private:
  const SequenceModel& model_;
};

class BcAgent : public Agent {
 public:
  explicit BcAgent(const BcModel& model) : model_(model) {}
  std::string name() const override { return "BC"; }
  AgentDecision decide(std::span<const Step> context, bool mask_wait) override;

 private:
  const BcModel& model_;
};

// Replays the decisions the behavior policy would have sampled for the flow.
class ScriptedAgent : public Agent {
 public:
  ScriptedAgent(PolicyTag policy, RewardConfig cfg) : policy_(policy), cfg_(cfg) {}
  std::string name() const override { return to_string(policy_); }
  void begin_episode(const EncodedFlow& flow, std::uint64_t episode_seed) override;
  AgentDecision decide(std::span<const Step> context, bool mask_wait) override;

 private:
  PolicyTag policy_;
  RewardConfig cfg_;
  std::vector<int> script_;
};

struct EpisodeResult {
  std::string flow_id;
  Label label = Label::Unlabeled;
  int decision = kBenign;
  std::size_t decision_step = 0;  // 1-based
  double decision_time = 0.0;
  double episode_return = 0.0;
  double ttr = 0.0;
  std::vector<double> rtg;        // R^_1 .. R^_{decision_step}
  std::vector<double> rewards;    // r_1 .. r_{decision_step}
  std::vector<double> wait_pred;  // agent's w^ per step
};

double time_to_resolution(const EncodedFlow& flow, std::size_t decision_step);

EpisodeResult replay_episode(Agent& agent, const EncodedFlow& flow, double target_rtg, const RewardConfig& cfg,
                             std::uint64_t episode_seed = 0);

// Episode seeds are base_seed ^ flow index.
std::vector<EpisodeResult> replay_all(Agent& agent, std::span<const EncodedFlow> flows, double target_rtg,
                                      const RewardConfig& cfg, std::uint64_t base_seed = 0);

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> mean_return;
  std::optional<double> normalized_reward;
  std::optional<double> mean_ttr;
  Confusion counts;
};

// Positive class is malicious.
MetricsReport classification_metrics(const Confusion& c);
MetricsReport compute_metrics(std::span<const EpisodeResult> results, double expert_return, double random_return);

// Per-packet DNN evaluation; reward and TTR stay empty.
MetricsReport dnn_metrics(const Mlp& net, std::span<const EncodedFlow> flows);

struct ReferenceReturns {
  double expert_return = 0.0;
  double random_return = 0.0;
  double max_return = 0.0;
};

// Expert and Random mean replay returns on the test flows (repeats passes,
// pass k seeded with a hash of seed + k), and the best training trajectory return.
ReferenceReturns reference_returns(const OfflineDataset& train, std::span<const EncodedFlow> test_flows,
                                   std::uint64_t seed = 0, std::size_t repeats = 1);

Json metrics_to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const Json& j, const JsonWhere& where);

void write_episodes_jsonl(const std::filesystem::path& path, std::span<const EpisodeResult> results);

struct ReportRow {
  std::string dataset;
  std::string model;
  MetricsReport metrics;
};

// Aligned plain-text table with the columns
// Dataset | Model | Accuracy(%) | Precision | F1-Score | Recall | Reward | TTR
std::string render_table(std::span<const ReportRow> rows);
// Grouped bar chart of accuracy, normalized reward and TTR per row.
std::string render_svg(std::span<const ReportRow> rows);

}  // namespace pktdt
