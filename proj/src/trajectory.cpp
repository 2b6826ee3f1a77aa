#include "pktdt/trajectory.hpp"

#include <fstream>
#include <limits>

#include "pktdt/json_util.hpp"

namespace pktdt {

void RewardConfig::validate() const {
  for (double c : {c_tp, c_tn, c_fp, c_fn, c_wait}) {
    if (!std::isfinite(c)) throw DataError("reward constants must be finite");
  }
  if (!(c_tp > c_fn) || !(c_tn > c_fp)) {
    throw DataError("reward constants must strictly prefer correct decisions (c_tp > c_fn, c_tn > c_fp)");
  }
}

double reward(int decision, Label label, const RewardConfig& cfg) {
  if (decision == kWait) return cfg.c_wait;
  if (decision != kBenign && decision != kMalicious) throw InvalidDecision(decision);
  if (label == Label::Unlabeled) throw DataError("reward: flow is unlabeled");
  const bool malicious = label == Label::Malicious;
  if (decision == kBenign) return malicious ? cfg.c_fn : cfg.c_tp;
  return malicious ? cfg.c_tn : cfg.c_fp;
}

std::vector<double> compute_rtg(std::span<const double> rewards) {
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = (i + 1 == rewards.size()) ? rewards[i] : acc + rewards[i];
    out[i] = acc;
  }
  return out;
}

std::vector<double> build_observation(std::span<const double> z, const PacketRecord& pkt) {
  std::vector<double> o(z.begin(), z.end());
  o.reserve(z.size() + kHeaderFeatures);
  for (auto b : pkt.src_ip.octets) o.push_back(b / 255.0);
  for (auto b : pkt.dst_ip.octets) o.push_back(b / 255.0);
  o.push_back(pkt.src_port / 65535.0);
  o.push_back(pkt.dst_port / 65535.0);
  o.push_back(pkt.protocol == Protocol::TCP ? 1.0 : 0.0);
  o.push_back(pkt.protocol == Protocol::UDP ? 1.0 : 0.0);
  o.push_back(pkt.protocol == Protocol::OTHER ? 1.0 : 0.0);
  return o;
}

EncodedFlow encode_flow(const Flow& flow, std::span<const std::vector<double>> embeddings) {
  if (embeddings.size() != flow.packets.size()) {
    throw DimensionMismatch("flow " + flow.flow_id + ": " + std::to_string(embeddings.size()) + " embeddings for " +
                            std::to_string(flow.packets.size()) + " packets");
  }
  EncodedFlow ef;
  ef.flow_id = flow.flow_id;
  ef.label = flow.label;
  const double t0 = flow.packets.empty() ? 0.0 : flow.packets.front().timestamp;
  for (std::size_t i = 0; i < flow.packets.size(); ++i) {
    ef.packets.push_back({flow.packets[i].timestamp - t0, build_observation(embeddings[i], flow.packets[i])});
  }
  return ef;
}

const char* to_string(PolicyTag p) {
  switch (p) {
    case PolicyTag::Expert: return "expert";
    case PolicyTag::Medium: return "medium";
    case PolicyTag::Random: return "random";
  }
  return "expert";
}

PolicyTag policy_from_string(const std::string& s) {
  if (s == "expert" || s == "Expert") return PolicyTag::Expert;
  if (s == "medium" || s == "Medium") return PolicyTag::Medium;
  if (s == "random" || s == "Random") return PolicyTag::Random;
  throw DataError("unknown policy '" + s + "' (expected expert, medium or random)");
}

const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }

std::size_t OfflineDataset::obs_dim() const {
  for (const auto& t : trajectories) {
    if (!t.steps.empty()) return t.steps.front().obs.size();
  }
  return 0;
}

double OfflineDataset::max_return() const {
  if (trajectories.empty()) throw DataError("max_return: empty dataset");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& t : trajectories) best = std::max(best, t.episode_return());
  return best;
}

Trajectory make_trajectory(const EncodedFlow& flow, std::span<const int> decisions, const RewardConfig& cfg) {
  if (decisions.empty() || decisions.size() > flow.packets.size()) {
    throw DataError("flow " + flow.flow_id + ": decision count outside [1, I_n]");
  }
  Trajectory tr;
  tr.flow_id = flow.flow_id;
  tr.label = flow.label;
  std::vector<double> rewards;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    Step s;
    s.t = flow.packets[i].t;
    s.obs = flow.packets[i].obs;
    s.decision = decisions[i];
    s.wait = i + 1 < flow.packets.size() ? flow.packets[i + 1].t - flow.packets[i].t : 0.0;
    s.reward = reward(decisions[i], flow.label, cfg);
    rewards.push_back(s.reward);
    tr.steps.push_back(std::move(s));
  }
  const auto rtg = compute_rtg(rewards);
  for (std::size_t i = 0; i < rtg.size(); ++i) tr.steps[i].rtg = rtg[i];
  return tr;
}

Trajectory simulate_policy(const EncodedFlow& flow, PolicyTag policy, const RewardConfig& cfg, std::uint64_t seed) {
  if (flow.label == Label::Unlabeled) throw DataError("simulate_policy: flow " + flow.flow_id + " is unlabeled");
  const std::size_t n = flow.packets.size();
  if (n == 0) throw DataError("simulate_policy: flow " + flow.flow_id + " has no packets");
  const int truth = flow.label == Label::Malicious ? kMalicious : kBenign;
  std::mt19937_64 rng(seed);
  std::vector<int> decisions;

  auto scripted = [&](std::size_t last_index, double accuracy) {
    std::uniform_int_distribution<std::size_t> stop(1, last_index);
    const std::size_t terminal = stop(rng);
    const bool correct = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < accuracy;
    decisions.assign(terminal - 1, kWait);
    decisions.push_back(correct ? truth : 1 - truth);
  };

  switch (policy) {
    case PolicyTag::Expert: scripted((n + 1) / 2, 0.9); break;
    case PolicyTag::Medium: scripted(n, 0.5); break;
    case PolicyTag::Random: {
      std::uniform_int_distribution<int> any(0, 2);
      std::uniform_int_distribution<int> final_choice(0, 1);
      for (std::size_t i = 0; i < n; ++i) {
        const int d = i + 1 == n ? final_choice(rng) : any(rng);
        decisions.push_back(d);
        if (d != kWait) break;
      }
      break;
    }
  }
  return make_trajectory(flow, decisions, cfg);
}

OfflineDataset simulate_dataset(std::span<const EncodedFlow> flows, PolicyTag policy, const RewardConfig& cfg,
                                std::uint64_t base_seed, Split split) {
  OfflineDataset ds;
  ds.policy = policy;
  ds.reward = cfg;
  ds.split = split;
  ds.trajectories.reserve(flows.size());
  for (std::size_t i = 0; i < flows.size(); ++i) {
    ds.trajectories.push_back(simulate_policy(flows[i], policy, cfg, base_seed ^ static_cast<std::uint64_t>(i)));
  }
  return ds;
}

Window sample_window(std::span<const Trajectory> trajectories, std::size_t k, std::mt19937_64& rng,
                     std::span<const double> weights) {
  if (k == 0) throw DataError("sample_window: K must be at least 1");
  if (!weights.empty() && weights.size() != trajectories.size()) {
    throw DimensionMismatch("sample_window: one weight per trajectory required");
  }
  std::vector<double> cumulative(trajectories.size());
  double total = 0.0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("sample_window: weights must be finite and non-negative");
    total += w * static_cast<double>(trajectories[i].steps.size());
    cumulative[i] = total;
  }
  if (!(total > 0.0)) throw DataError("sample_window: no steps to sample");
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) --it;
  // Skip zero-mass entries that share the boundary.
  while (it != cumulative.begin() && *(it - 1) == *it) --it;
  Window w;
  w.trajectory = static_cast<std::size_t>(it - cumulative.begin());
  const std::size_t len = trajectories[w.trajectory].steps.size();
  w.end = std::uniform_int_distribution<std::size_t>(1, len)(rng);
  w.begin = w.end > k ? w.end - k : 0;
  return w;
}

std::span<const Step> window_steps(std::span<const Trajectory> trajectories, const Window& w) {
  const auto& steps = trajectories[w.trajectory].steps;
  return std::span<const Step>(steps).subspan(w.begin, w.length());
}

namespace {

Json reward_to_json(const RewardConfig& r) {
  return Json{{"c_tp", r.c_tp}, {"c_tn", r.c_tn}, {"c_fp", r.c_fp}, {"c_fn", r.c_fn}, {"c_wait", r.c_wait}};
}

RewardConfig reward_from_json(const Json& j, const JsonWhere& w) {
  RewardConfig r;
  r.c_tp = require_number(j, "c_tp", w);
  r.c_tn = require_number(j, "c_tn", w);
  r.c_fp = require_number(j, "c_fp", w);
  r.c_fn = require_number(j, "c_fn", w);
  r.c_wait = require_number(j, "c_wait", w);
  return r;
}

std::vector<double> number_array(const Json& j, const std::string& key, const JsonWhere& w) {
  const Json& arr = require_key(j, key, w);
  if (!arr.is_array()) w.fail(key, "expected array of numbers");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) w.fail(key, "expected array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

Label label_from_json(const Json& j, const JsonWhere& w) {
  return static_cast<Label>(require_integer(j, "label", w, 0, 1));
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const OfflineDataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& tr : ds.trajectories) {
    Json steps = Json::array();
    for (const auto& s : tr.steps) {
      steps.push_back(Json{{"t", s.t}, {"rtg", s.rtg}, {"obs", s.obs}, {"d", s.decision}, {"w", s.wait}, {"r", s.reward}});
    }
    Json line{{"flow_id", tr.flow_id}, {"label", static_cast<int>(tr.label)}, {"policy", to_string(ds.policy)},
              {"steps", std::move(steps)}};
    out << line.dump() << '\n';
  }
  Json meta{{"policy", to_string(ds.policy)}, {"split", to_string(ds.split)}, {"reward", reward_to_json(ds.reward)},
            {"obs_dim", ds.obs_dim()}, {"trajectories", ds.trajectories.size()}};
  write_text_file(path.string() + ".meta.json", meta.dump(2) + "\n");
}

OfflineDataset read_dataset(const std::filesystem::path& path) {
  OfflineDataset ds;
  const std::string meta_path = path.string() + ".meta.json";
  const Json meta = read_json_file(meta_path);
  const JsonWhere mw{meta_path, 0};
  ds.policy = policy_from_string(require_string(meta, "policy", mw));
  const std::string split = require_string(meta, "split", mw);
  if (split != "train" && split != "test") mw.fail("split", "expected train or test");
  ds.split = split == "train" ? Split::Train : Split::Test;
  ds.reward = reward_from_json(require_key(meta, "reward", mw), mw);

  for_each_jsonl(path, [&](const Json& j, const JsonWhere& w) {
    Trajectory tr;
    tr.flow_id = require_string(j, "flow_id", w);
    tr.label = label_from_json(j, w);
    if (policy_from_string(require_string(j, "policy", w)) != ds.policy) w.fail("policy", "differs from dataset policy");
    const Json& steps = require_key(j, "steps", w);
    if (!steps.is_array() || steps.empty()) w.fail("steps", "expected non-empty array");
    for (const auto& sj : steps) {
      Step s;
      s.t = require_number(sj, "t", w);
      s.rtg = require_number(sj, "rtg", w);
      s.obs = number_array(sj, "obs", w);
      s.decision = static_cast<int>(require_integer(sj, "d", w, 0, 2));
      s.wait = require_number(sj, "w", w);
      s.reward = require_number(sj, "r", w);
      tr.steps.push_back(std::move(s));
    }
    ds.trajectories.push_back(std::move(tr));
  });
  return ds;
}

void write_encoded_flows(const std::filesystem::path& path, std::span<const EncodedFlow> flows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& f : flows) {
    Json packets = Json::array();
    for (const auto& p : f.packets) packets.push_back(Json{{"t", p.t}, {"obs", p.obs}});
    out << Json{{"flow_id", f.flow_id}, {"label", static_cast<int>(f.label)}, {"packets", std::move(packets)}}.dump()
        << '\n';
  }
}

std::vector<EncodedFlow> read_encoded_flows(const std::filesystem::path& path) {
  std::vector<EncodedFlow> flows;
  for_each_jsonl(path, [&](const Json& j, const JsonWhere& w) {
    EncodedFlow f;
    f.flow_id = require_string(j, "flow_id", w);
    f.label = label_from_json(j, w);
    const Json& packets = require_key(j, "packets", w);
    if (!packets.is_array() || packets.empty()) w.fail("packets", "expected non-empty array");
    for (const auto& pj : packets) f.packets.push_back({require_number(pj, "t", w), number_array(pj, "obs", w)});
    flows.push_back(std::move(f));
  });
  return flows;
}

}  // namespace pktdt
