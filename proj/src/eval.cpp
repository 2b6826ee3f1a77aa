#include "pktdt/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pktdt {

AgentDecision DtAgent::decide(std::span<const Step> context, bool mask_wait) {
  const ActionPrediction p = model_.predict_action(context, mask_wait);
  return {p.decision, p.wait};
}

AgentDecision BcAgent::decide(std::span<const Step> context, bool mask_wait) {
  if (context.empty()) throw EmptyWindow();
  const Step& s = context.back();
  const BcPrediction p = bc_predict(model_, s.rtg, s.obs, mask_wait);
  return {p.decision, p.wait};
}

void ScriptedAgent::begin_episode(const EncodedFlow& flow, std::uint64_t episode_seed) {
  const Trajectory t = simulate_policy(flow, policy_, cfg_, episode_seed);
  script_.clear();
  for (const auto& s : t.steps) script_.push_back(s.decision);
}

AgentDecision ScriptedAgent::decide(std::span<const Step> context, bool mask_wait) {
  const std::size_t i = context.size() - 1;
  if (i >= script_.size()) throw DataError("scripted agent: episode continued past its terminal decision");
  const int d = script_[i];
  if (mask_wait && d == kWait) throw DataError("scripted agent: wait at the final packet");
  return {d, 0.0};
}

double time_to_resolution(const EncodedFlow& flow, std::size_t decision_step) {
  if (decision_step == 0 || decision_step > flow.packets.size()) {
    throw DataError("decision step out of range for flow " + flow.flow_id);
  }
  const double w_n = flow.packets.back().t - flow.packets.front().t;
  if (!(w_n > 0.0)) return 0.0;
  return (flow.packets[decision_step - 1].t - flow.packets.front().t) / w_n;
}

EpisodeResult replay_episode(Agent& agent, const EncodedFlow& flow, double target_rtg, const RewardConfig& cfg,
                             std::uint64_t episode_seed) {
  if (flow.label == Label::Unlabeled) throw UnlabeledFlow(flow.flow_id);
  if (flow.packets.empty()) throw DataError("flow " + flow.flow_id + " has no packets");
  agent.begin_episode(flow, episode_seed);

  EpisodeResult res;
  res.flow_id = flow.flow_id;
  res.label = flow.label;
  std::vector<Step> context;
  double rtg = target_rtg;
  const std::size_t n = flow.packets.size();
  for (std::size_t i = 0; i < n; ++i) {
    Step s;
    s.t = flow.packets[i].t;
    s.rtg = rtg;
    s.obs = flow.packets[i].obs;
    context.push_back(std::move(s));
    const bool last = i + 1 == n;
    const AgentDecision ad = agent.decide(context, last);
    if (ad.decision < 0 || ad.decision >= kNumDecisions) throw InvalidDecision(ad.decision);
    if (last && ad.decision == kWait) throw DataError(agent.name() + " chose to wait at the final packet");
    const double r = reward(ad.decision, flow.label, cfg);

    Step& cur = context.back();
    cur.decision = ad.decision;
    cur.wait = last ? 0.0 : flow.packets[i + 1].t - flow.packets[i].t;
    cur.reward = r;
    res.rtg.push_back(rtg);
    res.rewards.push_back(r);
    res.wait_pred.push_back(ad.wait);
    res.episode_return += r;
    if (ad.decision != kWait) {
      res.decision = ad.decision;
      res.decision_step = i + 1;
      res.decision_time = flow.packets[i].t;
      res.ttr = time_to_resolution(flow, i + 1);
      break;
    }
    rtg = rtg - r;
  }
  return res;
}

std::vector<EpisodeResult> replay_all(Agent& agent, std::span<const EncodedFlow> flows, double target_rtg,
                                      const RewardConfig& cfg, std::uint64_t base_seed) {
  std::vector<EpisodeResult> out;
  out.reserve(flows.size());
  for (std::size_t i = 0; i < flows.size(); ++i) {
    out.push_back(replay_episode(agent, flows[i], target_rtg, cfg, base_seed ^ i));
  }
  return out;
}

MetricsReport classification_metrics(const Confusion& c) {
  MetricsReport m;
  m.counts = c;
  const auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

namespace {

// splitmix64 finalizer; keeps repeat passes from reusing the seed ^ index
// pattern of neighbouring bases.
std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void tally(Confusion& c, int decision, Label label) {
  const bool predicted = decision == kMalicious;
  const bool actual = label == Label::Malicious;
  if (predicted && actual) ++c.tp;
  else if (predicted) ++c.fp;
  else if (actual) ++c.fn;
  else ++c.tn;
}

}  // namespace

MetricsReport compute_metrics(std::span<const EpisodeResult> results, double expert_return, double random_return) {
  if (results.empty()) throw DataError("compute_metrics: no episodes");
  if (expert_return == random_return) throw DegenerateNormalization();
  Confusion c;
  double ret = 0.0, ttr = 0.0;
  for (const auto& r : results) {
    tally(c, r.decision, r.label);
    ret += r.episode_return;
    ttr += r.ttr;
  }
  MetricsReport m = classification_metrics(c);
  const double n = static_cast<double>(results.size());
  m.mean_return = ret / n;
  m.normalized_reward = 100.0 * (*m.mean_return - random_return) / (expert_return - random_return);
  m.mean_ttr = ttr / n;
  return m;
}

MetricsReport dnn_metrics(const Mlp& net, std::span<const EncodedFlow> flows) {
  Confusion c;
  for (const auto& f : flows) {
    if (f.label == Label::Unlabeled) throw UnlabeledFlow(f.flow_id);
    for (const auto& p : f.packets) tally(c, dnn_predict(net, p.obs), f.label);
  }
  if (c.total() == 0) throw DataError("dnn_metrics: no packets");
  return classification_metrics(c);
}

ReferenceReturns reference_returns(const OfflineDataset& train, std::span<const EncodedFlow> test_flows,
                                   std::uint64_t seed, std::size_t repeats) {
  if (train.trajectories.empty()) throw DataError("reference_returns: empty training dataset");
  if (test_flows.empty()) throw DataError("reference_returns: no test flows");
  if (repeats == 0) throw DataError("reference_returns: repeats must be positive");
  ReferenceReturns out;
  out.max_return = train.max_return();
  const auto mean_return = [&](PolicyTag tag) {
    ScriptedAgent agent(tag, train.reward);
    double sum = 0.0;
    for (std::size_t k = 0; k < repeats; ++k) {
      for (const auto& r : replay_all(agent, test_flows, out.max_return, train.reward, mix_seed(seed + k))) {
        sum += r.episode_return;
      }
    }
    return sum / static_cast<double>(repeats * test_flows.size());
  };
  out.expert_return = mean_return(PolicyTag::Expert);
  out.random_return = mean_return(PolicyTag::Random);
  return out;
}

Json metrics_to_json(const MetricsReport& m) {
  const auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return Json{{"accuracy", m.accuracy},
              {"precision", m.precision},
              {"recall", m.recall},
              {"f1", m.f1},
              {"mean_return", opt(m.mean_return)},
              {"normalized_reward", opt(m.normalized_reward)},
              {"mean_ttr", opt(m.mean_ttr)},
              {"tp", m.counts.tp},
              {"fp", m.counts.fp},
              {"fn", m.counts.fn},
              {"tn", m.counts.tn}};
}

MetricsReport metrics_from_json(const Json& j, const JsonWhere& where) {
  MetricsReport m;
  m.accuracy = require_number(j, "accuracy", where);
  m.precision = require_number(j, "precision", where);
  m.recall = require_number(j, "recall", where);
  m.f1 = require_number(j, "f1", where);
  const auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return require_number(j, key, where);
  };
  m.mean_return = opt("mean_return");
  m.normalized_reward = opt("normalized_reward");
  m.mean_ttr = opt("mean_ttr");
  constexpr long long kMax = 1LL << 50;
  m.counts.tp = static_cast<std::size_t>(require_integer(j, "tp", where, 0, kMax));
  m.counts.fp = static_cast<std::size_t>(require_integer(j, "fp", where, 0, kMax));
  m.counts.fn = static_cast<std::size_t>(require_integer(j, "fn", where, 0, kMax));
  m.counts.tn = static_cast<std::size_t>(require_integer(j, "tn", where, 0, kMax));
  return m;
}

void write_episodes_jsonl(const std::filesystem::path& path, std::span<const EpisodeResult> results) {
  std::ostringstream out;
  for (const auto& r : results) {
    Json j{{"flow_id", r.flow_id},
           {"label", static_cast<int>(r.label)},
           {"decision", r.decision},
           {"decision_step", r.decision_step},
           {"decision_time", r.decision_time},
           {"episode_return", r.episode_return},
           {"ttr", r.ttr},
           {"rtg", r.rtg},
           {"rewards", r.rewards},
           {"wait_pred", r.wait_pred}};
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fixed(const std::optional<double>& v, int digits) { return v ? fixed(*v, digits) : "-"; }

}  // namespace

std::string render_table(std::span<const ReportRow> rows) {
  const std::vector<std::string> header{"Dataset", "Model", "Accuracy(%)", "Precision", "F1-Score", "Recall", "Reward", "TTR"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    cells.push_back({r.dataset, r.model, fixed(100.0 * m.accuracy, 2), fixed(m.precision, 2), fixed(m.f1, 2),
                     fixed(m.recall, 2), fixed(m.normalized_reward, 1), fixed(m.mean_ttr, 2)});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  const auto emit = [&](const std::vector<std::string>& row) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      if (c) line += "  ";
      line += c < 2 ? row[c] + pad : pad + row[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  };
  emit(cells[0]);
  std::size_t total = 2 * (width.size() - 1);
  for (auto w : width) total += w;
  out << std::string(total, '-') << '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
  return out.str();
}

std::string render_svg(std::span<const ReportRow> rows) {
  const double group_w = 90.0, bar_w = 22.0, chart_h = 200.0, left = 50.0, top = 30.0;
  const double width = left + group_w * static_cast<double>(std::max<std::size_t>(rows.size(), 1)) + 20.0;
  const double height = top + chart_h + 70.0;
  const char* colors[3] = {"#4c72b0", "#55a868", "#c44e52"};
  const char* names[3] = {"Accuracy (%)", "Normalized reward", "TTR x 100"};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + chart_h << "\" x2=\"" << width - 10 << "\" y2=\"" << top + chart_h
    << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 100; tick += 25) {
    const double y = top + chart_h * (1.0 - tick / 100.0);
    s << "<text x=\"" << left - 5 << "\" y=\"" << y + 3 << "\" text-anchor=\"end\">" << tick << "</text>\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = rows[i].metrics;
    const std::optional<double> vals[3] = {100.0 * m.accuracy, m.normalized_reward,
                                           m.mean_ttr ? std::optional<double>(100.0 * *m.mean_ttr) : std::nullopt};
    const double x0 = left + group_w * static_cast<double>(i) + 10.0;
    for (int k = 0; k < 3; ++k) {
      if (!vals[k]) continue;
      const double v = std::clamp(*vals[k], 0.0, 100.0);
      const double h = chart_h * v / 100.0;
      s << "<rect x=\"" << x0 + bar_w * k << "\" y=\"" << top + chart_h - h << "\" width=\"" << bar_w - 2
        << "\" height=\"" << h << "\" fill=\"" << colors[k] << "\"/>\n";
    }
    s << "<text x=\"" << x0 + 1.5 * bar_w << "\" y=\"" << top + chart_h + 14 << "\" text-anchor=\"middle\">"
      << rows[i].dataset << "</text>\n";
    s << "<text x=\"" << x0 + 1.5 * bar_w << "\" y=\"" << top + chart_h + 26 << "\" text-anchor=\"middle\">"
      << rows[i].model << "</text>\n";
  }
  for (int k = 0; k < 3; ++k) {
    const double x = left + 120.0 * k;
    s << "<rect x=\"" << x << "\" y=\"" << height - 22 << "\" width=\"10\" height=\"10\" fill=\"" << colors[k]
      << "\"/><text x=\"" << x + 14 << "\" y=\"" << height - 13 << "\">" << names[k] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace pktdt
