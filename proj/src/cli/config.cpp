#include <limits>
#include <set>

#include "pktdt/pipeline.hpp"

namespace pktdt {
namespace {

constexpr long long kMaxInt = std::numeric_limits<long long>::max();

Json::json_pointer pointer(const std::string& dotted) {
  std::string p = "/" + dotted;
  for (auto& c : p) {
    if (c == '.') c = '/';
  }
  return Json::json_pointer(p);
}

// Serializer and parser share one field list so they cannot drift apart.
struct Writer {
  Json j = Json::object();
  void operator()(const std::string& k, const std::string& v) { j[pointer(k)] = v; }
  void operator()(const std::string& k, const std::size_t& v) { j[pointer(k)] = v; }
  void operator()(const std::string& k, const std::uint64_t& v, bool) { j[pointer(k)] = v; }
  void operator()(const std::string& k, const double& v) { j[pointer(k)] = v; }
  void operator()(const std::string& k, const bool& v) { j[pointer(k)] = v; }
  void operator()(const std::string& k, const std::uint8_t& v) { j[pointer(k)] = v; }
  void operator()(const std::string& k, const Activation& v) { j[pointer(k)] = to_string(v); }
  void operator()(const std::string& k, const PolicyTag& v) { j[pointer(k)] = to_string(v); }
  void operator()(const std::string& k, const ActionMode& v) {
    j[pointer(k)] = v == ActionMode::Discrete ? "discrete" : "continuous";
  }
  void operator()(const std::string& k, const std::optional<double>& v) {
    j[pointer(k)] = v ? Json(*v) : Json(nullptr);
  }
  void operator()(const std::string& k, const std::vector<std::size_t>& v) { j[pointer(k)] = v; }
};

struct Reader {
  const Json& j;
  JsonWhere where;
  std::set<std::string> seen;

  const Json* find(const std::string& k) {
    seen.insert(k);
    const auto p = pointer(k);
    return j.contains(p) ? &j.at(p) : nullptr;
  }
  // Wraps a leaf so the require_* helpers report the dotted key.
  Json leaf(const std::string& k, const Json& v) { return Json{{k, v}}; }

  void operator()(const std::string& k, std::string& v) {
    if (const Json* x = find(k)) v = require_string(leaf(k, *x), k, where);
  }
  void operator()(const std::string& k, std::size_t& v) {
    if (const Json* x = find(k)) v = static_cast<std::size_t>(require_integer(leaf(k, *x), k, where, 0, kMaxInt));
  }
  // Seeds span the full unsigned 64-bit range.
  void operator()(const std::string& k, std::uint64_t& v, bool) {
    if (const Json* x = find(k)) {
      if (!x->is_number_unsigned()) where.fail(k, "expected unsigned 64-bit integer seed");
      v = x->get<std::uint64_t>();
    }
  }
  void operator()(const std::string& k, double& v) {
    if (const Json* x = find(k)) v = require_number(leaf(k, *x), k, where);
  }
  void operator()(const std::string& k, bool& v) {
    if (const Json* x = find(k)) {
      if (!x->is_boolean()) where.fail(k, "expected boolean");
      v = x->get<bool>();
    }
  }
  void operator()(const std::string& k, std::uint8_t& v) {
    if (const Json* x = find(k)) v = static_cast<std::uint8_t>(require_integer(leaf(k, *x), k, where, 0, 255));
  }
  void operator()(const std::string& k, Activation& v) {
    if (const Json* x = find(k)) v = activation_from_string(require_string(leaf(k, *x), k, where));
  }
  void operator()(const std::string& k, PolicyTag& v) {
    if (const Json* x = find(k)) v = policy_from_string(require_string(leaf(k, *x), k, where));
  }
  void operator()(const std::string& k, ActionMode& v) {
    if (const Json* x = find(k)) {
      const std::string s = require_string(leaf(k, *x), k, where);
      if (s == "discrete") v = ActionMode::Discrete;
      else if (s == "continuous") v = ActionMode::Continuous;
      else where.fail(k, "expected discrete or continuous");
    }
  }
  void operator()(const std::string& k, std::optional<double>& v) {
    if (const Json* x = find(k)) {
      if (x->is_null()) v.reset();
      else v = require_number(leaf(k, *x), k, where);
    }
  }
  void operator()(const std::string& k, std::vector<std::size_t>& v) {
    if (const Json* x = find(k)) {
      if (!x->is_array()) where.fail(k, "expected array of integers");
      v.clear();
      for (const auto& e : *x) {
        if (!e.is_number_unsigned() || e.get<std::size_t>() == 0) where.fail(k, "expected positive integers");
        v.push_back(e.get<std::size_t>());
      }
    }
  }
};

template <typename Cfg, typename V>
void visit(Cfg& c, V& v) {
  v("paths.capture", c.capture);
  v("paths.truth", c.truth);
  v("paths.workdir", c.workdir);
  v("ingest.n_p", c.n_p);
  v("ingest.gap_timeout", c.gap_timeout);

  v("synth.n_flows", c.synth.n_flows);
  v("synth.min_len", c.synth.min_len);
  v("synth.max_len", c.synth.max_len);
  v("synth.pattern_byte", c.synth.pattern_byte);
  v("synth.pattern_len", c.synth.pattern_len);
  v("synth.plant_rate", c.synth.plant_rate);
  v("synth.malicious_fraction", c.synth.malicious_fraction);
  v("synth.mean_gap", c.synth.mean_gap);
  v("synth.seed", c.synth.seed, true);
  v("synth.pcap", c.synth_pcap);

  v("autoencoder.hidden", c.autoencoder.hidden);
  v("autoencoder.n_b", c.autoencoder.n_b);
  v("autoencoder.activation", c.autoencoder.activation);
  v("autoencoder.learning_rate", c.autoencoder.learning_rate);
  v("autoencoder.epochs", c.autoencoder.epochs);
  v("autoencoder.batch_size", c.autoencoder.batch_size);
  v("autoencoder.seed", c.autoencoder.seed, true);

  v("reward.c_tp", c.reward.c_tp);
  v("reward.c_tn", c.reward.c_tn);
  v("reward.c_fp", c.reward.c_fp);
  v("reward.c_fn", c.reward.c_fn);
  v("reward.c_wait", c.reward.c_wait);

  v("sample.policy", c.policy);
  v("sample.test_fraction", c.test_fraction);
  v("sample.split_seed", c.split_seed, true);
  v("sample.oversample_seed", c.oversample_seed, true);
  v("sample.policy_seed", c.policy_seed, true);

  v("model.context", c.model.context);
  v("model.d_time", c.model.d_time);
  v("model.d_value", c.model.d_value);
  v("model.d_type", c.model.d_type);
  v("model.n_layers", c.model.n_layers);
  v("model.n_heads", c.model.n_heads);
  v("model.d_ff", c.model.d_ff);
  v("model.time_base", c.model.time_base);
  v("model.action_mode", c.model.action_mode);
  v("model.lambda_wait", c.model.lambda_wait);

  v("train.learning_rate", c.train.learning_rate);
  v("train.batch_size", c.train.batch_size);
  v("train.steps", c.train.steps);
  v("train.grad_clip", c.train.grad_clip);
  v("train.seed", c.train.seed, true);

  for (auto [name, m] : {std::pair{"bc", &c.bc}, std::pair{"dnn", &c.dnn}}) {
    const std::string p = std::string(name) + ".";
    v(p + "hidden", m->hidden);
    v(p + "learning_rate", m->learning_rate);
    v(p + "batch_size", m->batch_size);
    v(p + "steps", m->steps);
    v(p + "grad_clip", m->grad_clip);
    v(p + "seed", m->seed, true);
  }

  v("eval.seed", c.eval_seed, true);
  v("eval.reference_repeats", c.reference_repeats);
  v("eval.target_rtg", c.target_rtg);
}

void collect_leaves(const Json& j, const std::string& prefix, std::vector<std::string>& out) {
  if (j.is_object() && !j.empty()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      collect_leaves(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  } else {
    out.push_back(prefix);
  }
}

void validate(const PipelineConfig& c, const JsonWhere& where) {
  if (c.n_p == 0) where.fail("ingest.n_p", "must be positive");
  if (!(c.gap_timeout > 0.0)) where.fail("ingest.gap_timeout", "must be positive");
  if (c.autoencoder.hidden == 0) where.fail("autoencoder.hidden", "must be positive");
  if (c.autoencoder.n_b == 0) where.fail("autoencoder.n_b", "must be positive");
  if (c.autoencoder.batch_size == 0) where.fail("autoencoder.batch_size", "must be positive");
  if (c.autoencoder.learning_rate < 0.0) where.fail("autoencoder.learning_rate", "must be non-negative");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) where.fail("sample.test_fraction", "must lie in (0,1)");
  if (c.train.batch_size == 0) where.fail("train.batch_size", "must be positive");
  if (c.train.learning_rate < 0.0) where.fail("train.learning_rate", "must be non-negative");
  if (c.bc.batch_size == 0) where.fail("bc.batch_size", "must be positive");
  if (c.dnn.batch_size == 0) where.fail("dnn.batch_size", "must be positive");
  if (c.reference_repeats == 0) where.fail("eval.reference_repeats", "must be positive");
  if (c.model.lambda_wait < 0.0) where.fail("model.lambda_wait", "must be non-negative");
  try {
    c.reward.validate();
    c.synth.validate();
    ModelConfig m = c.model;
    m.obs_dim = 1;
    m.validate();
  } catch (const DataError& e) {
    throw DataError(where.origin + ": " + e.what());
  }
}

}  // namespace

Json config_to_json(const PipelineConfig& cfg) {
  Writer w;
  visit(cfg, w);
  return w.j;
}

PipelineConfig config_from_json(const Json& j, const std::string& origin) {
  if (!j.is_object()) throw DataError(origin + ": config must be a JSON object");
  PipelineConfig cfg;
  Reader r{j, JsonWhere{origin, 0}, {}};
  visit(cfg, r);
  std::vector<std::string> leaves;
  collect_leaves(j, "", leaves);
  for (const auto& k : leaves) {
    if (!r.seen.count(k)) r.where.fail(k, "unknown configuration key");
  }
  cfg.synth.n_p = cfg.n_p;
  validate(cfg, r.where);
  return cfg;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  collect_leaves(config_to_json(PipelineConfig{}), "", out);
  return out;
}

PipelineConfig resolve_config(const std::optional<std::filesystem::path>& file,
                              const std::map<std::string, std::string>& overrides) {
  Json merged = config_to_json(PipelineConfig{});
  std::string origin = "<defaults>";
  if (file) {
    const Json f = read_json_file(*file);
    if (!f.is_object()) throw DataError(file->string() + ": config must be a JSON object");
    // Unknown keys are reported by config_from_json against the file's name.
    config_from_json(f, file->string());
    merged.merge_patch(f);
    origin = file->string();
  }
  for (const auto& [key, text] : overrides) {
    const auto p = pointer(key);
    if (!merged.contains(p)) throw DataError("--" + key + ": unknown configuration key");
    const Json& current = merged.at(p);
    Json value;
    if (current.is_string()) {
      value = text;
    } else {
      std::string t = text;
      if (current.is_array() && (t.empty() || t.front() != '[')) t = "[" + t + "]";
      try {
        value = Json::parse(t);
      } catch (const Json::parse_error&) {
        throw DataError("--" + key + ": cannot parse value '" + text + "'");
      }
    }
    merged[p] = value;
  }
  return config_from_json(merged, overrides.empty() ? origin : origin + " + flags");
}

}  // namespace pktdt
