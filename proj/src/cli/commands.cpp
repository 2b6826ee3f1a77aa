#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "pktdt/pipeline.hpp"

namespace pktdt {
namespace fs = std::filesystem;

namespace {

fs::path in_workdir(const PipelineConfig& cfg, const char* name) { return fs::path(cfg.workdir) / name; }

void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw DataError(p.string() + " not found; " + hint);
}

void ensure_workdir(const PipelineConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.workdir, ec);
  if (ec) throw DataError("cannot create workdir " + cfg.workdir + ": " + ec.message());
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string dataset_name(PolicyTag p) {
  std::string s = to_string(p);
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string display_name(const std::string& model) {
  if (model == "expert" || model == "medium" || model == "random") return dataset_name(policy_from_string(model));
  std::string s = model;
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::vector<Flow> load_flows(const PipelineConfig& cfg) {
  const fs::path p = in_workdir(cfg, files::kFlows);
  require_file(p, "run `pktdt ingest` or `pktdt synth` first");
  return read_flows_jsonl(p);
}

Matrix payload_matrix(const std::vector<Flow>& flows) {
  std::size_t n = 0, width = 0;
  for (const auto& f : flows) {
    for (const auto& p : f.packets) {
      if (n == 0) width = p.payload.size();
      if (p.payload.size() != width) throw DimensionMismatch("payloads must all have the same length");
      ++n;
    }
  }
  if (n == 0) throw DataError("no packets to encode");
  Matrix x(n, width);
  std::size_t r = 0;
  for (const auto& f : flows) {
    for (const auto& p : f.packets) {
      const auto s = scale_payload(p.payload);
      std::copy(s.begin(), s.end(), x.row(r++).begin());
    }
  }
  return x;
}

}  // namespace

fs::path model_path(const PipelineConfig& cfg, const std::string& model) {
  return fs::path(cfg.workdir) / (model + ".bin");
}

fs::path metrics_path(const PipelineConfig& cfg, const std::string& model) {
  return fs::path(cfg.workdir) / ("metrics_" + model + ".json");
}

void cmd_ingest(const PipelineConfig& cfg, std::ostream& out) {
  if (cfg.capture.empty()) throw DataError("ingest: no capture given (set paths.capture)");
  const fs::path capture(cfg.capture);
  require_file(capture, "check paths.capture");
  IngestStats stats;
  std::vector<PacketRecord> records;
  if (capture.extension() == ".jsonl") {
    std::ifstream in(capture);
    records = read_records_jsonl(in, capture.string());
    stats.packets_read = records.size();
  } else {
    const auto raw = parse_capture(capture);
    records = extract_all(raw, cfg.n_p, stats);
  }
  bool have_ids = !records.empty();
  for (const auto& r : records) have_ids = have_ids && !r.flow_id.empty();
  std::vector<Flow> flows = have_ids ? group_by_flow_id(std::move(records)) : group_flows(std::move(records), cfg.gap_timeout);
  if (!cfg.truth.empty()) {
    require_file(cfg.truth, "check paths.truth");
    flows = label_flows(std::move(flows), read_label_table(cfg.truth), &stats.dropped_flows);
  }
  stats.flows = flows.size();
  ensure_workdir(cfg);
  write_flows_jsonl(in_workdir(cfg, files::kFlows), flows);
  out << "packets " << stats.packets_read << "\n"
      << "malformed " << stats.malformed << "\n"
      << "unsupported " << stats.unsupported << "\n"
      << "truncated " << stats.truncated_payloads << "\n"
      << "flows " << stats.flows << "\n"
      << "dropped " << stats.dropped_flows << "\n";
}

void cmd_synth(const PipelineConfig& cfg, std::ostream& out) {
  SynthConfig sc = cfg.synth;
  sc.n_p = cfg.n_p;
  const SynthOutput s = synthesize(sc);
  ensure_workdir(cfg);
  write_flows_jsonl(in_workdir(cfg, files::kFlows), s.flows);
  write_label_table(in_workdir(cfg, files::kTruth), s.truth);
  if (cfg.synth_pcap) write_capture(in_workdir(cfg, files::kSynthCapture), synth_frames(s.flows));
  std::size_t packets = 0, malicious = 0;
  for (const auto& f : s.flows) {
    packets += f.packets.size();
    malicious += f.label == Label::Malicious;
  }
  out << "flows " << s.flows.size() << "\npackets " << packets << "\nmalicious " << malicious << "\n";
}

void cmd_train_ae(const PipelineConfig& cfg, std::ostream& out) {
  const Matrix x = payload_matrix(load_flows(cfg));
  const auto result = train_autoencoder(
      x, cfg.autoencoder, [&](std::size_t e, double loss) { out << "epoch " << e + 1 << " loss " << num(loss) << "\n"; });
  save_autoencoder(model_path(cfg, "ae"), result.params);
}

void cmd_encode(const PipelineConfig& cfg, std::ostream& out) {
  const auto flows = load_flows(cfg);
  const fs::path ae_path = model_path(cfg, "ae");
  require_file(ae_path, "run `pktdt train-ae` first");
  const AutoencoderParams ae = load_autoencoder(ae_path);
  std::string text;
  std::size_t n = 0;
  for (const auto& f : flows) {
    for (std::size_t i = 0; i < f.packets.size(); ++i) {
      const Json j{{"flow_id", f.flow_id}, {"packet_index", i}, {"z", encode(ae, scale_payload(f.packets[i].payload))}};
      text += j.dump() + "\n";
      ++n;
    }
  }
  write_text_file(in_workdir(cfg, files::kEmbeddings), text);
  out << "embeddings " << n << "\n";
}

void cmd_sample(const PipelineConfig& cfg, std::ostream& out) {
  const auto flows = load_flows(cfg);
  const fs::path emb_path = in_workdir(cfg, files::kEmbeddings);
  require_file(emb_path, "run `pktdt encode` first");
  std::map<std::string, std::vector<std::vector<double>>> emb;
  for_each_jsonl(emb_path, [&](const Json& j, const JsonWhere& w) {
    const std::string id = require_string(j, "flow_id", w);
    const auto idx = static_cast<std::size_t>(require_integer(j, "packet_index", w, 0, 1LL << 40));
    const Json& z = require_key(j, "z", w);
    if (!z.is_array()) w.fail("z", "expected array");
    auto& v = emb[id];
    if (idx != v.size()) w.fail("packet_index", "out of order");
    std::vector<double> zz;
    for (const auto& e : z) {
      if (!e.is_number()) w.fail("z", "expected numbers");
      zz.push_back(e.get<double>());
    }
    v.push_back(std::move(zz));
  });

  std::vector<EncodedFlow> encoded;
  for (const auto& f : flows) {
    if (f.label == Label::Unlabeled) {
      throw DataError("flow " + f.flow_id + " is unlabeled; supply ground truth (paths.truth) at ingest");
    }
    const auto it = emb.find(f.flow_id);
    if (it == emb.end() || it->second.size() != f.packets.size()) {
      throw DataError("embeddings do not cover flow " + f.flow_id + "; rerun `pktdt encode`");
    }
    encoded.push_back(encode_flow(f, it->second));
  }
  auto [train, test] = split_dataset(std::move(encoded), cfg.test_fraction, cfg.split_seed);
  train = balance_oversample(std::move(train), cfg.oversample_seed);
  const OfflineDataset ds = simulate_dataset(train, cfg.policy, cfg.reward, cfg.policy_seed);
  write_dataset(in_workdir(cfg, files::kTrainDataset), ds);
  write_encoded_flows(in_workdir(cfg, files::kTrainFlows), train);
  write_encoded_flows(in_workdir(cfg, files::kTestFlows), test);
  out << "policy " << to_string(cfg.policy) << "\ntrain " << train.size() << "\ntest " << test.size()
      << "\nmax_return " << num(ds.max_return()) << "\n";
}

void cmd_train(const PipelineConfig& cfg, const std::string& model, std::ostream& out) {
  std::vector<double> curve;
  if (model == "dt" || model == "bc") {
    const fs::path p = in_workdir(cfg, files::kTrainDataset);
    require_file(p, "run `pktdt sample` first");
    const OfflineDataset ds = read_dataset(p);
    if (model == "dt") {
      ModelConfig mc = cfg.model;
      mc.obs_dim = ds.obs_dim();
      SequenceModel m = SequenceModel::initialized(mc, cfg.train.seed);
      curve = train_sequence_model(m, ds.trajectories, cfg.train).loss_curve;
      save_sequence_model(model_path(cfg, "dt"), m);
    } else {
      const BcModel bc = bc_train(ds, cfg.bc, &curve);
      save_mlp(model_path(cfg, "bc"), bc.net, MlpRole::BehaviorCloning, bc.mean_wait);
    }
  } else if (model == "dnn") {
    const fs::path p = in_workdir(cfg, files::kTrainFlows);
    require_file(p, "run `pktdt sample` first");
    const auto flows = read_encoded_flows(p);
    const Mlp net = dnn_train(flows, cfg.dnn, &curve);
    save_mlp(model_path(cfg, "dnn"), net, MlpRole::Classifier);
  } else {
    throw DataError("unknown model '" + model + "' (expected dt, bc or dnn)");
  }
  write_text_file(fs::path(cfg.workdir) / (model + "_loss.json"), Json(curve).dump() + "\n");
  out << "model " << model << "\nsteps " << curve.size() << "\nfinal_loss " << num(curve.empty() ? 0.0 : curve.back())
      << "\n";
}

void write_metrics_file(const fs::path& path, const ReportRow& row) {
  const Json j{{"dataset", row.dataset}, {"model", row.model}, {"metrics", metrics_to_json(row.metrics)}};
  write_text_file(path, j.dump(2) + "\n");
}

ReportRow read_metrics_file(const fs::path& path) {
  const Json j = read_json_file(path);
  const JsonWhere w{path.string(), 0};
  ReportRow row;
  row.dataset = require_string(j, "dataset", w);
  row.model = require_string(j, "model", w);
  row.metrics = metrics_from_json(require_key(j, "metrics", w), JsonWhere{path.string() + " metrics", 0});
  return row;
}

void cmd_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& models, std::ostream& out) {
  const fs::path test_path = in_workdir(cfg, files::kTestFlows);
  const fs::path train_path = in_workdir(cfg, files::kTrainDataset);
  require_file(test_path, "run `pktdt sample` first");
  require_file(train_path, "run `pktdt sample` first");
  const auto test = read_encoded_flows(test_path);
  const OfflineDataset train = read_dataset(train_path);
  const ReferenceReturns refs = reference_returns(train, test, cfg.eval_seed, cfg.reference_repeats);
  const double target = cfg.target_rtg.value_or(refs.max_return);
  write_text_file(fs::path(cfg.workdir) / "references.json",
                  Json{{"expert_return", refs.expert_return},
                       {"random_return", refs.random_return},
                       {"max_return", refs.max_return},
                       {"target_rtg", target}}
                          .dump(2) +
                      "\n");

  std::vector<ReportRow> rows;
  for (const auto& name : models) {
    ReportRow row{dataset_name(train.policy), display_name(name), {}};
    std::vector<EpisodeResult> episodes;
    const auto load_hint = "no trained " + name + " model; run `pktdt train " + name + "` first";
    if (name == "dt") {
      require_file(model_path(cfg, name), load_hint);
      const SequenceModel m = load_sequence_model(model_path(cfg, name));
      DtAgent agent(m);
      episodes = replay_all(agent, test, target, train.reward, cfg.eval_seed);
    } else if (name == "bc") {
      require_file(model_path(cfg, name), load_hint);
      BcModel bc;
      bc.net = load_mlp(model_path(cfg, name), nullptr, &bc.mean_wait);
      BcAgent agent(bc);
      episodes = replay_all(agent, test, target, train.reward, cfg.eval_seed);
    } else if (name == "dnn") {
      require_file(model_path(cfg, name), load_hint);
      row.metrics = dnn_metrics(load_mlp(model_path(cfg, name)), test);
    } else if (name == "expert" || name == "medium" || name == "random") {
      ScriptedAgent agent(policy_from_string(name), train.reward);
      episodes = replay_all(agent, test, target, train.reward, cfg.eval_seed + cfg.reference_repeats);
    } else {
      throw DataError("unknown model '" + name + "' (expected dt, bc, dnn, expert, medium or random)");
    }
    if (name != "dnn") {
      row.metrics = compute_metrics(episodes, refs.expert_return, refs.random_return);
      write_episodes_jsonl(fs::path(cfg.workdir) / ("episodes_" + name + ".jsonl"), episodes);
    }
    write_metrics_file(metrics_path(cfg, name), row);
    rows.push_back(row);
  }
  out << render_table(rows);
}

void cmd_report(const std::vector<fs::path>& metrics_files, const std::optional<fs::path>& svg_path, std::ostream& out) {
  if (metrics_files.empty()) throw DataError("report: no metrics files given");
  std::vector<ReportRow> rows;
  for (const auto& p : metrics_files) {
    require_file(p, "run `pktdt evaluate` first");
    rows.push_back(read_metrics_file(p));
  }
  out << render_table(rows);
  if (svg_path) write_text_file(*svg_path, render_svg(rows));
}

}  // namespace pktdt
