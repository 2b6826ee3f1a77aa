#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "pktdt/pipeline.hpp"

namespace {

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Packet-level intrusion detection pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  app.add_option("--config", config_file, "JSON pipeline configuration")->check(CLI::ExistingFile);
  const auto keys = pktdt::config_keys();
  std::map<std::string, std::string> raw;
  for (const auto& k : keys) app.add_option("--" + k, raw[k], "override " + k);

  auto* ingest = app.add_subcommand("ingest", "capture (.pcap or .jsonl) + ground truth -> flows.jsonl");
  auto* synth = app.add_subcommand("synth", "generate labeled synthetic flows");
  auto* train_ae = app.add_subcommand("train-ae", "train the payload autoencoder");
  auto* encode = app.add_subcommand("encode", "write payload embeddings");
  auto* sample = app.add_subcommand("sample", "split, oversample and simulate the behavior policy");

  std::string model;
  auto* train = app.add_subcommand("train", "train dt, bc or dnn");
  train->add_option("model", model, "dt | bc | dnn")->required()->check(CLI::IsMember({"dt", "bc", "dnn"}));

  std::vector<std::string> eval_models{"dt", "bc", "dnn"};
  auto* evaluate = app.add_subcommand("evaluate", "replay held-out flows and write metrics");
  evaluate->add_option("models", eval_models, "models to evaluate (dt bc dnn expert medium random)");

  std::vector<std::string> metrics_files;
  std::string svg;
  auto* report = app.add_subcommand("report", "render metrics files as a table");
  report->add_option("metrics", metrics_files, "metrics JSON files")->required();
  report->add_option("--svg", svg, "also write an SVG chart");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (report->parsed()) {
      std::vector<std::filesystem::path> paths(metrics_files.begin(), metrics_files.end());
      pktdt::cmd_report(paths, svg.empty() ? std::nullopt : std::optional<std::filesystem::path>(svg), std::cout);
      return 0;
    }

    std::map<std::string, std::string> overrides;
    for (const auto& k : keys) {
      if (app.count("--" + k) > 0) overrides[k] = raw[k];
    }
    const auto cfg = pktdt::resolve_config(
        config_file.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_file), overrides);

    if (ingest->parsed()) pktdt::cmd_ingest(cfg, std::cout);
    else if (synth->parsed()) pktdt::cmd_synth(cfg, std::cout);
    else if (train_ae->parsed()) pktdt::cmd_train_ae(cfg, std::cout);
    else if (encode->parsed()) pktdt::cmd_encode(cfg, std::cout);
    else if (sample->parsed()) pktdt::cmd_sample(cfg, std::cout);
    else if (train->parsed()) pktdt::cmd_train(cfg, model, std::cout);
    else if (evaluate->parsed()) pktdt::cmd_evaluate(cfg, eval_models, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return 0;
}
