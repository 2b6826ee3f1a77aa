#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pktdt/autoencoder.hpp"
#include "pktdt/baselines.hpp"
#include "pktdt/eval.hpp"
#include "pktdt/json_util.hpp"
#include "pktdt/sequence_model.hpp"
#include "pktdt/synth.hpp"
#include "pktdt/trajectory.hpp"

namespace pktdt {

struct PipelineConfig {
  std::string capture;  // .pcap or packet-record .jsonl
  std::string truth;    // flow_id,label CSV
  std::string workdir = "work";

  std::size_t n_p = kDefaultPayloadBytes;
  double gap_timeout = kDefaultGapTimeout;

  SynthConfig synth{.n_p = kDefaultPayloadBytes};  // n_p mirrors ingest.n_p
  bool synth_pcap = false;

  AutoencoderConfig autoencoder;
  RewardConfig reward;

  PolicyTag policy = PolicyTag::Expert;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 1;
  std::uint64_t oversample_seed = 2;
  std::uint64_t policy_seed = 3;

  ModelConfig model;  // obs_dim is taken from the data
  TrainConfig train;
  MlpTrainConfig bc = default_bc_config();
  MlpTrainConfig dnn = default_dnn_config();

  std::uint64_t eval_seed = 4;
  std::size_t reference_repeats = 5;
  std::optional<double> target_rtg;  // defaults to the best training return

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

Json config_to_json(const PipelineConfig& cfg);
// Every key must be known; missing keys keep their defaults.
PipelineConfig config_from_json(const Json& j, const std::string& origin = "<config>");

// Dotted leaf names ("model.n_layers", ...) of the serialized config.
std::vector<std::string> config_keys();

// Layers file contents and dotted overrides (raw flag text) over the
// defaults: flag > file > default.
PipelineConfig resolve_config(const std::optional<std::filesystem::path>& file,
                              const std::map<std::string, std::string>& overrides);

// Workdir file names shared by the commands.
namespace files {
inline constexpr const char* kFlows = "flows.jsonl";
inline constexpr const char* kTruth = "truth.csv";
inline constexpr const char* kSynthCapture = "capture.pcap";
inline constexpr const char* kAutoencoder = "ae.bin";
inline constexpr const char* kEmbeddings = "embeddings.jsonl";
inline constexpr const char* kTrainDataset = "train.jsonl";
inline constexpr const char* kTrainFlows = "train_flows.jsonl";
inline constexpr const char* kTestFlows = "test_flows.jsonl";
}  // namespace files

std::filesystem::path model_path(const PipelineConfig& cfg, const std::string& model);
std::filesystem::path metrics_path(const PipelineConfig& cfg, const std::string& model);

void cmd_ingest(const PipelineConfig& cfg, std::ostream& out);
void cmd_synth(const PipelineConfig& cfg, std::ostream& out);
void cmd_train_ae(const PipelineConfig& cfg, std::ostream& out);
void cmd_encode(const PipelineConfig& cfg, std::ostream& out);
void cmd_sample(const PipelineConfig& cfg, std::ostream& out);
// model is "dt", "bc" or "dnn".
void cmd_train(const PipelineConfig& cfg, const std::string& model, std::ostream& out);
void cmd_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& models, std::ostream& out);
// Renders the table for the given metrics files; also writes an SVG chart
// when svg_path is set.
void cmd_report(const std::vector<std::filesystem::path>& metrics_files, const std::optional<std::filesystem::path>& svg_path,
                std::ostream& out);

// Metrics file: {"dataset","model","metrics":{...}}
void write_metrics_file(const std::filesystem::path& path, const ReportRow& row);
ReportRow read_metrics_file(const std::filesystem::path& path);

}  // namespace pktdt
