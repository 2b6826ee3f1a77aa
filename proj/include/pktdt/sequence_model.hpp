#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "pktdt/json_util.hpp"
#include "pktdt/tensor.hpp"
#include "pktdt/trajectory.hpp"

namespace pktdt {

enum class ActionMode : std::int64_t { Discrete = 0, Continuous = 1 };

// Token types in emission order within a step.
enum class TokenType : std::size_t { Rtg = 0, Obs = 1, Dec = 2, Wait = 3 };
inline constexpr std::size_t kTokensPerStep = 4;

struct ModelConfig {
  std::size_t context = 20;  // K, in steps
  std::size_t d_time = 32;
  std::size_t d_value = 64;
  std::size_t d_type = 32;
  std::size_t n_layers = 3;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  double time_base = 10000.0;  // C
  std::size_t obs_dim = 0;
  std::size_t n_decisions = kNumDecisions;
  ActionMode action_mode = ActionMode::Discrete;
  double lambda_wait = 0.1;

  std::size_t d_model() const { return d_time + d_value + d_type; }
  std::size_t head_dim() const { return d_model() / n_heads; }
  // Width of the decision head and of the decision-token value input.
  std::size_t decision_width() const { return action_mode == ActionMode::Discrete ? n_decisions : 1; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// dim k (1-based): sin(t / C^(k/d)) for even k, cos(t / C^((k-1)/d)) for odd k.
std::vector<double> temporal_embedding(double t, std::size_t d_time, double time_base);

struct ForwardOutput {
  Matrix decision;                 // steps x decision_width, read at OBS tokens
  std::vector<double> wait_pred;   // per step, read at DEC tokens
};

struct ActionPrediction {
  int decision = kBenign;
  double decision_value = 0.0;  // continuous mode output
  double wait = 0.0;            // clamped at 0
  std::vector<double> logits;
};

// Argmax with ties to the lowest index; mask_wait excludes the wait class.
int argmax_decision(std::span<const double> logits, bool mask_wait);

// mean_i[-log softmax(logits_i)[d_i]] + lambda * mean_i[(wait_pred_i - wait_true_i)^2]
// Optional outputs receive d loss / d logits and d loss / d wait_pred.
double loss_discrete(const Matrix& logits, std::span<const int> decisions, std::span<const double> wait_pred,
                     std::span<const double> wait_true, double lambda_wait, Matrix* d_logits = nullptr,
                     std::vector<double>* d_wait = nullptr);

// mean_i (pred_i - target_i)^2
double loss_continuous(std::span<const double> preds, std::span<const double> targets,
                       std::vector<double>* d_preds = nullptr);

class SequenceModel {
 public:
  // Zero-filled parameters with the layout implied by cfg.
  explicit SequenceModel(ModelConfig cfg);
  // Glorot-uniform weights, unit layer-norm gains, zero biases.
  static SequenceModel initialized(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Base-layer token embeddings [temporal | value projection | type], 4 rows per step.
  Matrix tokenize(std::span<const Step> window) const;

  // One causally masked attention block (attention, residual + layer norm,
  // ReLU feed-forward, residual + layer norm) applied to token embeddings.
  Matrix attention_layer(const Matrix& x, std::size_t layer) const;
  // Softmax attention weights (tokens x tokens, zero above the diagonal).
  Matrix attention_weights(const Matrix& x, std::size_t layer, std::size_t head) const;

  // Final-layer token embeddings.
  Matrix encode_tokens(std::span<const Step> window) const;

  ForwardOutput forward(std::span<const Step> window) const;

  // Training loss of a window (discrete or continuous per config); gradient
  // is accumulated into grad scaled by grad_scale.
  double loss_and_grad(std::span<const Step> window, ParamSet& grad, double grad_scale = 1.0) const;
  double loss(std::span<const Step> window) const;

  // The last step of context is pending: its decision and wait fields are
  // ignored. Only the latest K steps are used.
  ActionPrediction predict_action(std::span<const Step> context, bool mask_wait) const;

 private:
  struct LayerCache;
  struct Cache;
  void run_layer(std::size_t l, const Matrix& x, LayerCache& cache) const;
  void run(std::span<const Step> window, Cache& cache) const;

  ModelConfig cfg_;
  ParamSet params_;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::size_t steps = 1000;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainReport {
  std::vector<double> loss_curve;  // mean batch loss per optimizer step
  double final_loss() const { return loss_curve.empty() ? 0.0 : loss_curve.back(); }
};

// Adam over uniformly sampled length-<=K windows. Deterministic given seed.
TrainReport train_sequence_model(SequenceModel& model, std::span<const Trajectory> trajectories,
                                 const TrainConfig& cfg, std::span<const double> trajectory_weights = {},
                                 const std::function<void(std::size_t, double)>& on_step = {});

void save_sequence_model(const std::filesystem::path& path, const SequenceModel& model);
SequenceModel load_sequence_model(const std::filesystem::path& path);

Json model_config_to_json(const ModelConfig& cfg);

}  // namespace pktdt
