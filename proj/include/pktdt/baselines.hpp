#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pktdt/tensor.hpp"
#include "pktdt/trajectory.hpp"

namespace pktdt {

// Fully connected ReLU network with a linear output layer. widths holds
// [input, hidden..., output]; tensors are "W0","b0","W1","b1",...
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> widths);
  static Mlp initialized(std::vector<std::size_t> widths, std::uint64_t seed);

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t layers() const { return widths_.size() - 1; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  std::vector<double> forward(std::span<const double> x) const;

  // Mean cross-entropy over rows of x against targets; gradient accumulated
  // into grad (same layout as params()).
  double cross_entropy(const Matrix& x, std::span<const int> targets, ParamSet* grad = nullptr) const;

 private:
  std::vector<std::size_t> widths_;
  ParamSet params_;
};

struct MlpTrainConfig {
  std::vector<std::size_t> hidden;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t steps = 1000;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;

  friend bool operator==(const MlpTrainConfig&, const MlpTrainConfig&) = default;
};

// Adam on rows sampled uniformly with replacement. Throws NonFiniteLoss.
std::vector<double> train_mlp(Mlp& net, const Matrix& x, std::span<const int> targets, const MlpTrainConfig& cfg);

// Reward-conditioned behavior cloning: [RTG ; o] -> decision, no history.
struct BcModel {
  Mlp net;
  double mean_wait = 0.0;  // dataset mean inter-arrival gap, BC's wait estimate
};

struct BcPrediction {
  int decision = kBenign;
  double wait = 0.0;
};

inline MlpTrainConfig default_bc_config() { return {{128, 128}, 1e-3, 32, 2000, 1.0, 0}; }
inline MlpTrainConfig default_dnn_config() { return {{256, 128, 64}, 1e-3, 32, 2000, 1.0, 0}; }

// Rows [rtg, obs...] with decision targets for every step of every trajectory.
void bc_rows(std::span<const Trajectory> trajectories, Matrix& x, std::vector<int>& targets);
BcModel bc_train(const OfflineDataset& dataset, const MlpTrainConfig& cfg, std::vector<double>* loss_curve = nullptr);
BcPrediction bc_predict(const BcModel& model, double rtg, std::span<const double> obs, bool mask_wait);

// Per-packet supervised classifier over observations (benign / malicious).
void dnn_rows(std::span<const EncodedFlow> flows, Matrix& x, std::vector<int>& targets);
Mlp dnn_train(std::span<const EncodedFlow> flows, const MlpTrainConfig& cfg, std::vector<double>* loss_curve = nullptr);
int dnn_predict(const Mlp& net, std::span<const double> obs);

enum class MlpRole : std::int64_t { BehaviorCloning = 0, Classifier = 1 };

void save_mlp(const std::filesystem::path& path, const Mlp& net, MlpRole role, double mean_wait = 0.0);
// Returns the network; role and mean_wait are written through when non-null.
Mlp load_mlp(const std::filesystem::path& path, MlpRole* role = nullptr, double* mean_wait = nullptr);

}  // namespace pktdt
