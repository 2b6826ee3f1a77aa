#include "pktdt/baselines.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <sstream>

#include "pktdt/optim.hpp"
#include "pktdt/sequence_model.hpp"
#include "pktdt/tensor_io.hpp"

namespace pktdt {
namespace {

std::string wname(std::size_t l) { return "W" + std::to_string(l); }
std::string bname(std::size_t l) { return "b" + std::to_string(l); }

}  // namespace

Mlp::Mlp(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw DataError("mlp: need at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    params_.add(wname(l), widths_[l], widths_[l + 1]);
    params_.add(bname(l), 1, widths_[l + 1]);
  }
}

Mlp Mlp::initialized(std::vector<std::size_t> widths, std::uint64_t seed) {
  Mlp net(std::move(widths));
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.layers(); ++l) {
    Matrix& w = net.params_.get(wname(l));
    // He-uniform for the ReLU layers.
    const double s = std::sqrt(6.0 / static_cast<double>(w.rows()));
    std::uniform_real_distribution<double> u(-s, s);
    for (auto& v : w.data()) v = u(rng);
  }
  return net;
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  if (x.size() != widths_.front()) throw DimensionMismatch("mlp: expected " + std::to_string(widths_.front()) + " inputs");
  std::vector<double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < layers(); ++l) {
    std::vector<double> y(widths_[l + 1]);
    affine(a, params_.get(wname(l)), params_.get(bname(l)), y);
    if (l + 1 < layers()) {
      for (auto& v : y) v = v > 0.0 ? v : 0.0;
    }
    a = std::move(y);
  }
  return a;
}

double Mlp::cross_entropy(const Matrix& x, std::span<const int> targets, ParamSet* grad) const {
  if (x.rows() != targets.size()) throw DimensionMismatch("mlp: one target per row required");
  if (x.cols() != widths_.front()) throw DimensionMismatch("mlp: input width mismatch");
  if (x.rows() == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  double loss = 0.0;
  std::vector<std::vector<double>> acts(layers() + 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    acts[0].assign(xr.begin(), xr.end());
    for (std::size_t l = 0; l < layers(); ++l) {
      acts[l + 1].assign(widths_[l + 1], 0.0);
      affine(acts[l], params_.get(wname(l)), params_.get(bname(l)), acts[l + 1]);
      if (l + 1 < layers()) {
        for (auto& v : acts[l + 1]) v = v > 0.0 ? v : 0.0;
      }
    }
    Matrix logits(1, widths_.back());
    logits.data() = acts.back();
    const int t[1] = {targets[r]};
    const double zero[1] = {0.0};
    Matrix dlogits;
    loss += inv_n * loss_discrete(logits, t, zero, zero, 0.0, grad ? &dlogits : nullptr, nullptr);
    if (!grad) continue;
    std::vector<double> delta = dlogits.data();
    for (auto& v : delta) v *= inv_n;
    for (std::size_t l = layers(); l-- > 0;) {
      if (l + 1 < layers()) {
        for (std::size_t j = 0; j < delta.size(); ++j) {
          if (!(acts[l + 1][j] > 0.0)) delta[j] = 0.0;
        }
      }
      std::vector<double> dx(acts[l].size(), 0.0);
      affine_backward(acts[l], params_.get(wname(l)), delta, grad->get(wname(l)), grad->get(bname(l)),
                      l > 0 ? std::span<double>(dx) : std::span<double>());
      delta = std::move(dx);
    }
  }
  return loss;
}

std::vector<double> train_mlp(Mlp& net, const Matrix& x, std::span<const int> targets, const MlpTrainConfig& cfg) {
  if (x.rows() == 0) throw DataError("train: empty dataset");
  if (cfg.batch_size == 0) throw DataError("train: batch_size must be positive");
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, x.rows() - 1);
  Adam opt(net.params(), cfg.learning_rate);
  ParamSet grad = net.params().zeros_like();
  Matrix batch(cfg.batch_size, x.cols());
  std::vector<int> batch_targets(cfg.batch_size);
  std::vector<double> curve;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t r = pick(rng);
      std::copy(x.row(r).begin(), x.row(r).end(), batch.row(b).begin());
      batch_targets[b] = targets[r];
    }
    grad.set_zero();
    const double loss = net.cross_entropy(batch, batch_targets, &grad);
    if (!std::isfinite(loss) || !grad.all_finite()) {
      std::ostringstream msg;
      msg << "mlp training diverged at step " << step << " (loss " << loss << ")";
      throw NonFiniteLoss(msg.str());
    }
    clip_global_norm(grad, cfg.grad_clip);
    opt.step(net.params(), grad);
    curve.push_back(loss);
  }
  return curve;
}

void bc_rows(std::span<const Trajectory> trajectories, Matrix& x, std::vector<int>& targets) {
  std::size_t n = 0, dim = 0;
  for (const auto& t : trajectories) {
    n += t.steps.size();
    if (!t.steps.empty()) dim = t.steps.front().obs.size();
  }
  x = Matrix(n, dim + 1);
  targets.clear();
  std::size_t r = 0;
  for (const auto& t : trajectories) {
    for (const auto& s : t.steps) {
      if (s.obs.size() != dim) throw DimensionMismatch("bc: inconsistent observation widths");
      x(r, 0) = s.rtg;
      std::copy(s.obs.begin(), s.obs.end(), x.row(r).begin() + 1);
      targets.push_back(s.decision);
      ++r;
    }
  }
}

BcModel bc_train(const OfflineDataset& dataset, const MlpTrainConfig& cfg, std::vector<double>* loss_curve) {
  if (dataset.trajectories.empty()) throw DataError("bc_train: empty dataset");
  Matrix x;
  std::vector<int> targets;
  bc_rows(dataset.trajectories, x, targets);
  std::vector<std::size_t> widths{x.cols()};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(kNumDecisions);
  BcModel model{Mlp::initialized(widths, cfg.seed), 0.0};

  double gap_sum = 0.0;
  std::size_t gaps = 0;
  for (const auto& t : dataset.trajectories) {
    for (std::size_t i = 0; i + 1 < t.steps.size(); ++i) {
      gap_sum += t.steps[i].wait;
      ++gaps;
    }
  }
  model.mean_wait = gaps ? gap_sum / static_cast<double>(gaps) : 0.0;
  auto curve = train_mlp(model.net, x, targets, cfg);
  if (loss_curve) *loss_curve = std::move(curve);
  return model;
}

BcPrediction bc_predict(const BcModel& model, double rtg, std::span<const double> obs, bool mask_wait) {
  std::vector<double> in{rtg};
  in.insert(in.end(), obs.begin(), obs.end());
  return {argmax_decision(model.net.forward(in), mask_wait), model.mean_wait};
}

void dnn_rows(std::span<const EncodedFlow> flows, Matrix& x, std::vector<int>& targets) {
  std::size_t n = 0, dim = 0;
  for (const auto& f : flows) {
    n += f.packets.size();
    if (!f.packets.empty()) dim = f.packets.front().obs.size();
  }
  x = Matrix(n, dim);
  targets.clear();
  std::size_t r = 0;
  for (const auto& f : flows) {
    if (f.label == Label::Unlabeled) throw DataError("dnn: flow " + f.flow_id + " is unlabeled");
    for (const auto& p : f.packets) {
      if (p.obs.size() != dim) throw DimensionMismatch("dnn: inconsistent observation widths");
      std::copy(p.obs.begin(), p.obs.end(), x.row(r).begin());
      targets.push_back(f.label == Label::Malicious ? 1 : 0);
      ++r;
    }
  }
}

Mlp dnn_train(std::span<const EncodedFlow> flows, const MlpTrainConfig& cfg, std::vector<double>* loss_curve) {
  Matrix x;
  std::vector<int> targets;
  dnn_rows(flows, x, targets);
  if (x.rows() == 0) throw DataError("dnn_train: no packets");
  std::vector<std::size_t> widths{x.cols()};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(2);
  Mlp net = Mlp::initialized(widths, cfg.seed);
  auto curve = train_mlp(net, x, targets, cfg);
  if (loss_curve) *loss_curve = std::move(curve);
  return net;
}

int dnn_predict(const Mlp& net, std::span<const double> obs) { return argmax_decision(net.forward(obs), false); }

void save_mlp(const std::filesystem::path& path, const Mlp& net, MlpRole role, double mean_wait) {
  TensorContainer c;
  c.kind = ContainerKind::Mlp;
  c.meta.push_back(static_cast<std::int64_t>(role));
  c.meta.push_back(std::bit_cast<std::int64_t>(mean_wait));
  c.meta.push_back(static_cast<std::int64_t>(net.widths().size()));
  for (auto w : net.widths()) c.meta.push_back(static_cast<std::int64_t>(w));
  c.tensors = net.params();
  write_container(path, c);
}

Mlp load_mlp(const std::filesystem::path& path, MlpRole* role, double* mean_wait) {
  TensorContainer c = read_container(path);
  if (c.kind != ContainerKind::Mlp || c.meta.size() < 3 ||
      c.meta.size() != 3 + static_cast<std::size_t>(c.meta[2])) {
    throw DataError(path.string() + ": not an MLP parameter file");
  }
  if (role) *role = static_cast<MlpRole>(c.meta[0]);
  if (mean_wait) *mean_wait = std::bit_cast<double>(c.meta[1]);
  std::vector<std::size_t> widths;
  for (std::size_t i = 3; i < c.meta.size(); ++i) widths.push_back(static_cast<std::size_t>(c.meta[i]));
  Mlp net(widths);
  for (std::size_t i = 0; i < net.params().count(); ++i) {
    const Matrix& src = c.tensors.get(net.params().name(i));
    if (src.rows() != net.params().at(i).rows() || src.cols() != net.params().at(i).cols()) {
      throw DataError(path.string() + ": tensor " + net.params().name(i) + " has inconsistent shape");
    }
    net.params().at(i) = src;
  }
  return net;
}

}  // namespace pktdt
