#include "pktdt/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "pktdt/error.hpp"
#include "pktdt/tensor_io.hpp"

namespace pktdt {
namespace {

double act(Activation a, double v) { return a == Activation::ReLU ? (v > 0.0 ? v : 0.0) : 1.0 / (1.0 + std::exp(-v)); }

// Derivative expressed through the activation output.
double act_grad_from_output(Activation a, double y) {
  return a == Activation::ReLU ? (y > 0.0 ? 1.0 : 0.0) : y * (1.0 - y);
}

std::vector<double> dense(const AutoencoderParams& p, const char* w, const char* b, std::span<const double> x) {
  const Matrix& wm = p.tensors.get(w);
  std::vector<double> y(wm.cols());
  affine(x, wm, p.tensors.get(b), y);
  for (auto& v : y) v = act(p.activation, v);
  return y;
}

void glorot_fill(Matrix& m, std::mt19937_64& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> u(-s, s);
  for (auto& v : m.data()) v = u(rng);
}

}  // namespace

Activation activation_from_string(const std::string& s) {
  if (s == "relu" || s == "ReLU") return Activation::ReLU;
  if (s == "sigmoid" || s == "Sigmoid") return Activation::Sigmoid;
  throw DataError("unknown activation '" + s + "' (expected relu or sigmoid)");
}

const char* to_string(Activation a) { return a == Activation::ReLU ? "relu" : "sigmoid"; }

AutoencoderParams AutoencoderParams::zeros(std::size_t n_p, std::size_t hidden, std::size_t n_b, Activation act) {
  AutoencoderParams p;
  p.activation = act;
  p.tensors.add("W1", n_p, hidden);
  p.tensors.add("b1", 1, hidden);
  p.tensors.add("W2", hidden, n_b);
  p.tensors.add("b2", 1, n_b);
  p.tensors.add("W3", n_b, hidden);
  p.tensors.add("b3", 1, hidden);
  p.tensors.add("W4", hidden, n_p);
  p.tensors.add("b4", 1, n_p);
  return p;
}

AutoencoderParams AutoencoderParams::glorot(std::size_t n_p, std::size_t hidden, std::size_t n_b, Activation act,
                                            std::uint64_t seed) {
  auto p = zeros(n_p, hidden, n_b, act);
  std::mt19937_64 rng(seed);
  for (const char* w : {"W1", "W2", "W3", "W4"}) glorot_fill(p.tensors.get(w), rng);
  return p;
}

std::vector<double> scale_payload(std::span<const std::uint8_t> bytes) {
  std::vector<double> x(bytes.size());
  std::transform(bytes.begin(), bytes.end(), x.begin(), [](std::uint8_t b) { return b / 255.0; });
  return x;
}

std::vector<double> encode(const AutoencoderParams& p, std::span<const double> x) {
  if (x.size() != p.n_p()) {
    throw DimensionMismatch("encode: expected " + std::to_string(p.n_p()) + " inputs, got " + std::to_string(x.size()));
  }
  return dense(p, "W2", "b2", dense(p, "W1", "b1", x));
}

std::vector<double> decode(const AutoencoderParams& p, std::span<const double> z) {
  if (z.size() != p.n_b()) {
    throw DimensionMismatch("decode: expected " + std::to_string(p.n_b()) + " inputs, got " + std::to_string(z.size()));
  }
  return dense(p, "W4", "b4", dense(p, "W3", "b3", z));
}

double reconstruction_loss(const Matrix& x, const Matrix& x_rec) {
  if (x.rows() != x_rec.rows() || x.cols() != x_rec.cols()) throw DimensionMismatch("reconstruction_loss: batch shapes differ");
  if (x.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x.data()[k] - x_rec.data()[k];
    total += d * d;
  }
  return total / static_cast<double>(x.rows());
}

double autoencoder_loss_and_grad(const AutoencoderParams& p, const Matrix& x, std::span<const std::size_t> idx,
                                 ParamSet& grad) {
  if (x.cols() != p.n_p()) throw DimensionMismatch("autoencoder: input width differs from N_p");
  grad.set_zero();
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  const char* w_names[4] = {"W1", "W2", "W3", "W4"};
  const char* b_names[4] = {"b1", "b2", "b3", "b4"};
  double loss = 0.0;

  std::vector<std::vector<double>> acts(5);
  for (std::size_t row : idx) {
    auto xr = x.row(row);
    acts[0].assign(xr.begin(), xr.end());
    for (int l = 0; l < 4; ++l) acts[l + 1] = dense(p, w_names[l], b_names[l], acts[l]);

    std::vector<double> delta(p.n_p());
    for (std::size_t j = 0; j < delta.size(); ++j) {
      const double diff = acts[4][j] - acts[0][j];
      loss += diff * diff * inv_n;
      delta[j] = 2.0 * diff * inv_n;
    }
    for (int l = 3; l >= 0; --l) {
      for (std::size_t j = 0; j < delta.size(); ++j) delta[j] *= act_grad_from_output(p.activation, acts[l + 1][j]);
      std::vector<double> dx(acts[l].size(), 0.0);
      affine_backward(acts[l], p.tensors.get(w_names[l]), delta, grad.get(w_names[l]), grad.get(b_names[l]),
                      l > 0 ? std::span<double>(dx) : std::span<double>());
      delta = std::move(dx);
    }
  }
  return loss;
}

AutoencoderTrainResult train_autoencoder(const Matrix& dataset, const AutoencoderConfig& cfg,
                                         const std::function<void(std::size_t, double)>& on_epoch) {
  if (dataset.rows() == 0) throw DataError("train_autoencoder: empty dataset");
  if (cfg.batch_size == 0) throw DataError("train_autoencoder: batch_size must be positive");
  AutoencoderTrainResult result;
  result.params = AutoencoderParams::glorot(dataset.cols(), cfg.hidden, cfg.n_b, cfg.activation, cfg.seed);
  auto& params = result.params;
  ParamSet grad = params.tensors.zeros_like();
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);

  std::vector<std::size_t> order(dataset.rows());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double loss = autoencoder_loss_and_grad(
          params, dataset, std::span<const std::size_t>(order.data() + start, end - start), grad);
      if (!std::isfinite(loss) || !grad.all_finite()) {
        std::ostringstream msg;
        msg << "autoencoder training diverged at epoch " << epoch << ", batch starting " << start
            << " (loss " << loss << ", learning_rate " << cfg.learning_rate << ")";
        throw NonFiniteLoss(msg.str());
      }
      params.tensors.axpy(-cfg.learning_rate, grad);
    }
    std::vector<std::size_t> all(dataset.rows());
    std::iota(all.begin(), all.end(), 0);
    const double epoch_loss = autoencoder_loss_and_grad(params, dataset, all, grad);
    if (!std::isfinite(epoch_loss)) throw NonFiniteLoss("autoencoder loss is not finite after epoch " + std::to_string(epoch));
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

void save_autoencoder(const std::filesystem::path& path, const AutoencoderParams& p) {
  TensorContainer c;
  c.kind = ContainerKind::Autoencoder;
  c.meta = {static_cast<std::int64_t>(p.n_p()), static_cast<std::int64_t>(p.hidden()),
            static_cast<std::int64_t>(p.n_b()), static_cast<std::int64_t>(p.activation)};
  c.tensors = p.tensors;
  write_container(path, c);
}

AutoencoderParams load_autoencoder(const std::filesystem::path& path) {
  TensorContainer c = read_container(path);
  if (c.kind != ContainerKind::Autoencoder || c.meta.size() != 4) {
    throw DataError(path.string() + ": not an autoencoder parameter file");
  }
  if (c.meta[3] != static_cast<std::int64_t>(Activation::ReLU) && c.meta[3] != static_cast<std::int64_t>(Activation::Sigmoid)) {
    throw DataError(path.string() + ": unknown activation code " + std::to_string(c.meta[3]));
  }
  AutoencoderParams p = AutoencoderParams::zeros(static_cast<std::size_t>(c.meta[0]), static_cast<std::size_t>(c.meta[1]),
                                                 static_cast<std::size_t>(c.meta[2]), static_cast<Activation>(c.meta[3]));
  for (std::size_t i = 0; i < p.tensors.count(); ++i) {
    const Matrix& src = c.tensors.get(p.tensors.name(i));
    if (src.rows() != p.tensors.at(i).rows() || src.cols() != p.tensors.at(i).cols()) {
      throw DataError(path.string() + ": tensor " + p.tensors.name(i) + " has inconsistent shape");
    }
    p.tensors.at(i) = src;
  }
  if (!p.tensors.all_finite()) throw DataError(path.string() + ": non-finite parameters");
  return p;
}

}  // namespace pktdt
