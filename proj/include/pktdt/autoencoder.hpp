#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "pktdt/tensor.hpp"

namespace pktdt {

enum class Activation : std::int64_t { ReLU = 0, Sigmoid = 1 };

Activation activation_from_string(const std::string& s);
const char* to_string(Activation a);

// Two-layer encoder / two-layer decoder:
//   H  = act(X W1 + b1),  Z  = act(H W2 + b2)
//   H' = act(Z W3 + b3),  X' = act(H' W4 + b4)
// Tensors: W1 (N_p x h), b1 (1 x h), W2 (h x N_b), b2 (1 x N_b),
//          W3 (N_b x h), b3 (1 x h), W4 (h x N_p), b4 (1 x N_p).
struct AutoencoderParams {
  ParamSet tensors;
  Activation activation = Activation::Sigmoid;

  std::size_t n_p() const { return tensors.get("W1").rows(); }
  std::size_t hidden() const { return tensors.get("W1").cols(); }
  std::size_t n_b() const { return tensors.get("W2").cols(); }

  static AutoencoderParams zeros(std::size_t n_p, std::size_t hidden, std::size_t n_b, Activation act);
  // Glorot-uniform weights, zero biases.
  static AutoencoderParams glorot(std::size_t n_p, std::size_t hidden, std::size_t n_b, Activation act,
                                  std::uint64_t seed);
};

// Payload bytes scaled into [0,1].
std::vector<double> scale_payload(std::span<const std::uint8_t> bytes);

std::vector<double> encode(const AutoencoderParams& p, std::span<const double> x);
std::vector<double> decode(const AutoencoderParams& p, std::span<const double> z);

// (1/n) sum_k ||X_k - X'_k||^2 over the rows of two equally shaped matrices.
double reconstruction_loss(const Matrix& x, const Matrix& x_rec);

// Reconstruction loss of a batch (rows of x selected by idx) and its gradient
// with respect to every tensor (grad is overwritten).
double autoencoder_loss_and_grad(const AutoencoderParams& p, const Matrix& x, std::span<const std::size_t> idx,
                                 ParamSet& grad);

struct AutoencoderConfig {
  std::size_t hidden = 256;
  std::size_t n_b = 100;
  Activation activation = Activation::Sigmoid;
  double learning_rate = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  friend bool operator==(const AutoencoderConfig&, const AutoencoderConfig&) = default;
};

struct AutoencoderTrainResult {
  AutoencoderParams params;
  std::vector<double> epoch_loss;  // full-dataset loss after each epoch
};

// Plain minibatch SGD on the rows of `dataset` (already scaled to [0,1]).
// Throws NonFiniteLoss on divergence.
AutoencoderTrainResult train_autoencoder(const Matrix& dataset, const AutoencoderConfig& cfg,
                                         const std::function<void(std::size_t, double)>& on_epoch = {});

void save_autoencoder(const std::filesystem::path& path, const AutoencoderParams& p);
AutoencoderParams load_autoencoder(const std::filesystem::path& path);

}  // namespace pktdt
