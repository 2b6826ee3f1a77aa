#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "pktdt/autoencoder.hpp"
#include "pktdt/error.hpp"

using namespace pktdt;

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Matrix one_row(const std::vector<double>& v) {
  Matrix m(1, v.size());
  m.data() = v;
  return m;
}

// Mean squared reconstruction error through encode/decode only.
double reference_loss(const AutoencoderParams& p, const Matrix& x) {
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto rec = decode(p, encode(p, x.row(r)));
    for (std::size_t j = 0; j < rec.size(); ++j) total += (x(r, j) - rec[j]) * (x(r, j) - rec[j]);
  }
  return total / static_cast<double>(x.rows());
}

}  // namespace

TEST_CASE("zero parameters give activation-at-zero embeddings") {
  const std::vector<double> x(5, 0.0);
  auto relu = AutoencoderParams::zeros(5, 4, 3, Activation::ReLU);
  CHECK(encode(relu, x) == std::vector<double>(3, 0.0));
  CHECK(decode(relu, std::vector<double>(3, 0.0)) == std::vector<double>(5, 0.0));
  auto sig = AutoencoderParams::zeros(5, 4, 3, Activation::Sigmoid);
  CHECK(encode(sig, x) == std::vector<double>(3, 0.5));
  CHECK(decode(sig, std::vector<double>(3, 0.0)) == std::vector<double>(5, 0.5));
}

TEST_CASE("encode and decode match a hand-evaluated 3-2-1 chain") {
  auto p = AutoencoderParams::zeros(3, 2, 1, Activation::Sigmoid);
  // W1 is 3x2, W2 2x1, W3 1x2, W4 2x3.
  p.tensors.get("W1").data() = {0.1, -0.2, 0.3, 0.4, -0.5, 0.6};
  p.tensors.get("b1").data() = {0.05, -0.05};
  p.tensors.get("W2").data() = {0.7, -0.8};
  p.tensors.get("b2").data() = {0.1};
  p.tensors.get("W3").data() = {0.9, -1.0};
  p.tensors.get("b3").data() = {0.2, 0.3};
  p.tensors.get("W4").data() = {0.1, 0.2, 0.3, -0.1, -0.2, -0.3};
  p.tensors.get("b4").data() = {0.0, 0.1, -0.1};
  const std::vector<double> x{0.2, 0.4, 0.9};

  const double h0 = sigmoid(0.2 * 0.1 + 0.4 * 0.3 + 0.9 * -0.5 + 0.05);
  const double h1 = sigmoid(0.2 * -0.2 + 0.4 * 0.4 + 0.9 * 0.6 - 0.05);
  const double z = sigmoid(h0 * 0.7 + h1 * -0.8 + 0.1);
  const auto enc = encode(p, x);
  REQUIRE(enc.size() == 1);
  CHECK(enc[0] == doctest::Approx(z).epsilon(1e-14));

  const double g0 = sigmoid(z * 0.9 + 0.2);
  const double g1 = sigmoid(z * -1.0 + 0.3);
  const double want[3] = {sigmoid(g0 * 0.1 + g1 * -0.1 + 0.0), sigmoid(g0 * 0.2 + g1 * -0.2 + 0.1),
                          sigmoid(g0 * 0.3 + g1 * -0.3 - 0.1)};
  const auto dec = decode(p, enc);
  REQUIRE(dec.size() == 3);
  for (int j = 0; j < 3; ++j) CHECK(dec[static_cast<std::size_t>(j)] == doctest::Approx(want[j]).epsilon(1e-14));

  p.activation = Activation::ReLU;
  const double rh0 = std::max(0.0, 0.2 * 0.1 + 0.4 * 0.3 + 0.9 * -0.5 + 0.05);
  const double rh1 = std::max(0.0, 0.2 * -0.2 + 0.4 * 0.4 + 0.9 * 0.6 - 0.05);
  CHECK(encode(p, x)[0] == doctest::Approx(std::max(0.0, rh0 * 0.7 + rh1 * -0.8 + 0.1)).epsilon(1e-14));
}

TEST_CASE("dimension mismatches are reported") {
  auto p = AutoencoderParams::zeros(4, 3, 2, Activation::ReLU);
  CHECK_THROWS_AS(encode(p, std::vector<double>(3)), DimensionMismatch);
  CHECK_THROWS_AS(decode(p, std::vector<double>(4)), DimensionMismatch);
  CHECK_THROWS_AS(reconstruction_loss(Matrix(2, 3), Matrix(3, 3)), DimensionMismatch);
}

TEST_CASE("reconstruction loss examples") {
  const Matrix a = one_row({0.3, 0.6});
  CHECK(reconstruction_loss(a, a) == 0.0);
  CHECK(reconstruction_loss(one_row({1, 0}), one_row({0, 0})) == 1.0);
  Matrix x(2, 2), y(2, 2);
  x.data() = {1, 1, 0, 2};
  CHECK(reconstruction_loss(x, y) == 3.0);
}

TEST_CASE("decode(encode(x)) has N_p entries and loss is non-negative") {
  std::mt19937_64 rng(3);
  auto p = AutoencoderParams::glorot(7, 5, 3, Activation::Sigmoid, 9);
  for (int i = 0; i < 20; ++i) {
    const auto x = oracle::random_vector(rng, 7, 0.0, 1.0);
    const auto rec = decode(p, encode(p, x));
    CHECK(rec.size() == 7);
    CHECK(reconstruction_loss(one_row(x), one_row(rec)) >= 0.0);
  }
}

TEST_CASE("analytic gradient matches central differences on a 4-3-2 toy shape") {
  for (Activation act : {Activation::Sigmoid, Activation::ReLU}) {
    CAPTURE(to_string(act));
    std::mt19937_64 rng(17);
    auto p = AutoencoderParams::glorot(4, 3, 2, act, 5);
    oracle::randomize(p.tensors, rng, 0.8);
    Matrix x(3, 4);
    x.data() = oracle::random_vector(rng, 12, 0.0, 1.0);
    const std::vector<std::size_t> idx{0, 1, 2};
    ParamSet grad = p.tensors.zeros_like();
    const double loss = autoencoder_loss_and_grad(p, x, idx, grad);
    CHECK(loss == doctest::Approx(reference_loss(p, x)).epsilon(1e-12));
    const auto gc = oracle::check_gradient(p.tensors, grad, [&] { return reference_loss(p, x); });
    CAPTURE(gc.worst);
    CHECK(gc.checked == p.tensors.scalar_count());
    CHECK(gc.max_rel_error < 1e-4);
  }
}

TEST_CASE("a single repeated sample is memorized") {
  std::mt19937_64 rng(2);
  const auto sample = oracle::random_vector(rng, 8, 0.1, 0.9);
  Matrix data(16, 8);
  for (std::size_t r = 0; r < 16; ++r) std::copy(sample.begin(), sample.end(), data.row(r).begin());
  AutoencoderConfig cfg;
  cfg.hidden = 8;
  cfg.n_b = 2;
  cfg.learning_rate = 2.0;
  cfg.epochs = 300;
  cfg.batch_size = 4;
  cfg.seed = 4;
  const auto res = train_autoencoder(data, cfg);
  CHECK(res.epoch_loss.back() < 1e-3);
}

TEST_CASE("zero learning rate leaves the initialization untouched") {
  std::mt19937_64 rng(8);
  Matrix data(10, 6);
  data.data() = oracle::random_vector(rng, 60, 0.0, 1.0);
  AutoencoderConfig cfg;
  cfg.hidden = 4;
  cfg.n_b = 2;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  cfg.seed = 21;
  const auto res = train_autoencoder(data, cfg);
  CHECK(res.params.tensors == AutoencoderParams::glorot(6, 4, 2, Activation::Sigmoid, 21).tensors);
}

TEST_CASE("loss is non-increasing over epochs with a small learning rate") {
  std::mt19937_64 rng(12);
  Matrix data(6, 5);
  data.data() = oracle::random_vector(rng, 30, 0.0, 1.0);
  AutoencoderConfig cfg;
  cfg.hidden = 4;
  cfg.n_b = 2;
  cfg.learning_rate = 0.01;
  cfg.epochs = 50;
  cfg.batch_size = 6;
  cfg.seed = 1;
  const auto res = train_autoencoder(data, cfg);
  for (std::size_t e = 1; e < res.epoch_loss.size(); ++e) CHECK(res.epoch_loss[e] <= res.epoch_loss[e - 1] + 1e-6);
  CHECK(res.epoch_loss.back() < res.epoch_loss.front());
}

TEST_CASE("training is deterministic and divergence is reported") {
  std::mt19937_64 rng(12);
  Matrix data(20, 5);
  data.data() = oracle::random_vector(rng, 100, 0.0, 1.0);
  AutoencoderConfig cfg;
  cfg.hidden = 4;
  cfg.n_b = 2;
  cfg.learning_rate = 0.5;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.seed = 6;
  const auto a = train_autoencoder(data, cfg);
  const auto b = train_autoencoder(data, cfg);
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(a.params.tensors == b.params.tensors);

  cfg.activation = Activation::ReLU;
  data.fill(1e300);
  CHECK_THROWS_AS(train_autoencoder(data, cfg), NonFiniteLoss);
}

TEST_CASE("parameters survive a save/load round trip at f32 precision") {
  auto p = AutoencoderParams::glorot(6, 4, 2, Activation::ReLU, 3);
  const auto path = std::filesystem::temp_directory_path() / "pktdt_ae_rt.bin";
  save_autoencoder(path, p);
  const auto q = load_autoencoder(path);
  CHECK(q.activation == Activation::ReLU);
  CHECK(q.n_p() == 6);
  CHECK(q.hidden() == 4);
  CHECK(q.n_b() == 2);
  for (std::size_t i = 0; i < p.tensors.count(); ++i) {
    for (std::size_t k = 0; k < p.tensors.at(i).size(); ++k) {
      CHECK(q.tensors.at(i).data()[k] == static_cast<double>(static_cast<float>(p.tensors.at(i).data()[k])));
    }
  }
}
