#include "pktdt/sequence_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "pktdt/optim.hpp"
#include "pktdt/tensor_io.hpp"

namespace pktdt {
namespace {

constexpr double kLayerNormEps = 1e-5;

std::string layer_key(std::size_t l, const char* name) { return "L" + std::to_string(l) + "." + name; }

// Y = X W (+ b), row by row.
void rows_linear(const Matrix& x, const Matrix& w, const Matrix* b, Matrix& y) {
  const std::size_t in = w.rows(), out = w.cols();
  y = Matrix(x.rows(), out);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto yr = y.row(r);
    if (b) std::copy(b->data().begin(), b->data().end(), yr.begin());
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      auto wr = w.row(i);
      for (std::size_t j = 0; j < out; ++j) yr[j] += xi * wr[j];
    }
  }
}

// Accumulates dW (+ db) and dX (if given) for Y = X W (+ b).
void rows_linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Matrix* db, Matrix* dx) {
  const std::size_t in = w.rows(), out = w.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto dyr = dy.row(r);
    if (db) {
      for (std::size_t j = 0; j < out; ++j) db->data()[j] += dyr[j];
    }
    for (std::size_t i = 0; i < in; ++i) {
      auto wr = w.row(i);
      auto dwr = dw.row(i);
      const double xi = xr[i];
      double acc = 0.0;
      for (std::size_t j = 0; j < out; ++j) {
        dwr[j] += xi * dyr[j];
        acc += wr[j] * dyr[j];
      }
      if (dx) (*dx)(r, i) += acc;
    }
  }
}

void layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& y, Matrix& xhat,
                std::vector<double>& rstd) {
  const std::size_t n = x.cols();
  y = Matrix(x.rows(), n);
  xhat = Matrix(x.rows(), n);
  rstd.assign(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      xhat(r, j) = (xr[j] - mean) * rs;
      y(r, j) = gain.data()[j] * xhat(r, j) + bias.data()[j];
    }
  }
}

void layer_norm_backward(const Matrix& xhat, const std::vector<double>& rstd, const Matrix& gain, const Matrix& dy,
                         Matrix& dgain, Matrix& dbias, Matrix& dx) {
  const std::size_t n = xhat.cols();
  dx = Matrix(xhat.rows(), n);
  std::vector<double> dxhat(n);
  for (std::size_t r = 0; r < xhat.rows(); ++r) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dgain.data()[j] += dy(r, j) * xhat(r, j);
      dbias.data()[j] += dy(r, j);
      dxhat[j] = dy(r, j) * gain.data()[j];
      mean_d += dxhat[j];
      mean_dx += dxhat[j] * xhat(r, j);
    }
    mean_d /= static_cast<double>(n);
    mean_dx /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) dx(r, j) = rstd[r] * (dxhat[j] - mean_d - xhat(r, j) * mean_dx);
  }
}

void add_into(Matrix& dst, const Matrix& src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst.data()[k] += src.data()[k];
}

void glorot_fill(Matrix& m, std::mt19937_64& rng, double extra_scale = 1.0) {
  const double s = extra_scale * std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> u(-s, s);
  for (auto& v : m.data()) v = u(rng);
}

}  // namespace

void ModelConfig::validate() const {
  if (context < 1) throw DataError("model: context length K must be >= 1");
  if (d_time < 1 || d_value < 1 || d_type < 1) throw DataError("model: embedding widths must be positive");
  if (n_heads < 1 || d_model() % n_heads != 0) throw DataError("model: d_model must be divisible by n_heads");
  if (!(time_base > 0.0)) throw DataError("model: temporal base C must be positive");
  if (obs_dim < 1) throw DataError("model: obs_dim must be positive");
  if (n_decisions < 2) throw DataError("model: need at least two decisions");
  if (d_ff < 1) throw DataError("model: d_ff must be positive");
}

std::vector<double> temporal_embedding(double t, std::size_t d_time, double time_base) {
  std::vector<double> e(d_time);
  for (std::size_t k = 1; k <= d_time; ++k) {
    const double dt = static_cast<double>(d_time);
    e[k - 1] = (k % 2 == 0) ? std::sin(t / std::pow(time_base, static_cast<double>(k) / dt))
                            : std::cos(t / std::pow(time_base, static_cast<double>(k - 1) / dt));
  }
  return e;
}

int argmax_decision(std::span<const double> logits, bool mask_wait) {
  int best = -1;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask_wait && static_cast<int>(i) == kWait) continue;
    if (best < 0 || logits[i] > best_v) {
      best = static_cast<int>(i);
      best_v = logits[i];
    }
  }
  return best < 0 ? kBenign : best;
}

double loss_discrete(const Matrix& logits, std::span<const int> decisions, std::span<const double> wait_pred,
                     std::span<const double> wait_true, double lambda_wait, Matrix* d_logits,
                     std::vector<double>* d_wait) {
  const std::size_t n = logits.rows();
  if (decisions.size() != n || wait_pred.size() != n || wait_true.size() != n) {
    throw DimensionMismatch("loss_discrete: misaligned step counts");
  }
  if (n == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  if (d_logits) *d_logits = Matrix(n, logits.cols());
  if (d_wait) d_wait->assign(n, 0.0);
  double ce = 0.0, mse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = logits.row(i);
    const int d = decisions[i];
    if (d < 0 || static_cast<std::size_t>(d) >= logits.cols()) throw InvalidDecision(d);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    ce += log_z - row[static_cast<std::size_t>(d)];
    if (d_logits) {
      for (std::size_t k = 0; k < row.size(); ++k) {
        (*d_logits)(i, k) = (std::exp(row[k] - log_z) - (static_cast<int>(k) == d ? 1.0 : 0.0)) * inv_n;
      }
    }
    const double diff = wait_pred[i] - wait_true[i];
    mse += diff * diff;
    if (d_wait) (*d_wait)[i] = 2.0 * lambda_wait * diff * inv_n;
  }
  return ce * inv_n + lambda_wait * mse * inv_n;
}

double loss_continuous(std::span<const double> preds, std::span<const double> targets, std::vector<double>* d_preds) {
  if (preds.size() != targets.size()) throw DimensionMismatch("loss_continuous: misaligned lengths");
  if (preds.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(preds.size());
  if (d_preds) d_preds->assign(preds.size(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double diff = preds[i] - targets[i];
    s += diff * diff;
    if (d_preds) (*d_preds)[i] = 2.0 * diff * inv_n;
  }
  return s * inv_n;
}

struct SequenceModel::LayerCache {
  Matrix x, q, k, v, att, o, s1, xhat1, h1, z1, r, f, s2, xhat2, y;
  std::vector<double> rstd1, rstd2;
  std::vector<Matrix> probs;  // per head, tokens x tokens (lower triangle used)
};

struct SequenceModel::Cache {
  std::size_t steps = 0;
  Matrix x0;
  std::vector<LayerCache> layers;
  ForwardOutput out;
};

SequenceModel::SequenceModel(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t dm = cfg_.d_model(), dv = cfg_.d_value;
  params_.add("val_rtg.W", 1, dv);
  params_.add("val_rtg.b", 1, dv);
  params_.add("val_obs.W", cfg_.obs_dim, dv);
  params_.add("val_obs.b", 1, dv);
  params_.add("val_dec.W", cfg_.decision_width(), dv);
  params_.add("val_dec.b", 1, dv);
  params_.add("val_wait.W", 1, dv);
  params_.add("val_wait.b", 1, dv);
  params_.add("type_emb", kTokensPerStep, cfg_.d_type);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    params_.add(layer_key(l, "Wq"), dm, dm);
    params_.add(layer_key(l, "Wk"), dm, dm);
    params_.add(layer_key(l, "Wv"), dm, dm);
    params_.add(layer_key(l, "Wo"), dm, dm);
    params_.add(layer_key(l, "bo"), 1, dm);
    params_.add(layer_key(l, "ln1.g"), 1, dm);
    params_.add(layer_key(l, "ln1.b"), 1, dm);
    params_.add(layer_key(l, "W1"), dm, cfg_.d_ff);
    params_.add(layer_key(l, "b1"), 1, cfg_.d_ff);
    params_.add(layer_key(l, "W2"), cfg_.d_ff, dm);
    params_.add(layer_key(l, "b2"), 1, dm);
    params_.add(layer_key(l, "ln2.g"), 1, dm);
    params_.add(layer_key(l, "ln2.b"), 1, dm);
  }
  params_.add("head_dec.W", dm, cfg_.decision_width());
  params_.add("head_dec.b", 1, cfg_.decision_width());
  params_.add("head_wait.W", dm, 1);
  params_.add("head_wait.b", 1, 1);
}

SequenceModel SequenceModel::initialized(ModelConfig cfg, std::uint64_t seed) {
  SequenceModel m(cfg);
  std::mt19937_64 rng(seed);
  // q.k is unscaled, so Wq and Wk are shrunk by head_dim^(-1/4) each to keep
  // initial scores at unit variance.
  const double qk_scale = std::pow(static_cast<double>(m.cfg_.head_dim()), -0.25);
  for (auto& t : m.params_.tensors()) {
    const std::string& n = t.name;
    const bool is_weight = n.ends_with(".W") || n.ends_with("Wq") || n.ends_with("Wk") || n.ends_with("Wv") ||
                           n.ends_with("Wo") || n.ends_with("W1") || n.ends_with("W2") || n == "type_emb";
    if (n.ends_with(".g")) {
      t.value.fill(1.0);
    } else if (is_weight) {
      glorot_fill(t.value, rng, (n.ends_with("Wq") || n.ends_with("Wk")) ? qk_scale : 1.0);
    }
  }
  return m;
}

Matrix SequenceModel::tokenize(std::span<const Step> window) const {
  if (window.empty()) throw EmptyWindow();
  if (window.size() > cfg_.context) {
    throw DataError("window of " + std::to_string(window.size()) + " steps exceeds context K=" +
                    std::to_string(cfg_.context));
  }
  const std::size_t dm = cfg_.d_model(), dt = cfg_.d_time, dv = cfg_.d_value;
  Matrix x(window.size() * kTokensPerStep, dm);
  const Matrix& type_emb = params_.get("type_emb");
  std::vector<double> value(dv);
  std::vector<double> dec_in(cfg_.decision_width());
  for (std::size_t s = 0; s < window.size(); ++s) {
    const Step& st = window[s];
    if (st.obs.size() != cfg_.obs_dim) {
      throw DimensionMismatch("observation has " + std::to_string(st.obs.size()) + " features, model expects " +
                              std::to_string(cfg_.obs_dim));
    }
    const auto temb = temporal_embedding(st.t, dt, cfg_.time_base);
    for (std::size_t ty = 0; ty < kTokensPerStep; ++ty) {
      const std::size_t row = s * kTokensPerStep + ty;
      switch (static_cast<TokenType>(ty)) {
        case TokenType::Rtg: {
          const double in[1] = {st.rtg};
          affine(in, params_.get("val_rtg.W"), params_.get("val_rtg.b"), value);
          break;
        }
        case TokenType::Obs: affine(st.obs, params_.get("val_obs.W"), params_.get("val_obs.b"), value); break;
        case TokenType::Dec: {
          std::fill(dec_in.begin(), dec_in.end(), 0.0);
          if (cfg_.action_mode == ActionMode::Discrete) {
            if (st.decision < 0 || static_cast<std::size_t>(st.decision) >= cfg_.n_decisions) throw InvalidDecision(st.decision);
            dec_in[static_cast<std::size_t>(st.decision)] = 1.0;
          } else {
            dec_in[0] = static_cast<double>(st.decision);
          }
          affine(dec_in, params_.get("val_dec.W"), params_.get("val_dec.b"), value);
          break;
        }
        case TokenType::Wait: {
          const double in[1] = {st.wait};
          affine(in, params_.get("val_wait.W"), params_.get("val_wait.b"), value);
          break;
        }
      }
      auto xr = x.row(row);
      std::copy(temb.begin(), temb.end(), xr.begin());
      std::copy(value.begin(), value.end(), xr.begin() + static_cast<std::ptrdiff_t>(dt));
      auto te = type_emb.row(ty);
      std::copy(te.begin(), te.end(), xr.begin() + static_cast<std::ptrdiff_t>(dt + dv));
    }
  }
  return x;
}

void SequenceModel::run_layer(std::size_t l, const Matrix& x, LayerCache& L) const {
  const std::size_t n_tok = x.rows();
  const std::size_t dm = cfg_.d_model(), dh = cfg_.head_dim();
  std::vector<double> scores(n_tok);
  L.x = x;
  rows_linear(L.x, params_.get(layer_key(l, "Wq")), nullptr, L.q);
  rows_linear(L.x, params_.get(layer_key(l, "Wk")), nullptr, L.k);
  rows_linear(L.x, params_.get(layer_key(l, "Wv")), nullptr, L.v);
  L.att = Matrix(n_tok, dm);
  L.probs.assign(cfg_.n_heads, Matrix(n_tok, n_tok));
  for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
    const std::size_t off = h * dh;
    Matrix& p = L.probs[h];
    for (std::size_t j = 0; j < n_tok; ++j) {
      // Causal: position j sees b <= j only.
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b <= j; ++b) {
        double s = 0.0;
        for (std::size_t e = 0; e < dh; ++e) s += L.q(j, off + e) * L.k(b, off + e);
        scores[b] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (std::size_t b = 0; b <= j; ++b) {
        scores[b] = std::exp(scores[b] - mx);
        z += scores[b];
      }
      for (std::size_t b = 0; b <= j; ++b) {
        const double pb = scores[b] / z;
        p(j, b) = pb;
        for (std::size_t e = 0; e < dh; ++e) L.att(j, off + e) += pb * L.v(b, off + e);
      }
    }
  }
  const Matrix& bo = params_.get(layer_key(l, "bo"));
  rows_linear(L.att, params_.get(layer_key(l, "Wo")), &bo, L.o);
  L.s1 = L.x;
  add_into(L.s1, L.o);
  layer_norm(L.s1, params_.get(layer_key(l, "ln1.g")), params_.get(layer_key(l, "ln1.b")), L.h1, L.xhat1, L.rstd1);
  const Matrix& b1 = params_.get(layer_key(l, "b1"));
  rows_linear(L.h1, params_.get(layer_key(l, "W1")), &b1, L.z1);
  L.r = L.z1;
  for (auto& v : L.r.data()) v = v > 0.0 ? v : 0.0;
  const Matrix& b2 = params_.get(layer_key(l, "b2"));
  rows_linear(L.r, params_.get(layer_key(l, "W2")), &b2, L.f);
  L.s2 = L.h1;
  add_into(L.s2, L.f);
  layer_norm(L.s2, params_.get(layer_key(l, "ln2.g")), params_.get(layer_key(l, "ln2.b")), L.y, L.xhat2, L.rstd2);
}

Matrix SequenceModel::attention_layer(const Matrix& x, std::size_t layer) const {
  if (x.rows() == 0) throw EmptyWindow();
  if (layer >= cfg_.n_layers || x.cols() != cfg_.d_model()) throw DimensionMismatch("attention_layer: bad layer or width");
  LayerCache L;
  run_layer(layer, x, L);
  return L.y;
}

Matrix SequenceModel::attention_weights(const Matrix& x, std::size_t layer, std::size_t head) const {
  if (layer >= cfg_.n_layers || head >= cfg_.n_heads || x.cols() != cfg_.d_model()) {
    throw DimensionMismatch("attention_weights: bad layer, head or width");
  }
  LayerCache L;
  run_layer(layer, x, L);
  return L.probs[head];
}

void SequenceModel::run(std::span<const Step> window, Cache& c) const {
  c.steps = window.size();
  c.x0 = tokenize(window);
  c.layers.assign(cfg_.n_layers, {});
  const Matrix* input = &c.x0;
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    run_layer(l, *input, c.layers[l]);
    input = &c.layers[l].y;
  }

  const Matrix& final = *input;
  const std::size_t width = cfg_.decision_width();
  c.out.decision = Matrix(c.steps, width);
  c.out.wait_pred.assign(c.steps, 0.0);
  for (std::size_t s = 0; s < c.steps; ++s) {
    affine(final.row(s * kTokensPerStep + static_cast<std::size_t>(TokenType::Obs)), params_.get("head_dec.W"),
           params_.get("head_dec.b"), c.out.decision.row(s));
    double w[1];
    affine(final.row(s * kTokensPerStep + static_cast<std::size_t>(TokenType::Dec)), params_.get("head_wait.W"),
           params_.get("head_wait.b"), w);
    c.out.wait_pred[s] = w[0];
  }
}

Matrix SequenceModel::encode_tokens(std::span<const Step> window) const {
  Cache c;
  run(window, c);
  return c.layers.empty() ? c.x0 : c.layers.back().y;
}

ForwardOutput SequenceModel::forward(std::span<const Step> window) const {
  Cache c;
  run(window, c);
  return std::move(c.out);
}

double SequenceModel::loss(std::span<const Step> window) const {
  const ForwardOutput out = forward(window);
  std::vector<double> waits;
  for (const auto& s : window) waits.push_back(s.wait);
  if (cfg_.action_mode == ActionMode::Discrete) {
    std::vector<int> ds;
    for (const auto& s : window) ds.push_back(s.decision);
    return loss_discrete(out.decision, ds, out.wait_pred, waits, cfg_.lambda_wait);
  }
  std::vector<double> targets;
  for (const auto& s : window) targets.push_back(static_cast<double>(s.decision));
  return loss_continuous(out.decision.data(), targets) +
         cfg_.lambda_wait * loss_continuous(out.wait_pred, waits);
}

double SequenceModel::loss_and_grad(std::span<const Step> window, ParamSet& grad, double grad_scale) const {
  Cache c;
  run(window, c);
  const std::size_t steps = c.steps;
  const std::size_t n_tok = c.x0.rows();
  const std::size_t dm = cfg_.d_model(), dh = cfg_.head_dim();

  std::vector<double> waits;
  for (const auto& s : window) waits.push_back(s.wait);
  Matrix d_dec;
  std::vector<double> d_wait;
  double loss = 0.0;
  if (cfg_.action_mode == ActionMode::Discrete) {
    std::vector<int> ds;
    for (const auto& s : window) ds.push_back(s.decision);
    loss = loss_discrete(c.out.decision, ds, c.out.wait_pred, waits, cfg_.lambda_wait, &d_dec, &d_wait);
  } else {
    std::vector<double> targets;
    for (const auto& s : window) targets.push_back(static_cast<double>(s.decision));
    std::vector<double> d_pred;
    loss = loss_continuous(c.out.decision.data(), targets, &d_pred) +
           cfg_.lambda_wait * loss_continuous(c.out.wait_pred, waits, &d_wait);
    for (auto& v : d_wait) v *= cfg_.lambda_wait;
    d_dec = Matrix(steps, 1);
    d_dec.data() = d_pred;
  }
  for (auto& v : d_dec.data()) v *= grad_scale;
  for (auto& v : d_wait) v *= grad_scale;

  const Matrix& final = c.layers.empty() ? c.x0 : c.layers.back().y;
  Matrix dy(n_tok, dm);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t obs_row = s * kTokensPerStep + static_cast<std::size_t>(TokenType::Obs);
    const std::size_t dec_row = s * kTokensPerStep + static_cast<std::size_t>(TokenType::Dec);
    affine_backward(final.row(obs_row), params_.get("head_dec.W"), d_dec.row(s), grad.get("head_dec.W"),
                    grad.get("head_dec.b"), dy.row(obs_row));
    const double dw[1] = {d_wait[s]};
    affine_backward(final.row(dec_row), params_.get("head_wait.W"), dw, grad.get("head_wait.W"),
                    grad.get("head_wait.b"), dy.row(dec_row));
  }

  for (std::size_t l = cfg_.n_layers; l-- > 0;) {
    auto& L = c.layers[l];
    Matrix ds2;
    layer_norm_backward(L.xhat2, L.rstd2, params_.get(layer_key(l, "ln2.g")), dy, grad.get(layer_key(l, "ln2.g")),
                        grad.get(layer_key(l, "ln2.b")), ds2);
    Matrix dr(n_tok, cfg_.d_ff);
    rows_linear_backward(L.r, params_.get(layer_key(l, "W2")), ds2, grad.get(layer_key(l, "W2")),
                         &grad.get(layer_key(l, "b2")), &dr);
    for (std::size_t k = 0; k < dr.size(); ++k) {
      if (!(L.z1.data()[k] > 0.0)) dr.data()[k] = 0.0;
    }
    Matrix dh1 = ds2;
    rows_linear_backward(L.h1, params_.get(layer_key(l, "W1")), dr, grad.get(layer_key(l, "W1")),
                         &grad.get(layer_key(l, "b1")), &dh1);
    Matrix ds1;
    layer_norm_backward(L.xhat1, L.rstd1, params_.get(layer_key(l, "ln1.g")), dh1, grad.get(layer_key(l, "ln1.g")),
                        grad.get(layer_key(l, "ln1.b")), ds1);
    Matrix datt(n_tok, dm);
    rows_linear_backward(L.att, params_.get(layer_key(l, "Wo")), ds1, grad.get(layer_key(l, "Wo")),
                         &grad.get(layer_key(l, "bo")), &datt);

    Matrix dq(n_tok, dm), dk(n_tok, dm), dv(n_tok, dm);
    std::vector<double> dp(n_tok);
    for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
      const std::size_t off = h * dh;
      const Matrix& p = L.probs[h];
      for (std::size_t j = 0; j < n_tok; ++j) {
        double dot = 0.0;
        for (std::size_t b = 0; b <= j; ++b) {
          double g = 0.0;
          for (std::size_t e = 0; e < dh; ++e) {
            g += datt(j, off + e) * L.v(b, off + e);
            dv(b, off + e) += p(j, b) * datt(j, off + e);
          }
          dp[b] = g;
          dot += p(j, b) * g;
        }
        for (std::size_t b = 0; b <= j; ++b) {
          const double dscore = p(j, b) * (dp[b] - dot);
          if (dscore == 0.0) continue;
          for (std::size_t e = 0; e < dh; ++e) {
            dq(j, off + e) += dscore * L.k(b, off + e);
            dk(b, off + e) += dscore * L.q(j, off + e);
          }
        }
      }
    }
    Matrix dx = ds1;
    rows_linear_backward(L.x, params_.get(layer_key(l, "Wq")), dq, grad.get(layer_key(l, "Wq")), nullptr, &dx);
    rows_linear_backward(L.x, params_.get(layer_key(l, "Wk")), dk, grad.get(layer_key(l, "Wk")), nullptr, &dx);
    rows_linear_backward(L.x, params_.get(layer_key(l, "Wv")), dv, grad.get(layer_key(l, "Wv")), nullptr, &dx);
    dy = std::move(dx);
  }

  // Token embedding backward (temporal slice is fixed).
  const std::size_t dt = cfg_.d_time, dvw = cfg_.d_value;
  Matrix& g_type = grad.get("type_emb");
  std::vector<double> dec_in(cfg_.decision_width());
  for (std::size_t s = 0; s < steps; ++s) {
    const Step& st = window[s];
    for (std::size_t ty = 0; ty < kTokensPerStep; ++ty) {
      const std::size_t row = s * kTokensPerStep + ty;
      auto dyr = dy.row(row);
      std::span<const double> dval = dyr.subspan(dt, dvw);
      for (std::size_t e = 0; e < cfg_.d_type; ++e) g_type(ty, e) += dyr[dt + dvw + e];
      switch (static_cast<TokenType>(ty)) {
        case TokenType::Rtg: {
          const double in[1] = {st.rtg};
          affine_backward(in, params_.get("val_rtg.W"), dval, grad.get("val_rtg.W"), grad.get("val_rtg.b"), {});
          break;
        }
        case TokenType::Obs:
          affine_backward(st.obs, params_.get("val_obs.W"), dval, grad.get("val_obs.W"), grad.get("val_obs.b"), {});
          break;
        case TokenType::Dec: {
          std::fill(dec_in.begin(), dec_in.end(), 0.0);
          if (cfg_.action_mode == ActionMode::Discrete) {
            dec_in[static_cast<std::size_t>(st.decision)] = 1.0;
          } else {
            dec_in[0] = static_cast<double>(st.decision);
          }
          affine_backward(dec_in, params_.get("val_dec.W"), dval, grad.get("val_dec.W"), grad.get("val_dec.b"), {});
          break;
        }
        case TokenType::Wait: {
          const double in[1] = {st.wait};
          affine_backward(in, params_.get("val_wait.W"), dval, grad.get("val_wait.W"), grad.get("val_wait.b"), {});
          break;
        }
      }
    }
  }
  return loss;
}

ActionPrediction SequenceModel::predict_action(std::span<const Step> context, bool mask_wait) const {
  if (context.empty()) throw EmptyWindow();
  if (context.size() > cfg_.context) context = context.subspan(context.size() - cfg_.context);
  std::vector<Step> window(context.begin(), context.end());
  window.back().decision = kBenign;
  window.back().wait = 0.0;

  ActionPrediction pred;
  const ForwardOutput first = forward(window);
  auto last = first.decision.row(window.size() - 1);
  pred.logits.assign(last.begin(), last.end());
  if (cfg_.action_mode == ActionMode::Discrete) {
    pred.decision = argmax_decision(pred.logits, mask_wait);
  } else {
    pred.decision_value = pred.logits[0];
    pred.decision = static_cast<int>(std::clamp(std::lround(pred.decision_value), 0L,
                                                static_cast<long>(mask_wait ? kMalicious : kWait)));
  }
  // The wait head conditions on the chosen decision.
  window.back().decision = pred.decision;
  const ForwardOutput second = forward(window);
  pred.wait = std::max(second.wait_pred.back(), 0.0);
  return pred;
}

TrainReport train_sequence_model(SequenceModel& model, std::span<const Trajectory> trajectories,
                                 const TrainConfig& cfg, std::span<const double> trajectory_weights,
                                 const std::function<void(std::size_t, double)>& on_step) {
  if (trajectories.empty()) throw DataError("train: empty dataset");
  if (cfg.batch_size == 0) throw DataError("train: batch_size must be positive");
  TrainReport report;
  std::mt19937_64 rng(cfg.seed);
  Adam opt(model.params(), cfg.learning_rate);
  ParamSet grad = model.params().zeros_like();
  const double scale = 1.0 / static_cast<double>(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    grad.set_zero();
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const Window w = sample_window(trajectories, model.config().context, rng, trajectory_weights);
      batch_loss += scale * model.loss_and_grad(window_steps(trajectories, w), grad, scale);
    }
    if (!std::isfinite(batch_loss) || !grad.all_finite()) {
      std::ostringstream msg;
      msg << "sequence model training diverged at step " << step << " (batch loss " << batch_loss
          << ", learning_rate " << cfg.learning_rate << ")";
      throw NonFiniteLoss(msg.str());
    }
    clip_global_norm(grad, cfg.grad_clip);
    opt.step(model.params(), grad);
    report.loss_curve.push_back(batch_loss);
    if (on_step) on_step(step, batch_loss);
  }
  return report;
}

Json model_config_to_json(const ModelConfig& cfg) {
  return Json{{"K", cfg.context},
              {"d_time", cfg.d_time},
              {"d_value", cfg.d_value},
              {"d_type", cfg.d_type},
              {"d_model", cfg.d_model()},
              {"n_layers", cfg.n_layers},
              {"n_heads", cfg.n_heads},
              {"d_ff", cfg.d_ff},
              {"C", cfg.time_base},
              {"obs_dim", cfg.obs_dim},
              {"n_decisions", cfg.n_decisions},
              {"action_mode", cfg.action_mode == ActionMode::Discrete ? "discrete" : "continuous"},
              {"lambda_wait", cfg.lambda_wait}};
}

void save_sequence_model(const std::filesystem::path& path, const SequenceModel& model) {
  const ModelConfig& c = model.config();
  TensorContainer tc;
  tc.kind = ContainerKind::SequenceModel;
  auto i64 = [](std::size_t v) { return static_cast<std::int64_t>(v); };
  tc.meta = {i64(c.context), i64(c.d_time), i64(c.d_value), i64(c.d_type), i64(c.n_layers), i64(c.n_heads),
             i64(c.d_ff), std::bit_cast<std::int64_t>(c.time_base), i64(c.obs_dim), i64(c.n_decisions),
             static_cast<std::int64_t>(c.action_mode), std::bit_cast<std::int64_t>(c.lambda_wait)};
  tc.tensors = model.params();
  write_container(path, tc);
  write_text_file(path.string() + ".json", model_config_to_json(c).dump(2) + "\n");
}

SequenceModel load_sequence_model(const std::filesystem::path& path) {
  TensorContainer tc = read_container(path);
  if (tc.kind != ContainerKind::SequenceModel || tc.meta.size() != 12) {
    throw DataError(path.string() + ": not a sequence model parameter file");
  }
  auto sz = [&](std::size_t i) { return static_cast<std::size_t>(tc.meta[i]); };
  ModelConfig c;
  c.context = sz(0);
  c.d_time = sz(1);
  c.d_value = sz(2);
  c.d_type = sz(3);
  c.n_layers = sz(4);
  c.n_heads = sz(5);
  c.d_ff = sz(6);
  c.time_base = std::bit_cast<double>(tc.meta[7]);
  c.obs_dim = sz(8);
  c.n_decisions = sz(9);
  if (tc.meta[10] != 0 && tc.meta[10] != 1) throw DataError(path.string() + ": unknown action mode");
  c.action_mode = static_cast<ActionMode>(tc.meta[10]);
  c.lambda_wait = std::bit_cast<double>(tc.meta[11]);
  SequenceModel m(c);
  for (std::size_t i = 0; i < m.params().count(); ++i) {
    const Matrix& src = tc.tensors.get(m.params().name(i));
    if (src.rows() != m.params().at(i).rows() || src.cols() != m.params().at(i).cols()) {
      throw DataError(path.string() + ": tensor " + m.params().name(i) + " has inconsistent shape");
    }
    m.params().at(i) = src;
  }
  if (!m.params().all_finite()) throw DataError(path.string() + ": non-finite parameters");
  return m;
}

}  // namespace pktdt
