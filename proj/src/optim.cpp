#include "pktdt/optim.hpp"

#include <cmath>

namespace pktdt {

double clip_global_norm(ParamSet& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& t : grads.tensors())
      for (auto& v : t.value.data()) v *= scale;
  }
  return norm;
}

Adam::Adam(const ParamSet& params, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(params.zeros_like()), v_(params.zeros_like()) {}

void Adam::step(ParamSet& params, const ParamSet& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto& p = params.at(i).data();
    const auto& g = grads.at(i).data();
    auto& m = m_.at(i).data();
    auto& v = v_.at(i).data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

}  // namespace pktdt
