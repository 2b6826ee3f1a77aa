#pragma once

// Independent reference implementations used as test oracles. None of these
// call into the library code they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pktdt/tensor.hpp"
#include "pktdt/trajectory.hpp"

namespace oracle {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // "tensor[index]"
  std::size_t checked = 0;
};

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// Fourth-order central differences over every scalar of params against an
// analytic gradient with the same layout. The wider stencil keeps round-off
// below the 1e-6 floor for gradients near zero.
inline GradCheck check_gradient(pktdt::ParamSet& params, const pktdt::ParamSet& analytic,
                                const std::function<double()>& loss, double eps = 1e-4) {
  GradCheck out;
  for (std::size_t t = 0; t < params.count(); ++t) {
    auto& data = params.at(t).data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double saved = data[k];
      auto at = [&](double dx) {
        data[k] = saved + dx;
        return loss();
      };
      const double numeric = (8.0 * (at(eps) - at(-eps)) - (at(2 * eps) - at(-2 * eps))) / (12.0 * eps);
      data[k] = saved;
      const double e = rel_error(analytic.at(t).data()[k], numeric);
      ++out.checked;
      if (e > out.max_rel_error) {
        out.max_rel_error = e;
        out.worst = params.name(t) + "[" + std::to_string(k) + "]";
      }
    }
  }
  return out;
}

// R_i = sum_{k >= i} r_k, accumulated from the back.
inline std::vector<double> suffix_sums(const std::vector<double>& r) {
  std::vector<double> out(r.size());
  double acc = 0.0;
  for (std::size_t i = r.size(); i-- > 0;) {
    acc = r[i] + acc;
    out[i] = acc;
  }
  return out;
}

// Five-case packet reward written out as a lookup table.
inline double reward_table(int d, int label, double c_tp, double c_tn, double c_fp, double c_fn, double c_wait) {
  static const int kCase[3][2] = {{0, 3}, {2, 1}, {4, 4}};  // [d][label] -> case
  const double values[5] = {c_tp, c_tn, c_fp, c_fn, c_wait};
  return values[kCase[d][label]];
}

struct Metrics {
  double accuracy, precision, recall, f1;
  int tp, fp, fn, tn;
};

// Confusion arithmetic with malicious (1) as the positive class.
inline Metrics confusion(const std::vector<int>& decisions, const std::vector<int>& labels) {
  Metrics m{};
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const int d = decisions[i], y = labels[i];
    m.tp += d == 1 && y == 1;
    m.fp += d == 1 && y == 0;
    m.fn += d == 0 && y == 1;
    m.tn += d == 0 && y == 0;
  }
  const double n = static_cast<double>(decisions.size());
  m.accuracy = n > 0 ? (m.tp + m.tn) / n : 0.0;
  m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline void randomize(pktdt::ParamSet& p, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& t : p.tensors()) {
    for (auto& v : t.value.data()) v = u(rng);
  }
}

// A random step window (increasing times, valid decisions).
inline std::vector<pktdt::Step> random_steps(std::mt19937_64& rng, std::size_t n, std::size_t obs_dim) {
  std::uniform_real_distribution<double> gap(0.01, 2.0);
  std::uniform_real_distribution<double> rtg(-1.5, 1.5);
  std::uniform_int_distribution<int> dec(0, 2);
  std::vector<pktdt::Step> steps(n);
  double t = 0.0;
  for (auto& s : steps) {
    s.t = t;
    s.rtg = rtg(rng);
    s.obs = random_vector(rng, obs_dim);
    s.decision = dec(rng);
    s.wait = gap(rng);
    t += s.wait;
  }
  return steps;
}

// A labeled encoded flow with the given packet count.
inline pktdt::EncodedFlow random_flow(std::mt19937_64& rng, std::size_t packets, pktdt::Label label,
                                      std::size_t obs_dim = 2, const std::string& id = "f") {
  pktdt::EncodedFlow f;
  f.flow_id = id;
  f.label = label;
  std::uniform_real_distribution<double> gap(0.1, 3.0);
  double t = 0.0;
  for (std::size_t i = 0; i < packets; ++i) {
    f.packets.push_back({t, random_vector(rng, obs_dim)});
    t += gap(rng);
  }
  return f;
}

}  // namespace oracle
