#pragma once

#include "pktdt/tensor.hpp"

namespace pktdt {

// Rescales grads so the global L2 norm is at most max_norm (<= 0 disables).
// Returns the pre-clip norm.
double clip_global_norm(ParamSet& grads, double max_norm);

class Sgd {
 public:
  explicit Sgd(double learning_rate) : lr_(learning_rate) {}
  void step(ParamSet& params, const ParamSet& grads) const { params.axpy(-lr_, grads); }

 private:
  double lr_;
};

class Adam {
 public:
  Adam(const ParamSet& params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(ParamSet& params, const ParamSet& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  ParamSet m_, v_;
};

}  // namespace pktdt
