#include "pktdt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pktdt/error.hpp"

namespace pktdt {

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& ParamSet::add(std::string name, std::size_t rows, std::size_t cols) {
  tensors_.push_back({std::move(name), Matrix(rows, cols)});
  return tensors_.back().value;
}

Matrix& ParamSet::get(const std::string& name) {
  for (auto& t : tensors_) {
    if (t.name == name) return t.value;
  }
  throw DataError("no tensor named " + name);
}

const Matrix& ParamSet::get(const std::string& name) const {
  return const_cast<ParamSet*>(this)->get(name);
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& t : tensors_) out.add(t.name, t.value.rows(), t.value.cols());
  return out;
}

void ParamSet::set_zero() {
  for (auto& t : tensors_) t.value.fill(0.0);
}

void ParamSet::axpy(double scale, const ParamSet& other) {
  if (other.count() != count()) throw DimensionMismatch("parameter layouts differ");
  for (std::size_t i = 0; i < count(); ++i) {
    auto& dst = tensors_[i].value.data();
    const auto& src = other.tensors_[i].value.data();
    if (dst.size() != src.size()) throw DimensionMismatch("tensor " + tensors_[i].name + " shape differs");
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
  }
}

double ParamSet::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors_)
    for (double v : t.value.data()) s += v * v;
  return s;
}

bool ParamSet::all_finite() const {
  return std::all_of(tensors_.begin(), tensors_.end(),
                     [](const NamedTensor& t) { return t.value.all_finite(); });
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.count() != b.count()) return false;
  for (std::size_t i = 0; i < a.count(); ++i) {
    if (a.tensors_[i].name != b.tensors_[i].name || !(a.tensors_[i].value == b.tensors_[i].value)) return false;
  }
  return true;
}

void affine(std::span<const double> x, const Matrix& w, const Matrix& b, std::span<double> y) {
  const std::size_t in = w.rows();
  const std::size_t out = w.cols();
  if (x.size() != in || y.size() != out || b.size() != out) {
    throw DimensionMismatch("affine: shape mismatch");
  }
  const auto& bd = b.data();
  std::copy(bd.begin(), bd.end(), y.begin());
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    auto wr = w.row(i);
    for (std::size_t j = 0; j < out; ++j) y[j] += xi * wr[j];
  }
}

void affine_backward(std::span<const double> x, const Matrix& w, std::span<const double> dy,
                     Matrix& dw, Matrix& db, std::span<double> dx) {
  const std::size_t in = w.rows();
  const std::size_t out = w.cols();
  auto& dbd = db.data();
  for (std::size_t j = 0; j < out; ++j) dbd[j] += dy[j];
  for (std::size_t i = 0; i < in; ++i) {
    auto wr = w.row(i);
    auto dwr = dw.row(i);
    const double xi = x[i];
    double acc = 0.0;
    for (std::size_t j = 0; j < out; ++j) {
      dwr[j] += xi * dy[j];
      acc += wr[j] * dy[j];
    }
    if (!dx.empty()) dx[i] += acc;
  }
}

}  // namespace pktdt
