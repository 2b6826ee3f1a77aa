#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pktdt {

// Dense row-major matrix of doubles. Weight matrices follow the
// (fan_in x fan_out) convention so a layer computes y = x W + b.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct NamedTensor {
  std::string name;
  Matrix value;
};

// Ordered collection of named tensors. Model parameter sets and their
// gradients share this layout so optimizers and gradient checks can walk
// them generically.
class ParamSet {
 public:
  Matrix& add(std::string name, std::size_t rows, std::size_t cols);

  Matrix& at(std::size_t i) { return tensors_[i].value; }
  const Matrix& at(std::size_t i) const { return tensors_[i].value; }
  Matrix& get(const std::string& name);
  const Matrix& get(const std::string& name) const;
  const std::string& name(std::size_t i) const { return tensors_[i].name; }
  std::size_t count() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  // Same names and shapes, all zeros.
  ParamSet zeros_like() const;
  void set_zero();
  // this += scale * other (layouts must match).
  void axpy(double scale, const ParamSet& other);
  double squared_norm() const;
  bool all_finite() const;

  std::vector<NamedTensor>& tensors() { return tensors_; }
  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<NamedTensor> tensors_;
};

// y[j] = b[j] + sum_i x[i] * W(i, j)
void affine(std::span<const double> x, const Matrix& w, const Matrix& b, std::span<double> y);

// Backward of affine: accumulates into dW, db and (if non-empty) dx.
void affine_backward(std::span<const double> x, const Matrix& w, std::span<const double> dy,
                     Matrix& dw, Matrix& db, std::span<double> dx);

}  // namespace pktdt
