// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gridcast {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with one to three axes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix views. A rank-1 tensor of length n reads as a 1 x n row.
  std::size_t rows() const { return rank() == 1 ? 1 : shape_[0]; }
  std::size_t cols() const { return rank() == 1 ? shape_[0] : shape_[1]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols(), cols()}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols(), cols()}; }

  void fill(double value);
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class Activation { identity, relu, sigmoid, tanh };

std::string to_string(Activation kind);
Activation activation_from_string(const std::string& name);

// Matrix products. Rank-1 operands are treated as single rows.
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a += factor * b
void axpy(Tensor& a, double factor, const Tensor& b);

// x[n x m] + bias[m] on every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
// Column sums of x[n x m] -> [m].
Tensor column_sums(const Tensor& x);

Tensor activate(const Tensor& x, Activation kind);
// Derivative of the activation expressed through its output y = act(x).
Tensor activation_grad_from_output(const Tensor& y, Activation kind);

// Numerically stable softmax of a rank-1 tensor.
Tensor softmax(const Tensor& x);
// Softmax applied independently to each row of a matrix.
Tensor softmax_rows(const Tensor& x);

double sum(const Tensor& x);
double max_abs(const Tensor& x);
bool all_finite(const Tensor& x);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace gridcast
