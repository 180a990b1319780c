// SPDX-License-Identifier: Apache-2.0
#include "gridcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "gridcast/error.hpp"
#include "gridcast/kernels.hpp"

namespace gridcast {

namespace {

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_rank(const Shape& shape) {
  if (shape.empty() || shape.size() > 3)
    throw DimensionError("tensor rank must be 1..3, got shape " + shape_string(shape));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() > 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

bool use_parallel(std::size_t m, std::size_t k, std::size_t n) {
  return m * k * n >= kernels::kParallelWorkThreshold && m > 1;
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  auto src = x.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* what, F f) {
  require_same_shape(a, b, what);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_rank(shape_);
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_rank(shape_);
  if (shape_product(shape_) != data_.size())
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({n, m}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

std::string to_string(Activation kind) {
  switch (kind) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  throw ParameterError("unknown activation '" + name + "'");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner extents differ for " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  Tensor c({m, n});
  if (use_parallel(m, k, n))
    kernels::parallel::matmul(a.values(), b.values(), c.values(), m, k, n);
  else
    kernels::serial::matmul(a.values(), b.values(), c.values(), m, k, n);
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul_tn: row counts differ for " + shape_string(a.shape()) + "^T x " +
                         shape_string(b.shape()));
  Tensor c({m, n});
  if (use_parallel(m, k, n))
    kernels::parallel::matmul_tn(a.values(), b.values(), c.values(), m, k, n);
  else
    kernels::serial::matmul_tn(a.values(), b.values(), c.values(), m, k, n);
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw DimensionError("matmul_nt: column counts differ for " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()) + "^T");
  Tensor c({m, n});
  if (use_parallel(m, k, n))
    kernels::parallel::matmul_nt(a.values(), b.values(), c.values(), m, k, n);
  else
    kernels::serial::matmul_nt(a.values(), b.values(), c.values(), m, k, n);
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t(j, i) = a[i * n + j];
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return zip(a, b, "hadamard", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double factor) {
  return map(a, [factor](double v) { return v * factor; });
}

void axpy(Tensor& a, double factor, const Tensor& b) {
  require_same_shape(a, b, "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += factor * b[i];
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row_bias");
  const std::size_t n = x.rows(), m = x.cols();
  if (bias.size() != m)
    throw DimensionError("add_row_bias: bias " + shape_string(bias.shape()) + " vs rows of " +
                         shape_string(x.shape()));
  Tensor out = x;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bias[j];
  return out;
}

Tensor column_sums(const Tensor& x) {
  require_matrix(x, "column_sums");
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out({m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += x[i * m + j];
  return out;
}

Tensor activate(const Tensor& x, Activation kind) {
  switch (kind) {
    case Activation::identity: return x;
    case Activation::relu: return map(x, [](double v) { return v > 0.0 ? v : 0.0; });
    case Activation::sigmoid: return map(x, sigmoid);
    case Activation::tanh: return map(x, [](double v) { return std::tanh(v); });
  }
  return x;
}

Tensor activation_grad_from_output(const Tensor& y, Activation kind) {
  switch (kind) {
    case Activation::identity: return Tensor(y.shape(), 1.0);
    case Activation::relu: return map(y, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::sigmoid: return map(y, [](double v) { return v * (1.0 - v); });
    case Activation::tanh: return map(y, [](double v) { return 1.0 - v * v; });
  }
  return Tensor(y.shape(), 1.0);
}

Tensor softmax(const Tensor& x) {
  if (x.rank() != 1 || x.size() == 0)
    throw DimensionError("softmax: expected a non-empty vector, got " + shape_string(x.shape()));
  const double peak = *std::max_element(x.values().begin(), x.values().end());
  Tensor out(x.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - peak);
    total += out[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] /= total;
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  if (x.size() == 0) throw DimensionError("softmax_rows: empty input");
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    auto src = x.row(i);
    auto dst = out.row(i);
    const double peak = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      dst[j] = std::exp(src[j] - peak);
      total += dst[j];
    }
    for (std::size_t j = 0; j < m; ++j) dst[j] /= total;
  }
  return out;
}

double sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return s;
}

double max_abs(const Tensor& x) {
  double m = 0.0;
  for (double v : x.values()) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(const Tensor& x) {
  return std::all_of(x.values().begin(), x.values().end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

}  // namespace gridcast
