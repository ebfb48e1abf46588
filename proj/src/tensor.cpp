// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mfr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "mfr/error.hpp"

namespace mfr {
namespace {

Tensor checked(Shape shape, std::vector<double> data, const char* op) {
  if (!all_finite(data)) {
    throw NonFiniteError(std::string(op) + ": result contains NaN or Inf");
  }
  return Tensor(std::move(shape), std::move(data));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_to_string(a.shape()));
  }
}

template <typename F>
Tensor unary(const Tensor& a, F f, const char* op) {
  std::vector<double> out(a.size());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return checked(a.shape(), std::move(out), op);
}

template <typename F>
Tensor binary(const Tensor& a, const Tensor& b, F f, const char* op) {
  require_same_shape(a, b, op);
  std::vector<double> out(a.size());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return checked(a.shape(), std::move(out), op);
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor::Tensor()
    : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_.size() > 2) {
    throw DimensionError("tensor rank above 2 is unsupported: " +
                         shape_to_string(shape_));
  }
  for (auto e : shape_) {
    if (e == 0) {
      throw DimensionError("tensor extents must be positive: " +
                           shape_to_string(shape_));
    }
  }
  if (data.size() != shape_numel(shape_)) {
    throw DimensionError("buffer of " + std::to_string(data.size()) +
                         " elements does not fit shape " +
                         shape_to_string(shape_));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(d));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::vector(std::vector<double> data) {
  std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on " + shape_to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on " + shape_to_string(shape_));
  return shape_[1];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return (*data_)[r * shape_[1] + c];
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item() on non-singleton " + shape_to_string(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != size()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " +
                         shape_to_string(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::row(std::size_t r) const {
  std::size_t n = cols();
  if (r >= rows()) throw IndexError("row index out of range");
  auto d = data();
  return Tensor({n}, std::vector<double>(d.begin() + r * n, d.begin() + (r + 1) * n));
}

bool Tensor::identical(const Tensor& other) const {
  return shape_ == other.shape_ &&
         std::memcmp(data_->data(), other.data_->data(),
                     size() * sizeof(double)) == 0;
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x + y; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x - y; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x * y; }, "mul");
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return x * factor; }, "scale");
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, [value](double x) { return x + value; }, "add_scalar");
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, "tanh");
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, "exp");
}

Tensor pow(const Tensor& a, double exponent) {
  return unary(a, [exponent](double x) { return std::pow(x, exponent); }, "pow");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " +
                         shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = out.data();
  // i-k-j order: for each output element the k terms are added in
  // increasing k, and the inner loop over j vectorizes.
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return checked({m, n}, std::move(out), "matmul");
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto d = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = d[i * n + j];
  }
  return Tensor({n, m}, std::move(out));
}

Tensor sum_rows(const Tensor& a) {
  require_rank(a, 2, "sum_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  auto d = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += d[i * n + j];
  }
  return checked({n}, std::move(out), "sum_rows");
}

Tensor sum_cols(const Tensor& a) {
  require_rank(a, 2, "sum_cols");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  auto d = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += d[i * n + j];
    out[i] = s;
  }
  return checked({m}, std::move(out), "sum_cols");
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return checked({}, {s}, "sum_all");
}

Tensor broadcast_rows(const Tensor& v, std::size_t m) {
  require_rank(v, 1, "broadcast_rows");
  const std::size_t n = v.size();
  std::vector<double> out(m * n);
  auto d = v.data();
  for (std::size_t i = 0; i < m; ++i) std::copy(d.begin(), d.end(), out.begin() + i * n);
  return Tensor({m, n}, std::move(out));
}

Tensor broadcast_cols(const Tensor& v, std::size_t n) {
  require_rank(v, 1, "broadcast_cols");
  const std::size_t m = v.size();
  std::vector<double> out(m * n);
  auto d = v.data();
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(out.begin() + i * n, out.begin() + (i + 1) * n, d[i]);
  }
  return Tensor({m, n}, std::move(out));
}

Tensor broadcast_scalar(const Tensor& s, const Shape& shape) {
  return Tensor::filled(shape, s.item());
}

Tensor log_softmax_rows(const Tensor& a) {
  require_rank(a, 2, "log_softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto d = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = d.data() + i * n;
    double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return checked({m, n}, std::move(out), "log_softmax_rows");
}

Tensor pick(const Tensor& a, std::span<const std::size_t> indices) {
  require_rank(a, 2, "pick");
  if (indices.size() != a.rows()) {
    throw DimensionError("pick: " + std::to_string(indices.size()) +
                         " indices for " + shape_to_string(a.shape()));
  }
  std::vector<double> out(a.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (indices[i] >= a.cols()) throw IndexError("pick: column index out of range");
    out[i] = a.at(i, indices[i]);
  }
  return Tensor({a.rows()}, std::move(out));
}

Tensor scatter(const Tensor& v, std::span<const std::size_t> indices,
               std::size_t n) {
  require_rank(v, 1, "scatter");
  if (indices.size() != v.size()) {
    throw DimensionError("scatter: index count does not match values");
  }
  std::vector<double> out(v.size() * n, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (indices[i] >= n) throw IndexError("scatter: column index out of range");
    out[i * n + indices[i]] = v[i];
  }
  return Tensor({v.size(), n}, std::move(out));
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  auto d = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += d[i * n + j] * d[i * n + j];
    double nrm = std::sqrt(ss);
    if (!(nrm >= eps)) {
      throw DegenerateError("l2_normalize_rows: row " + std::to_string(i) +
                            " has norm below epsilon (collapsed embedding)");
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = d[i * n + j] / nrm;
  }
  return checked({m, n}, std::move(out), "l2_normalize_rows");
}

double softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  require_rank(logits, 1, "softmax_cross_entropy");
  if (label >= logits.size()) {
    throw IndexError("softmax_cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(logits.size()) +
                     " classes");
  }
  auto d = logits.data();
  if (!all_finite(d)) throw NonFiniteError("softmax_cross_entropy: non-finite logits");
  double mx = *std::max_element(d.begin(), d.end());
  double s = 0.0;
  for (double v : d) s += std::exp(v - mx);
  return mx + std::log(s) - d[label];
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) throw DimensionError("concat_rows: column mismatch");
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor({m, n}, std::move(out));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw DimensionError("concat_cols: row mismatch");
  const std::size_t m = a.rows(), na = a.cols(), nb = b.cols();
  std::vector<double> out(m * (na + nb));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < na; ++j) out[i * (na + nb) + j] = a.at(i, j);
    for (std::size_t j = 0; j < nb; ++j) out[i * (na + nb) + na + j] = b.at(i, j);
  }
  return Tensor({m, na + nb}, std::move(out));
}

}  // namespace mfr
