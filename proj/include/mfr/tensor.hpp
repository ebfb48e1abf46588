// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major f64 tensors of rank 0, 1 or 2 and the primitive kernels
// built on them. Tensors are immutable after construction and share their
// buffer on copy.

#ifndef MFR_TENSOR_HPP_
#define MFR_TENSOR_HPP_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mfr {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor {
 public:
  // Rank-0 tensor holding 0.0.
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor identity(std::size_t n);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data);
  static Tensor vector(std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t r, std::size_t c) const;
  // Value of a tensor holding exactly one element.
  double item() const;

  // Same buffer, new shape of equal element count.
  Tensor reshaped(Shape shape) const;
  // Copy of row r of a matrix as a vector.
  Tensor row(std::size_t r) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  // Bitwise equality of shape and contents.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

// Elementwise and structural kernels. Every kernel raises NonFiniteError if
// its result would contain NaN or Inf.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
// Elementwise power; the base must be positive unless exponent is integral.
Tensor pow(const Tensor& a, double exponent);

// [m x k] . [k x n]; each output sums over k left to right.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// [m x n] -> [n]
Tensor sum_rows(const Tensor& a);
// [m x n] -> [m]
Tensor sum_cols(const Tensor& a);
Tensor sum_all(const Tensor& a);
// [n] -> [m x n], every row equal to v.
Tensor broadcast_rows(const Tensor& v, std::size_t m);
// [m] -> [m x n], every column equal to v.
Tensor broadcast_cols(const Tensor& v, std::size_t n);
// Scalar to any shape.
Tensor broadcast_scalar(const Tensor& s, const Shape& shape);

Tensor log_softmax_rows(const Tensor& a);
// [m x n], indices[m] -> [m] with out[i] = a[i, indices[i]].
Tensor pick(const Tensor& a, std::span<const std::size_t> indices);
// Adjoint of pick: [m] -> [m x n] with v[i] at (i, indices[i]), zeros else.
Tensor scatter(const Tensor& v, std::span<const std::size_t> indices,
               std::size_t n);

inline constexpr double kNormEpsilon = 1e-12;

// Each row divided by its Euclidean norm. DegenerateError if a norm is
// below eps.
Tensor l2_normalize_rows(const Tensor& x, double eps = kNormEpsilon);

// -log softmax(logits)[label] for a vector of logits.
double softmax_cross_entropy(const Tensor& logits, std::size_t label);

double dot(const Tensor& a, const Tensor& b);
double norm(const Tensor& a);
double max_abs(const Tensor& a);
bool all_finite(std::span<const double> values);

// Row-wise concatenation of matrices with equal column count.
Tensor concat_rows(std::span<const Tensor> parts);
// Column-wise concatenation of two matrices with equal row count.
Tensor concat_cols(const Tensor& a, const Tensor& b);

}  // namespace mfr

#endif  // MFR_TENSOR_HPP_
