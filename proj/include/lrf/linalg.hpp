#pragma once

#include "lrf/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace lrf::linalg {

/// Row-major double-precision matrix used for all internal accumulation.
struct Matrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::int64_t r, std::int64_t c) : rows(r), cols(c), values(static_cast<std::size_t>(r * c), 0.0) {}

  double& operator()(std::int64_t i, std::int64_t j) { return values[static_cast<std::size_t>(i * cols + j)]; }
  double operator()(std::int64_t i, std::int64_t j) const {
    return values[static_cast<std::size_t>(i * cols + j)];
  }

  static Matrix identity(std::int64_t n);
};

Matrix from_tensor(const DenseTensor& t);
DenseTensor to_tensor(const Matrix& m);

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double frobenius(const Matrix& a);
double frobenius(std::span<const float> values);
/// ‖a − b‖_F
double frobenius_distance(const Matrix& a, const Matrix& b);
/// Leading `k` columns (zero-padded when k exceeds the column count).
Matrix leading_columns(const Matrix& a, std::int64_t k);

/// Thin SVD: a = u · diag(s) · vᵀ with k = min(rows, cols), s non-increasing.
struct Svd {
  Matrix u;
  std::vector<double> s;
  Matrix v;
  int sweeps = 0;
};

inline constexpr int kJacobiMaxSweeps = 60;
inline constexpr double kJacobiTolerance = 1e-10;

/// One-sided Jacobi SVD. Tall inputs are first reduced by Householder QR so the
/// rotations act on a square factor. Throws NumericalError past the sweep cap.
Svd svd(const Matrix& a);

/// The `k` leading left singular vectors of `a` as orthonormal columns. When
/// k exceeds min(rows, cols) the basis is completed with arbitrary orthonormal
/// directions (their singular values are zero). Requires k <= rows.
Matrix left_singular_basis(const Matrix& a, std::int64_t k);

/// Thin Householder QR: a = q · r, q is rows×k with orthonormal columns, r is
/// k×cols upper triangular.
struct Qr {
  Matrix q;
  Matrix r;
};
Qr qr(const Matrix& a);

/// Column-pivoted QR: a[:, perm] = q · r, with |r_00| ≥ |r_11| ≥ ...
struct PivotedQr {
  Matrix q;
  Matrix r;
  std::vector<std::int64_t> perm;
};
PivotedQr qr_pivoted(const Matrix& a);

/// Mode-n unfolding: rows index axis `mode`, columns run over the remaining
/// axes in row-major order.
DenseTensor unfold(const DenseTensor& x, std::size_t mode);
DenseTensor fold(const DenseTensor& unfolded, std::size_t mode, const TensorShape& shape);

/// x ×_mode a, with a of shape (J, dims[mode]); the result replaces dims[mode]
/// by J.
DenseTensor mode_n_product(const DenseTensor& x, const DenseTensor& a, std::size_t mode);

/// Double-precision dense tensor for decomposition internals.
struct Tensor {
  std::vector<std::int64_t> dims;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> d);
  static Tensor from_dense(const DenseTensor& t);
  DenseTensor to_dense() const;
  std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
};

Matrix unfold(const Tensor& x, std::size_t mode);
Tensor fold(const Matrix& m, std::size_t mode, const std::vector<std::int64_t>& dims);
/// x ×_mode a with a of shape (J, dims[mode]).
Tensor mode_product(const Tensor& x, const Matrix& a, std::size_t mode);
/// Reorders axes: result axis i is input axis perm[i].
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
double frobenius(const Tensor& x);

} // namespace lrf::linalg
