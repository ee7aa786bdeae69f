#include "lrf/linalg.hpp"

#include "lrf/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace lrf::linalg {

namespace {

/// Column-major scratch copy; every kernel below sweeps columns.
struct ColMajor {
  std::int64_t rows = 0, cols = 0;
  std::vector<double> v;

  explicit ColMajor(const Matrix& m) : rows(m.rows), cols(m.cols), v(m.values.size()) {
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < cols; ++j) v[static_cast<std::size_t>(j * rows + i)] = m(i, j);
  }
  ColMajor(std::int64_t r, std::int64_t c) : rows(r), cols(c), v(static_cast<std::size_t>(r * c), 0.0) {}

  double* col(std::int64_t j) { return v.data() + j * rows; }
  const double* col(std::int64_t j) const { return v.data() + j * rows; }

  Matrix to_matrix() const {
    Matrix m(rows, cols);
    for (std::int64_t j = 0; j < cols; ++j)
      for (std::int64_t i = 0; i < rows; ++i) m(i, j) = v[static_cast<std::size_t>(j * rows + i)];
    return m;
  }
};

double dot(const double* a, const double* b, std::int64_t n) {
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

/// Householder QR on a column-major copy. With `pivot`, the column of largest
/// remaining norm is moved forward at each step (ties keep the lower index).
PivotedQr householder(const Matrix& a, bool pivot) {
  const std::int64_t m = a.rows, n = a.cols, k = std::min(m, n);
  ColMajor work(a);
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<double>> reflectors;
  reflectors.reserve(static_cast<std::size_t>(k));

  for (std::int64_t j = 0; j < k; ++j) {
    if (pivot) {
      std::int64_t best = j;
      double best_norm = -1.0;
      for (std::int64_t c = j; c < n; ++c) {
        const double* col = work.col(c) + j;
        const double nrm = dot(col, col, m - j);
        if (nrm > best_norm * (1.0 + 1e-12) + 1e-300) {
          best_norm = nrm;
          best = c;
        }
      }
      if (best != j) {
        std::swap_ranges(work.col(j), work.col(j) + m, work.col(best));
        std::swap(perm[static_cast<std::size_t>(j)], perm[static_cast<std::size_t>(best)]);
      }
    }
    double* x = work.col(j) + j;
    const std::int64_t len = m - j;
    const double norm = std::sqrt(dot(x, x, len));
    std::vector<double> vh(x, x + len);
    if (norm == 0.0) {
      reflectors.emplace_back();
      continue;
    }
    const double alpha = x[0] >= 0.0 ? -norm : norm;
    vh[0] -= alpha;
    const double vnorm2 = dot(vh.data(), vh.data(), len);
    if (vnorm2 == 0.0) {
      reflectors.emplace_back();
      continue;
    }
    for (std::int64_t c = j; c < n; ++c) {
      double* col = work.col(c) + j;
      const double f = 2.0 * dot(vh.data(), col, len) / vnorm2;
      for (std::int64_t i = 0; i < len; ++i) col[i] -= f * vh[static_cast<std::size_t>(i)];
    }
    for (std::int64_t i = 1; i < len; ++i) x[i] = 0.0;
    x[0] = alpha;
    for (auto& e : vh) e /= std::sqrt(vnorm2);
    reflectors.push_back(std::move(vh));
  }

  PivotedQr out;
  out.r = Matrix(k, n);
  for (std::int64_t i = 0; i < k; ++i)
    for (std::int64_t c = i; c < n; ++c) out.r(i, c) = work.col(c)[i];

  // q = H_0 · H_1 ⋯ H_{k-1} · I[:, :k], applied right to left.
  ColMajor q(m, k);
  for (std::int64_t j = 0; j < k; ++j) q.col(j)[j] = 1.0;
  for (std::int64_t j = k; j-- > 0;) {
    const auto& vh = reflectors[static_cast<std::size_t>(j)];
    if (vh.empty()) continue;
    const std::int64_t len = m - j;
    for (std::int64_t c = 0; c < k; ++c) {
      double* col = q.col(c) + j;
      const double f = 2.0 * dot(vh.data(), col, len);
      for (std::int64_t i = 0; i < len; ++i) col[i] -= f * vh[static_cast<std::size_t>(i)];
    }
  }
  out.q = q.to_matrix();
  out.perm = std::move(perm);
  return out;
}

/// Extends the nonzero columns of `u` (flagged by `filled`) to an orthonormal
/// set via Gram–Schmidt against the standard basis.
void complete_basis(ColMajor& u, const std::vector<bool>& filled) {
  const std::int64_t m = u.rows;
  std::int64_t candidate = 0;
  for (std::int64_t j = 0; j < u.cols; ++j) {
    if (filled[static_cast<std::size_t>(j)]) continue;
    for (; candidate < m; ++candidate) {
      std::vector<double> e(static_cast<std::size_t>(m), 0.0);
      e[static_cast<std::size_t>(candidate)] = 1.0;
      for (int pass = 0; pass < 2; ++pass)
        for (std::int64_t c = 0; c < u.cols; ++c) {
          if (c == j || (!filled[static_cast<std::size_t>(c)] && c > j)) continue;
          const double* col = u.col(c);
          const double f = dot(col, e.data(), m);
          for (std::int64_t i = 0; i < m; ++i) e[static_cast<std::size_t>(i)] -= f * col[i];
        }
      const double nrm = std::sqrt(dot(e.data(), e.data(), m));
      if (nrm > 1e-8) {
        for (std::int64_t i = 0; i < m; ++i) u.col(j)[i] = e[static_cast<std::size_t>(i)] / nrm;
        ++candidate;
        break;
      }
    }
  }
}

/// One-sided Jacobi on a matrix with rows >= cols.
Svd jacobi(const Matrix& a) {
  const std::int64_t m = a.rows, n = a.cols;
  ColMajor b(a);
  ColMajor v(n, n);
  for (std::int64_t j = 0; j < n; ++j) v.col(j)[j] = 1.0;
  // Columns below this squared norm are rounding noise of a rank-deficient
  // input; rotating them against each other never settles.
  const double floor = 1e-30 * dot(a.values.data(), a.values.data(), m * n);

  int sweep = 0;
  for (;; ++sweep) {
    if (sweep >= kJacobiMaxSweeps)
      throw NumericalError("Jacobi SVD did not converge within " + std::to_string(kJacobiMaxSweeps) +
                           " sweeps (" + std::to_string(m) + "x" + std::to_string(n) + ")");
    bool rotated = false;
    for (std::int64_t p = 0; p + 1 < n; ++p) {
      for (std::int64_t q = p + 1; q < n; ++q) {
        double* bp = b.col(p);
        double* bq = b.col(q);
        const double alpha = dot(bp, bp, m);
        const double beta = dot(bq, bq, m);
        const double gamma = dot(bp, bq, m);
        if (gamma == 0.0 || std::abs(gamma) <= kJacobiTolerance * std::sqrt(alpha * beta)) continue;
        if (std::min(alpha, beta) <= floor) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::int64_t i = 0; i < m; ++i) {
          const double x = bp[i], y = bq[i];
          bp[i] = c * x - s * y;
          bq[i] = s * x + c * y;
        }
        double* vp = v.col(p);
        double* vq = v.col(q);
        for (std::int64_t i = 0; i < n; ++i) {
          const double x = vp[i], y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(static_cast<std::size_t>(n));
  for (std::int64_t j = 0; j < n; ++j) sigma[static_cast<std::size_t>(j)] = std::sqrt(dot(b.col(j), b.col(j), m));
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) {
    return sigma[static_cast<std::size_t>(x)] > sigma[static_cast<std::size_t>(y)];
  });

  const double smax = n > 0 ? sigma[static_cast<std::size_t>(order[0])] : 0.0;
  const double cutoff = std::max(smax, 1.0) * 1e-300;
  ColMajor u(m, n);
  ColMajor vs(n, n);
  std::vector<bool> filled(static_cast<std::size_t>(n), false);
  Svd out;
  out.s.resize(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    const auto j = order[static_cast<std::size_t>(k)];
    const double sj = sigma[static_cast<std::size_t>(j)];
    out.s[static_cast<std::size_t>(k)] = sj;
    std::copy(v.col(j), v.col(j) + n, vs.col(k));
    if (sj > cutoff && sj > smax * 1e-14) {
      for (std::int64_t i = 0; i < m; ++i) u.col(k)[i] = b.col(j)[i] / sj;
      filled[static_cast<std::size_t>(k)] = true;
    }
  }
  complete_basis(u, filled);
  out.u = u.to_matrix();
  out.v = vs.to_matrix();
  out.sweeps = sweep + 1;
  return out;
}

std::size_t to_index(std::int64_t v) { return static_cast<std::size_t>(v); }

} // namespace

Matrix Matrix::identity(std::int64_t n) {
  Matrix m(n, n);
  for (std::int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix from_tensor(const DenseTensor& t) {
  if (t.shape().rank() != 2) throw ShapeError("expected a rank-2 tensor, got " + t.shape().to_string());
  Matrix m(t.shape()[0], t.shape()[1]);
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = t.data()[i];
  return m;
}

DenseTensor to_tensor(const Matrix& m) {
  std::vector<float> data(m.values.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(m.values[i]);
  return DenseTensor(TensorShape{m.rows, m.cols}, std::move(data));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols) + " vs " +
                     std::to_string(b.rows) + ")");
  Matrix c(a.rows, b.cols);
  for (std::int64_t i = 0; i < a.rows; ++i) {
    double* crow = &c.values[to_index(i * c.cols)];
    for (std::int64_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b.values[to_index(k * b.cols)];
      for (std::int64_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw ShapeError("matmul_tn: row counts differ");
  Matrix c(a.cols, b.cols);
  for (std::int64_t k = 0; k < a.rows; ++k) {
    const double* arow = &a.values[to_index(k * a.cols)];
    const double* brow = &b.values[to_index(k * b.cols)];
    for (std::int64_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = &c.values[to_index(i * c.cols)];
      for (std::int64_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::int64_t i = 0; i < a.rows; ++i)
    for (std::int64_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

double frobenius(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values) s += v * v;
  return std::sqrt(s);
}

double frobenius(std::span<const float> values) {
  double s = 0.0;
  for (float v : values) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("frobenius_distance: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return std::sqrt(s);
}

Matrix leading_columns(const Matrix& a, std::int64_t k) {
  Matrix out(a.rows, k);
  const auto keep = std::min(k, a.cols);
  for (std::int64_t i = 0; i < a.rows; ++i)
    for (std::int64_t j = 0; j < keep; ++j) out(i, j) = a(i, j);
  return out;
}

Svd svd(const Matrix& a) {
  if (a.rows == 0 || a.cols == 0) throw ShapeError("svd of an empty matrix");
  for (double v : a.values)
    if (!std::isfinite(v)) throw NumericalError("svd input contains non-finite values");
  if (a.rows < a.cols) {
    Svd t = svd(transpose(a));
    std::swap(t.u, t.v);
    return t;
  }
  if (a.rows > a.cols + a.cols / 4) {
    // Reduce to the square triangular factor first: a = q·r, r = ur·s·vᵀ.
    auto f = householder(a, false);
    Svd inner = jacobi(f.r);
    inner.u = matmul(f.q, inner.u);
    return inner;
  }
  return jacobi(a);
}

Matrix left_singular_basis(const Matrix& a, std::int64_t k) {
  if (k < 1 || k > a.rows) throw ShapeError("left_singular_basis: k out of range");
  const Svd f = svd(a);
  const auto have = std::min(k, f.u.cols);
  ColMajor u(a.rows, k);
  std::vector<bool> filled(to_index(k), false);
  for (std::int64_t j = 0; j < have; ++j) {
    if (f.s[to_index(j)] <= 0.0 && j > 0) continue;
    for (std::int64_t i = 0; i < a.rows; ++i) u.col(j)[i] = f.u(i, j);
    filled[to_index(j)] = true;
  }
  complete_basis(u, filled);
  return u.to_matrix();
}

Qr qr(const Matrix& a) {
  auto f = householder(a, false);
  return {std::move(f.q), std::move(f.r)};
}

PivotedQr qr_pivoted(const Matrix& a) { return householder(a, true); }

Tensor::Tensor(std::vector<std::int64_t> d) : dims(std::move(d)), values(to_index(product(dims)), 0.0) {}

Tensor Tensor::from_dense(const DenseTensor& t) {
  Tensor out;
  out.dims = t.shape().dims();
  out.values.assign(t.data().begin(), t.data().end());
  return out;
}

DenseTensor Tensor::to_dense() const {
  std::vector<float> data(values.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(values[i]);
  return DenseTensor(TensorShape(dims), std::move(data));
}

Matrix unfold(const Tensor& x, std::size_t mode) {
  if (mode >= x.dims.size())
    throw ShapeError("unfold: mode " + std::to_string(mode) + " out of range for rank " +
                     std::to_string(x.dims.size()));
  // Row-major view as (outer, dims[mode], inner).
  const std::int64_t n = x.dims[mode];
  const std::int64_t outer = product(std::span(x.dims).first(mode));
  const std::int64_t inner = product(std::span(x.dims).subspan(mode + 1));
  Matrix m(n, outer * inner);
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < n; ++i) {
      const double* src = &x.values[to_index((o * n + i) * inner)];
      double* dst = &m.values[to_index(i * m.cols + o * inner)];
      std::copy(src, src + inner, dst);
    }
  return m;
}

Tensor fold(const Matrix& m, std::size_t mode, const std::vector<std::int64_t>& dims) {
  if (mode >= dims.size()) throw ShapeError("fold: mode out of range");
  const std::int64_t n = dims[mode];
  const std::int64_t outer = product(std::span(dims).first(mode));
  const std::int64_t inner = product(std::span(dims).subspan(mode + 1));
  if (m.rows != n || m.cols != outer * inner) throw ShapeError("fold: matrix does not match target shape");
  Tensor x(dims);
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < n; ++i) {
      const double* src = &m.values[to_index(i * m.cols + o * inner)];
      std::copy(src, src + inner, &x.values[to_index((o * n + i) * inner)]);
    }
  return x;
}

Tensor mode_product(const Tensor& x, const Matrix& a, std::size_t mode) {
  if (mode >= x.dims.size()) throw ShapeError("mode_n_product: mode out of range");
  if (a.cols != x.dims[mode])
    throw ShapeError("mode_n_product: matrix has " + std::to_string(a.cols) +
                     " columns, tensor mode has " + std::to_string(x.dims[mode]));
  auto dims = x.dims;
  dims[mode] = a.rows;
  const std::int64_t n = x.dims[mode];
  const std::int64_t outer = product(std::span(x.dims).first(mode));
  const std::int64_t inner = product(std::span(x.dims).subspan(mode + 1));
  Tensor y(dims);
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t j = 0; j < a.rows; ++j) {
      double* dst = &y.values[to_index((o * a.rows + j) * inner)];
      for (std::int64_t i = 0; i < n; ++i) {
        const double w = a(j, i);
        if (w == 0.0) continue;
        const double* src = &x.values[to_index((o * n + i) * inner)];
        for (std::int64_t k = 0; k < inner; ++k) dst[k] += w * src[k];
      }
    }
  return y;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const auto r = x.dims.size();
  if (perm.size() != r) throw ShapeError("permute: axis count mismatch");
  std::vector<std::int64_t> dims(r);
  for (std::size_t i = 0; i < r; ++i) dims[i] = x.dims[perm[i]];
  const auto in_strides = row_major_strides(x.dims);
  Tensor y(dims);
  std::vector<std::int64_t> idx(r, 0);
  for (std::int64_t flat = 0; flat < y.size(); ++flat) {
    std::int64_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * in_strides[perm[i]];
    y.values[to_index(flat)] = x.values[to_index(src)];
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < dims[i]) break;
      idx[i] = 0;
    }
  }
  return y;
}

double frobenius(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values) s += v * v;
  return std::sqrt(s);
}

DenseTensor unfold(const DenseTensor& x, std::size_t mode) {
  return to_tensor(unfold(Tensor::from_dense(x), mode));
}

DenseTensor fold(const DenseTensor& unfolded, std::size_t mode, const TensorShape& shape) {
  return fold(from_tensor(unfolded), mode, shape.dims()).to_dense();
}

DenseTensor mode_n_product(const DenseTensor& x, const DenseTensor& a, std::size_t mode) {
  return mode_product(Tensor::from_dense(x), from_tensor(a), mode).to_dense();
}

} // namespace lrf::linalg
