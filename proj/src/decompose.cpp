#include "lrf/decompose.hpp"

#include "lrf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace lrf {

using linalg::Matrix;
using linalg::Tensor;

namespace {

std::size_t idx(std::int64_t v) { return static_cast<std::size_t>(v); }

std::string sub_name(const LayerDesc& src, Method method, std::size_t i) {
  return src.name + "_" + std::string(to_string(method)) + std::to_string(i);
}

LayerDesc make_fc(std::string name, std::int64_t m, std::int64_t n) {
  LayerDesc l;
  l.name = std::move(name);
  l.kind = LayerKind::FC;
  l.weight_shape = TensorShape{m, n};
  return l;
}

/// A conv stage of a factorized chain. `kernel` and `stride` are per axis.
LayerDesc make_conv(const LayerDesc& src, std::string name, LayerKind kind, std::vector<std::int64_t> kernel,
                    std::int64_t cin_dim, std::int64_t cout, std::vector<std::int64_t> input_spatial,
                    std::vector<std::int64_t> stride) {
  LayerDesc l;
  l.name = std::move(name);
  l.kind = kind;
  auto dims = std::move(kernel);
  dims.push_back(cin_dim);
  dims.push_back(cout);
  l.weight_shape = TensorShape(std::move(dims));
  l.input_spatial = std::move(input_spatial);
  l.stride = std::move(stride);
  l.padding = src.padding;
  return l;
}

DenseTensor dense(const Matrix& m, TensorShape shape) {
  auto t = linalg::to_tensor(m);
  return t.reshaped(std::move(shape));
}

DenseTensor dense(const Tensor& t, TensorShape shape) { return t.to_dense().reshaped(std::move(shape)); }

Matrix as_matrix(const DenseTensor& t, std::int64_t rows, std::int64_t cols) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = t.data()[i];
  return m;
}

void require_weight(const LayerDesc& layer, const DenseTensor& weight) {
  if (weight.shape() != layer.weight_shape)
    throw ShapeError("layer '" + layer.name + "': weight " + weight.shape().to_string() +
                     " does not match declared " + layer.weight_shape.to_string());
  if (!weight.all_finite()) throw NumericalError("layer '" + layer.name + "': weight has non-finite values");
}

std::vector<std::int64_t> ones(std::size_t d) { return std::vector<std::int64_t>(d, 1); }

/// Spatial extents seen by per-axis stage j: axes before j already reduced.
std::vector<std::int64_t> staged_input(const LayerDesc& src, std::size_t j) {
  auto out = output_spatial(src);
  std::vector<std::int64_t> s(src.input_spatial);
  for (std::size_t a = 0; a < j; ++a) s[a] = out[a];
  return s;
}

double relative_residual(const Tensor& a, const DenseTensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.data()[i];
    num += d * d;
    den += a.values[i] * a.values[i];
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

/// TT-SVD of `x` with prescribed interior ranks; cores are (r_{k-1}, n_k, r_k).
/// A requested rank above the available one is honoured by zero padding.
std::vector<Tensor> tt_svd(const Tensor& x, const std::vector<std::int64_t>& ranks) {
  const auto modes = x.dims.size();
  std::vector<Tensor> cores;
  std::int64_t r_prev = 1;
  std::int64_t rest = x.size();
  Matrix c(x.dims[0], rest / x.dims[0]);
  c.values = x.values;
  for (std::size_t k = 0; k + 1 < modes; ++k) {
    const auto r = ranks[k];
    const auto f = linalg::svd(c);
    const auto avail = static_cast<std::int64_t>(f.s.size());
    Tensor core({r_prev, x.dims[k], r});
    for (std::int64_t i = 0; i < c.rows; ++i)
      for (std::int64_t j = 0; j < std::min(r, avail); ++j) core.values[idx(i * r + j)] = f.u(i, j);
    // Remainder diag(s)·vᵀ, reshaped so the next mode joins the rows.
    const auto cols = c.cols;
    Matrix rem(r, cols);
    for (std::int64_t j = 0; j < std::min(r, avail); ++j)
      for (std::int64_t q = 0; q < cols; ++q) rem(j, q) = f.s[idx(j)] * f.v(q, j);
    cores.push_back(std::move(core));
    const auto next = x.dims[k + 1];
    Matrix reshaped(r * next, cols / next);
    reshaped.values = std::move(rem.values);
    c = std::move(reshaped);
    r_prev = r;
  }
  Tensor last({r_prev, x.dims[modes - 1], 1});
  last.values = c.values;
  cores.push_back(std::move(last));
  return cores;
}

/// Contracts TT cores back into a dense tensor of the core mode sizes.
Tensor tt_contract(const std::vector<Tensor>& cores) {
  Matrix acc(1, 1);
  acc(0, 0) = 1.0;
  std::vector<std::int64_t> dims;
  for (const auto& core : cores) {
    const auto r_prev = core.dims[0], n = core.dims[1], r = core.dims[2];
    Matrix g(r_prev, n * r);
    g.values = core.values;
    Matrix prod = linalg::matmul(acc, g); // (P, n·r) == (P·n, r) row-major
    Matrix next(acc.rows * n, r);
    next.values = std::move(prod.values);
    acc = std::move(next);
    dims.push_back(n);
  }
  Tensor out(dims);
  out.values = std::move(acc.values);
  return out;
}

/// Cholesky solve of x·v = m for symmetric positive semi-definite v, adding a
/// small ridge when v is numerically singular.
Matrix solve_gram(const Matrix& v, const Matrix& m) {
  const auto r = v.rows;
  double trace = 0.0;
  for (std::int64_t i = 0; i < r; ++i) trace += v(i, i);
  double ridge = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Matrix l(r, r);
    bool ok = true;
    for (std::int64_t j = 0; j < r && ok; ++j) {
      double s = v(j, j) + ridge;
      for (std::int64_t k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
      if (!(s > 0.0)) {
        ok = false;
        break;
      }
      l(j, j) = std::sqrt(s);
      for (std::int64_t i = j + 1; i < r; ++i) {
        double t = v(i, j);
        for (std::int64_t k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
        l(i, j) = t / l(j, j);
      }
    }
    if (ok) {
      Matrix x(m.rows, r);
      std::vector<double> y(idx(r));
      for (std::int64_t row = 0; row < m.rows; ++row) {
        for (std::int64_t i = 0; i < r; ++i) {
          double t = m(row, i);
          for (std::int64_t k = 0; k < i; ++k) t -= l(i, k) * y[idx(k)];
          y[idx(i)] = t / l(i, i);
        }
        for (std::int64_t i = r; i-- > 0;) {
          double t = y[idx(i)];
          for (std::int64_t k = i + 1; k < r; ++k) t -= l(k, i) * x(row, k);
          x(row, i) = t / l(i, i);
        }
      }
      return x;
    }
    ridge = ridge == 0.0 ? std::max(trace, 1e-300) / static_cast<double>(r) * 1e-12 : ridge * 100.0;
  }
  throw NumericalError("CP-ALS normal equations are singular");
}

/// Lower bound on fit change treated as a genuine decrease; below it, ALS
/// round-off is noise.
constexpr double kFitNoise = 1e-13;

struct CpFactors {
  std::vector<Matrix> a; // original mode order, each (I_k × r)
  double fit = 0.0;
};

FactorizedLayer build_cp_chain(const LayerDesc& layer, std::int64_t rank, const CpFactors& f) {
  const auto d = spatial_rank(layer);
  const auto c = in_channels(layer), out = out_channels(layer);
  FactorizedLayer fl;
  fl.method = Method::CP;
  fl.rank_config = {Method::CP, {rank}, std::nullopt};
  fl.source_layer = layer.name;
  fl.fit = f.fit;
  std::size_t n = 0;
  fl.sub_layers.push_back({make_conv(layer, sub_name(layer, Method::CP, n++), layer.kind, ones(d), c, rank,
                                     layer.input_spatial, ones(d)),
                           dense(f.a[d], TensorShape([&] {
                                   auto s = ones(d);
                                   s.push_back(c);
                                   s.push_back(rank);
                                   return s;
                                 }()))});
  for (std::size_t j = 0; j < d; ++j) {
    auto kernel = ones(d);
    kernel[j] = layer.weight_shape[j];
    auto stride = ones(d);
    stride[j] = layer.stride[j];
    auto desc = make_conv(layer, sub_name(layer, Method::CP, n++), LayerKind::DepthwiseConv, kernel, 1, rank,
                          staged_input(layer, j), stride);
    fl.sub_layers.push_back({desc, dense(f.a[j], desc.weight_shape)});
  }
  auto last_shape = ones(d);
  last_shape.push_back(rank);
  last_shape.push_back(out);
  auto last = make_conv(layer, sub_name(layer, Method::CP, n++), layer.kind, ones(d), rank, out,
                        output_spatial(layer), ones(d));
  last.post_ops = layer.post_ops;
  fl.sub_layers.push_back({last, dense(linalg::transpose(f.a[d + 1]), TensorShape(last_shape))});
  return fl;
}

} // namespace

std::int64_t FactorizedLayer::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& s : sub_layers) n += s.weight.size();
  return n;
}

FactorizedLayer svd_truncate(const LayerDesc& layer, const DenseTensor& weight, std::int64_t rank) {
  validate_rank_config(layer, {Method::SVD, {rank}, std::nullopt});
  require_weight(layer, weight);
  const auto m = layer.weight_shape[0], n = layer.weight_shape[1];
  const auto f = linalg::svd(linalg::from_tensor(weight));
  Matrix a(m, rank), b(rank, n);
  for (std::int64_t j = 0; j < rank; ++j) {
    const double s = std::sqrt(f.s[idx(j)]);
    for (std::int64_t i = 0; i < m; ++i) a(i, j) = f.u(i, j) * s;
    for (std::int64_t i = 0; i < n; ++i) b(j, i) = f.v(i, j) * s;
  }
  FactorizedLayer fl;
  fl.method = Method::SVD;
  fl.rank_config = {Method::SVD, {rank}, std::nullopt};
  fl.source_layer = layer.name;
  auto first = make_fc(sub_name(layer, Method::SVD, 0), m, rank);
  auto second = make_fc(sub_name(layer, Method::SVD, 1), rank, n);
  second.post_ops = layer.post_ops;
  fl.sub_layers.push_back({first, linalg::to_tensor(a)});
  fl.sub_layers.push_back({second, linalg::to_tensor(b)});
  double tail = 0.0, total = 0.0;
  for (std::size_t i = 0; i < f.s.size(); ++i) {
    total += f.s[i] * f.s[i];
    if (static_cast<std::int64_t>(i) >= rank) tail += f.s[i] * f.s[i];
  }
  fl.fit = total == 0.0 ? 1.0 : 1.0 - std::sqrt(tail / total);
  return fl;
}

FactorizedLayer qr_truncate(const LayerDesc& layer, const DenseTensor& weight, std::int64_t rank) {
  validate_rank_config(layer, {Method::QR, {rank}, std::nullopt});
  require_weight(layer, weight);
  const auto m = layer.weight_shape[0], n = layer.weight_shape[1];
  const auto w = linalg::from_tensor(weight);
  const auto f = linalg::qr_pivoted(w);
  Matrix q(m, rank), r(rank, n);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < rank; ++j) q(i, j) = f.q(i, j);
  // Undo the column pivoting so that q·r approximates w directly.
  for (std::int64_t i = 0; i < rank; ++i)
    for (std::int64_t c = 0; c < n; ++c) r(i, f.perm[idx(c)]) = f.r(i, c);
  FactorizedLayer fl;
  fl.method = Method::QR;
  fl.rank_config = {Method::QR, {rank}, std::nullopt};
  fl.source_layer = layer.name;
  auto first = make_fc(sub_name(layer, Method::QR, 0), m, rank);
  auto second = make_fc(sub_name(layer, Method::QR, 1), rank, n);
  second.post_ops = layer.post_ops;
  const auto approx = linalg::matmul(q, r);
  const double norm = linalg::frobenius(w);
  fl.fit = norm == 0.0 ? 1.0 : 1.0 - linalg::frobenius_distance(w, approx) / norm;
  fl.sub_layers.push_back({first, linalg::to_tensor(q)});
  fl.sub_layers.push_back({second, linalg::to_tensor(r)});
  return fl;
}

FactorizedLayer tucker2_decompose(const LayerDesc& layer, const DenseTensor& weight, std::int64_t r1,
                                  std::int64_t r2, const DecomposeOptions& options) {
  validate_rank_config(layer, {Method::Tucker, {r1, r2}, std::nullopt});
  require_weight(layer, weight);
  const auto d = spatial_rank(layer);
  const auto c = in_channels(layer), out = out_channels(layer);
  const auto x = Tensor::from_dense(weight);
  const double norm = linalg::frobenius(x);

  // Truncated HOSVD start, then HOOI on the two channel modes.
  Matrix uc = linalg::left_singular_basis(linalg::unfold(x, d), r1);
  Matrix uf = linalg::left_singular_basis(linalg::unfold(x, d + 1), r2);
  auto core_of = [&](const Matrix& a, const Matrix& b) {
    return linalg::mode_product(linalg::mode_product(x, linalg::transpose(a), d), linalg::transpose(b), d + 1);
  };
  auto fit_of = [&](const Tensor& core) {
    if (norm == 0.0) return 1.0;
    const double kept = linalg::frobenius(core);
    return 1.0 - std::sqrt(std::max(norm * norm - kept * kept, 0.0)) / norm;
  };
  Tensor core = core_of(uc, uf);
  double fit = fit_of(core);
  FactorizedLayer fl;
  fl.fit_history.push_back(fit);
  fl.converged = false;
  const bool exact = r1 == c && r2 == out;
  if (exact || norm == 0.0) fl.converged = true;
  for (int it = 0; it < options.tucker_max_iters && !fl.converged; ++it) {
    const auto y_c = linalg::mode_product(x, linalg::transpose(uf), d + 1);
    Matrix next_uc = linalg::left_singular_basis(linalg::unfold(y_c, d), r1);
    const auto y_f = linalg::mode_product(x, linalg::transpose(next_uc), d);
    Matrix next_uf = linalg::left_singular_basis(linalg::unfold(y_f, d + 1), r2);
    Tensor next_core = core_of(next_uc, next_uf);
    const double next_fit = fit_of(next_core);
    const double gain = next_fit - fit;
    if (next_fit >= fit) {
      uc = std::move(next_uc);
      uf = std::move(next_uf);
      core = std::move(next_core);
      fit = next_fit;
    }
    fl.fit_history.push_back(fit);
    if (gain < options.tucker_tol) fl.converged = true;
  }

  fl.method = Method::Tucker;
  fl.rank_config = {Method::Tucker, {r1, r2}, std::nullopt};
  fl.source_layer = layer.name;
  fl.fit = fit;
  auto first = make_conv(layer, sub_name(layer, Method::Tucker, 0), layer.kind, ones(d), c, r1,
                         layer.input_spatial, ones(d));
  auto middle = make_conv(layer, sub_name(layer, Method::Tucker, 1), layer.kind, kernel_dims(layer), r1, r2,
                          layer.input_spatial, layer.stride);
  auto last = make_conv(layer, sub_name(layer, Method::Tucker, 2), layer.kind, ones(d), r2, out,
                        output_spatial(layer), ones(d));
  last.post_ops = layer.post_ops;
  fl.sub_layers.push_back({first, dense(uc, first.weight_shape)});
  fl.sub_layers.push_back({middle, dense(core, middle.weight_shape)});
  fl.sub_layers.push_back({last, dense(linalg::transpose(uf), last.weight_shape)});
  return fl;
}

FactorizedLayer cp_decompose(const LayerDesc& layer, const DenseTensor& weight, std::int64_t rank,
                             const DecomposeOptions& options) {
  validate_rank_config(layer, {Method::CP, {rank}, std::nullopt});
  require_weight(layer, weight);
  const auto x = Tensor::from_dense(weight);
  const auto modes = x.dims.size();
  const double norm = linalg::frobenius(x);
  const double norm2 = norm * norm;

  // Work on a copy whose largest mode is last: the partial MTTKRP buffers
  // then hold (∏other dims)·r entries.
  const auto big = static_cast<std::size_t>(std::max_element(x.dims.begin(), x.dims.end()) - x.dims.begin());
  std::vector<std::size_t> perm;
  for (std::size_t k = 0; k < modes; ++k)
    if (k != big) perm.push_back(k);
  perm.push_back(big);
  const Tensor xp = linalg::permute(x, perm);
  const auto last = modes - 1;
  const auto i_last = xp.dims[last];
  const auto outer = xp.size() / i_last;
  Matrix xmat(outer, i_last);
  xmat.values = xp.values;

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Matrix> a(modes);
  for (std::size_t k = 0; k < modes; ++k) {
    const auto ik = xp.dims[k];
    const auto basis = linalg::left_singular_basis(linalg::unfold(xp, k), std::min(rank, ik));
    a[k] = Matrix(ik, rank);
    for (std::int64_t i = 0; i < ik; ++i)
      for (std::int64_t j = 0; j < rank; ++j)
        a[k](i, j) = j < basis.cols ? basis(i, j) : normal(rng) / std::sqrt(static_cast<double>(ik));
  }
  std::vector<Matrix> gram(modes);
  for (std::size_t k = 0; k < modes; ++k) gram[k] = linalg::matmul_tn(a[k], a[k]);

  auto hadamard_except = [&](std::size_t skip) {
    Matrix v(rank, rank);
    std::fill(v.values.begin(), v.values.end(), 1.0);
    for (std::size_t k = 0; k < modes; ++k)
      if (k != skip)
        for (std::size_t e = 0; e < v.values.size(); ++e) v.values[e] *= gram[k].values[e];
    return v;
  };
  // Mixed-radix digits of the outer index over modes 0..last-1.
  std::vector<std::int64_t> digits(last, 0);
  auto advance = [&] {
    for (std::size_t k = last; k-- > 0;) {
      if (++digits[k] < xp.dims[k]) return;
      digits[k] = 0;
    }
  };

  Matrix p = linalg::matmul(xmat, a[last]);
  std::vector<double> coef(idx(rank));
  CpFactors best;
  best.fit = -std::numeric_limits<double>::infinity();
  std::vector<double> accepted;
  double prev_fit = -std::numeric_limits<double>::infinity();
  int decreases = 0;
  bool converged = false;
  int iterations = 0;

  auto snapshot = [&](double fit) {
    CpFactors f;
    f.fit = fit;
    f.a.resize(modes);
    for (std::size_t k = 0; k < modes; ++k) f.a[perm[k]] = a[k];
    return f;
  };

  for (; iterations < options.cp_max_iters; ++iterations) {
    for (std::size_t n = 0; n < last; ++n) {
      Matrix m(xp.dims[n], rank);
      std::fill(digits.begin(), digits.end(), 0);
      for (std::int64_t o = 0; o < outer; ++o, advance()) {
        const double* prow = &p.values[idx(o * rank)];
        std::copy(prow, prow + rank, coef.begin());
        for (std::size_t k = 0; k < last; ++k) {
          if (k == n) continue;
          const double* arow = &a[k].values[idx(digits[k] * rank)];
          for (std::int64_t j = 0; j < rank; ++j) coef[idx(j)] *= arow[j];
        }
        double* mrow = &m.values[idx(digits[n] * rank)];
        for (std::int64_t j = 0; j < rank; ++j) mrow[j] += coef[idx(j)];
      }
      a[n] = solve_gram(hadamard_except(n), m);
      // Push column norms into the last factor so the model is unchanged.
      for (std::int64_t j = 0; j < rank; ++j) {
        double s = 0.0;
        for (std::int64_t i = 0; i < a[n].rows; ++i) s += a[n](i, j) * a[n](i, j);
        s = std::sqrt(s);
        if (s == 0.0) continue;
        for (std::int64_t i = 0; i < a[n].rows; ++i) a[n](i, j) /= s;
        for (std::int64_t i = 0; i < a[last].rows; ++i) a[last](i, j) *= s;
        for (std::int64_t o = 0; o < outer; ++o) p(o, j) *= s;
      }
      gram[n] = linalg::matmul_tn(a[n], a[n]);
      gram[last] = linalg::matmul_tn(a[last], a[last]);
    }
    // Last mode: MTTKRP as xmatᵀ · (Khatri–Rao of the other factors).
    Matrix kr(outer, rank);
    std::fill(digits.begin(), digits.end(), 0);
    for (std::int64_t o = 0; o < outer; ++o, advance()) {
      double* row = &kr.values[idx(o * rank)];
      std::fill(row, row + rank, 1.0);
      for (std::size_t k = 0; k < last; ++k) {
        const double* arow = &a[k].values[idx(digits[k] * rank)];
        for (std::int64_t j = 0; j < rank; ++j) row[j] *= arow[j];
      }
    }
    const Matrix m = linalg::matmul_tn(xmat, kr);
    const Matrix v = hadamard_except(last);
    a[last] = solve_gram(v, m);
    gram[last] = linalg::matmul_tn(a[last], a[last]);
    p = linalg::matmul(xmat, a[last]);

    double inner = 0.0, model2 = 0.0;
    for (std::size_t e = 0; e < m.values.size(); ++e) inner += m.values[e] * a[last].values[e];
    for (std::size_t e = 0; e < v.values.size(); ++e) model2 += v.values[e] * gram[last].values[e];
    const double resid = std::sqrt(std::max(norm2 - 2.0 * inner + model2, 0.0));
    const double fit = norm == 0.0 ? 1.0 : 1.0 - resid / norm;

    if (fit >= best.fit) {
      best = snapshot(fit);
      accepted.push_back(fit);
    }
    decreases = fit < prev_fit - kFitNoise ? decreases + 1 : 0;
    if (decreases >= options.cp_divergence_window) {
      auto fl = build_cp_chain(layer, rank, best);
      fl.fit_history = accepted;
      fl.converged = false;
      throw CpDivergenceError("CP-ALS diverged on layer '" + layer.name + "' at rank " + std::to_string(rank) +
                                  " (fit fell " + std::to_string(decreases) + " sweeps in a row)",
                              std::move(fl));
    }
    if (std::abs(fit - prev_fit) < options.cp_tol) {
      converged = true;
      ++iterations;
      break;
    }
    prev_fit = fit;
  }
  if (iterations == 0) best = snapshot(0.0);
  auto fl = build_cp_chain(layer, rank, best);
  fl.fit_history = std::move(accepted);
  fl.converged = converged;
  return fl;
}

FactorizedLayer tt_decompose(const LayerDesc& layer, const DenseTensor& weight,
                             const std::vector<std::int64_t>& ranks) {
  validate_rank_config(layer, {Method::TT, ranks, std::nullopt});
  require_weight(layer, weight);
  const auto d = spatial_rank(layer);
  const auto c = in_channels(layer), out = out_channels(layer);
  // (K1..Kd, C, F) -> (C, K1..Kd, F)
  std::vector<std::size_t> perm{d};
  for (std::size_t j = 0; j < d; ++j) perm.push_back(j);
  perm.push_back(d + 1);
  const auto x = Tensor::from_dense(weight);
  const auto cores = tt_svd(linalg::permute(x, perm), ranks);

  FactorizedLayer fl;
  fl.method = Method::TT;
  fl.rank_config = {Method::TT, ranks, std::nullopt};
  fl.source_layer = layer.name;
  std::size_t n = 0;
  auto first = make_conv(layer, sub_name(layer, Method::TT, n++), layer.kind, ones(d), c, ranks[0],
                         layer.input_spatial, ones(d));
  fl.sub_layers.push_back({first, dense(cores[0], first.weight_shape)});
  for (std::size_t j = 0; j < d; ++j) {
    auto kernel = ones(d);
    kernel[j] = layer.weight_shape[j];
    auto stride = ones(d);
    stride[j] = layer.stride[j];
    auto desc = make_conv(layer, sub_name(layer, Method::TT, n++), layer.kind, kernel, ranks[j], ranks[j + 1],
                          staged_input(layer, j), stride);
    // Core (r_j, K_j, r_{j+1}) -> conv weight (.., K_j, .., r_j, r_{j+1}).
    fl.sub_layers.push_back({desc, dense(linalg::permute(cores[j + 1], {1, 0, 2}), desc.weight_shape)});
  }
  auto last = make_conv(layer, sub_name(layer, Method::TT, n++), layer.kind, ones(d), ranks[d], out,
                        output_spatial(layer), ones(d));
  last.post_ops = layer.post_ops;
  fl.sub_layers.push_back({last, dense(cores[d + 1], last.weight_shape)});
  fl.fit = 1.0 - relative_residual(x, reconstruct(fl, layer));
  return fl;
}

FactorizedLayer t3f_decompose(const LayerDesc& layer, const DenseTensor& weight, const T3FPlan& plan,
                              const std::vector<std::int64_t>& ranks) {
  validate_rank_config(layer, {Method::T3F, ranks, plan});
  require_weight(layer, weight);
  const auto d = plan.order();
  // W[i1..id, j1..jd] -> (i1 j1, i2 j2, ...) so each TT mode pairs m_t with n_t.
  std::vector<std::int64_t> split(plan.m);
  split.insert(split.end(), plan.n.begin(), plan.n.end());
  Tensor x = Tensor::from_dense(weight);
  x.dims = split;
  std::vector<std::size_t> perm;
  for (std::size_t t = 0; t < d; ++t) {
    perm.push_back(t);
    perm.push_back(d + t);
  }
  Tensor paired = linalg::permute(x, perm);
  std::vector<std::int64_t> merged;
  for (std::size_t t = 0; t < d; ++t) merged.push_back(plan.m[t] * plan.n[t]);
  paired.dims = merged;
  const auto cores = tt_svd(paired, ranks);

  FactorizedLayer fl;
  fl.method = Method::T3F;
  fl.rank_config = {Method::T3F, ranks, plan};
  fl.source_layer = layer.name;
  std::vector<std::int64_t> full_ranks{1};
  full_ranks.insert(full_ranks.end(), ranks.begin(), ranks.end());
  full_ranks.push_back(1);
  std::size_t n = 0;
  LayerDesc in;
  in.name = sub_name(layer, Method::T3F, n++);
  in.kind = LayerKind::Reshape;
  in.target_shape = plan.m;
  fl.sub_layers.push_back({in, {}});
  for (std::size_t t = 0; t < d; ++t) {
    LayerDesc core;
    core.name = sub_name(layer, Method::T3F, n++);
    core.kind = LayerKind::TTCore;
    core.tt = TTCoreSpec{plan.m, plan.n, full_ranks, static_cast<std::int64_t>(t)};
    core.weight_shape = TensorShape{full_ranks[t], plan.m[t], plan.n[t], full_ranks[t + 1]};
    fl.sub_layers.push_back({core, cores[t].to_dense().reshaped(core.weight_shape)});
  }
  LayerDesc outl;
  outl.name = sub_name(layer, Method::T3F, n++);
  outl.kind = LayerKind::Reshape;
  outl.target_shape = {layer.weight_shape[1]};
  outl.post_ops = layer.post_ops;
  fl.sub_layers.push_back({outl, {}});
  fl.fit = 1.0 - relative_residual(Tensor::from_dense(weight), reconstruct(fl, layer));
  return fl;
}

FactorizedLayer decompose(const LayerDesc& layer, const DenseTensor& weight, const RankConfig& config,
                          const DecomposeOptions& options) {
  validate_rank_config(layer, config);
  const auto& r = config.ranks;
  switch (config.method) {
  case Method::SVD: return svd_truncate(layer, weight, r[0]);
  case Method::QR: return qr_truncate(layer, weight, r[0]);
  case Method::Tucker: return tucker2_decompose(layer, weight, r[0], r[1], options);
  case Method::CP: return cp_decompose(layer, weight, r[0], options);
  case Method::TT: return tt_decompose(layer, weight, r);
  case Method::T3F: return t3f_decompose(layer, weight, *config.plan, r);
  }
  throw UnsupportedError("unknown method");
}

DenseTensor reconstruct(const FactorizedLayer& f, const LayerDesc& original) {
  const auto& subs = f.sub_layers;
  switch (f.method) {
  case Method::SVD:
  case Method::QR: {
    const auto& a = subs.at(0).weight;
    const auto& b = subs.at(1).weight;
    return linalg::to_tensor(linalg::matmul(linalg::from_tensor(a), linalg::from_tensor(b)));
  }
  case Method::Tucker: {
    const auto d = spatial_rank(original);
    const auto c = in_channels(original), out = out_channels(original);
    const auto r1 = f.rank_config.ranks[0], r2 = f.rank_config.ranks[1];
    const auto uc = as_matrix(subs.at(0).weight, c, r1);
    const auto uf_t = as_matrix(subs.at(2).weight, r2, out);
    auto core = Tensor::from_dense(subs.at(1).weight);
    auto w = linalg::mode_product(linalg::mode_product(core, uc, d), linalg::transpose(uf_t), d + 1);
    return w.to_dense().reshaped(original.weight_shape);
  }
  case Method::CP: {
    const auto d = spatial_rank(original);
    const auto rank = f.rank_config.ranks[0];
    std::vector<Matrix> factors;
    for (std::size_t j = 0; j < d; ++j)
      factors.push_back(as_matrix(subs.at(j + 1).weight, original.weight_shape[j], rank));
    factors.push_back(as_matrix(subs.at(0).weight, in_channels(original), rank));
    factors.push_back(linalg::transpose(as_matrix(subs.at(d + 1).weight, rank, out_channels(original))));
    Tensor w(original.weight_shape.dims());
    const auto strides = row_major_strides(w.dims);
    std::vector<double> acc(idx(rank));
    for (std::int64_t flat = 0; flat < w.size(); ++flat) {
      std::fill(acc.begin(), acc.end(), 1.0);
      std::int64_t rem = flat;
      for (std::size_t k = 0; k < w.dims.size(); ++k) {
        const auto i = rem / strides[k];
        rem %= strides[k];
        for (std::int64_t j = 0; j < rank; ++j) acc[idx(j)] *= factors[k](i, j);
      }
      w.values[idx(flat)] = std::accumulate(acc.begin(), acc.end(), 0.0);
    }
    return w.to_dense();
  }
  case Method::TT: {
    const auto d = spatial_rank(original);
    const auto& r = f.rank_config.ranks;
    std::vector<Tensor> cores;
    auto first = Tensor::from_dense(subs.at(0).weight);
    first.dims = {1, in_channels(original), r[0]};
    cores.push_back(first);
    for (std::size_t j = 0; j < d; ++j) {
      auto w = Tensor::from_dense(subs.at(j + 1).weight);
      w.dims = {original.weight_shape[j], r[j], r[j + 1]};
      cores.push_back(linalg::permute(w, {1, 0, 2}));
    }
    auto last = Tensor::from_dense(subs.at(d + 1).weight);
    last.dims = {r[d], out_channels(original), 1};
    cores.push_back(last);
    const auto full = tt_contract(cores); // (C, K1..Kd, F)
    std::vector<std::size_t> perm;
    for (std::size_t j = 0; j < d; ++j) perm.push_back(j + 1);
    perm.push_back(0);
    perm.push_back(d + 1);
    return linalg::permute(full, perm).to_dense();
  }
  case Method::T3F: {
    const auto& plan = *f.rank_config.plan;
    const auto d = plan.order();
    std::vector<Tensor> cores;
    for (std::size_t t = 0; t < d; ++t) {
      auto core = Tensor::from_dense(subs.at(t + 1).weight);
      const auto& s = subs.at(t + 1).weight.shape();
      core.dims = {s[0], s[1] * s[2], s[3]};
      cores.push_back(std::move(core));
    }
    auto paired = tt_contract(cores);
    std::vector<std::int64_t> split;
    for (std::size_t t = 0; t < d; ++t) {
      split.push_back(plan.m[t]);
      split.push_back(plan.n[t]);
    }
    paired.dims = split;
    std::vector<std::size_t> perm;
    for (std::size_t t = 0; t < d; ++t) perm.push_back(2 * t);
    for (std::size_t t = 0; t < d; ++t) perm.push_back(2 * t + 1);
    return linalg::permute(paired, perm).to_dense().reshaped(original.weight_shape);
  }
  }
  throw UnsupportedError("unknown method");
}

std::pair<ModelDesc, WeightStore> apply_factorizations(const ModelDesc& model, const WeightStore& weights,
                                                       const std::map<std::string, FactorizedLayer>& chains) {
  for (const auto& [name, chain] : chains) {
    if (!model.find(name)) throw GraphError("cannot factorize unknown layer '" + name + "'");
    if (chain.sub_layers.empty()) throw GraphError("empty factorization for layer '" + name + "'");
  }
  auto tail_of = [&](const std::string& name) {
    auto it = chains.find(name);
    return it == chains.end() ? name : it->second.sub_layers.back().desc.name;
  };
  ModelDesc out;
  out.metadata = model.metadata;
  out.input_shape = model.input_shape;
  WeightStore w;
  std::set<std::string> names;
  auto add = [&](const LayerDesc& desc, std::vector<std::string> preds) {
    if (!names.insert(desc.name).second) throw GraphError("duplicate layer name '" + desc.name + "' after factorization");
    out.layers.push_back(desc);
    if (!preds.empty()) out.predecessors[desc.name] = std::move(preds);
  };
  for (const auto& layer : model.layers) {
    std::vector<std::string> preds;
    for (const auto& p : model.inputs_of(layer.name)) preds.push_back(tail_of(p));
    auto it = chains.find(layer.name);
    if (it == chains.end()) {
      add(layer, std::move(preds));
      if (weights.contains(layer.name)) w.set(layer.name, weights.at(layer.name));
      continue;
    }
    std::string prev;
    for (const auto& sub : it->second.sub_layers) {
      add(sub.desc, prev.empty() ? std::move(preds) : std::vector<std::string>{prev});
      if (has_weights(sub.desc.kind)) w.set(sub.desc.name, sub.weight);
      prev = sub.desc.name;
    }
  }
  auto head = chains.find(model.input);
  out.input = head == chains.end() ? model.input : head->second.sub_layers.front().desc.name;
  out.output = tail_of(model.output);
  return {std::move(out), std::move(w)};
}

} // namespace lrf
