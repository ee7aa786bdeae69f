#include "support.hpp"

#include "lrf/error.hpp"
#include "lrf/linalg.hpp"

#include <doctest.h>

using namespace lrf;
using namespace lrf::test;

namespace {

double reconstruction_error(const FactorizedLayer& f, const LayerDesc& l, const DenseTensor& w) {
  return rel_error(reconstruct(f, l).data(), w.data());
}

std::int64_t stored_params(const FactorizedLayer& f) {
  std::int64_t n = 0;
  for (const auto& s : f.sub_layers) n += s.weight.size();
  return n;
}

/// W[k.., c, f] = Σ G[k.., a, b] A[c, a] B[f, b].
DenseTensor tucker_synthetic(std::int64_t kk, std::int64_t c, std::int64_t f, std::int64_t r, std::uint64_t seed) {
  const auto g = random_tensor(TensorShape{kk, r, r}, seed);
  const auto a = random_tensor(TensorShape{c, r}, seed + 1);
  const auto b = random_tensor(TensorShape{f, r}, seed + 2);
  DenseTensor w{TensorShape{kk, c, f}};
  for (std::int64_t k = 0; k < kk; ++k)
    for (std::int64_t ci = 0; ci < c; ++ci)
      for (std::int64_t fo = 0; fo < f; ++fo) {
        double acc = 0;
        for (std::int64_t x = 0; x < r; ++x)
          for (std::int64_t y = 0; y < r; ++y) acc += double(g[(k * r + x) * r + y]) * a[ci * r + x] * b[fo * r + y];
        w[(k * c + ci) * f + fo] = static_cast<float>(acc);
      }
  return w;
}

/// Sum of `rank` outer products over the given modes.
DenseTensor cp_synthetic(const std::vector<std::int64_t>& dims, std::int64_t rank, std::uint64_t seed) {
  std::vector<DenseTensor> factors;
  for (std::size_t m = 0; m < dims.size(); ++m) factors.push_back(random_tensor(TensorShape{dims[m], rank}, seed + m));
  DenseTensor w{TensorShape(dims)};
  std::vector<std::int64_t> idx(dims.size());
  for (std::int64_t flat = 0; flat < w.size(); ++flat) {
    auto rem = flat;
    for (std::size_t m = dims.size(); m-- > 0;) idx[m] = rem % dims[m], rem /= dims[m];
    double acc = 0;
    for (std::int64_t r = 0; r < rank; ++r) {
      double p = 1;
      for (std::size_t m = 0; m < dims.size(); ++m) p *= factors[m][idx[m] * rank + r];
      acc += p;
    }
    w[flat] = static_cast<float>(acc);
  }
  return w;
}

} // namespace

TEST_CASE("svd truncation") {
  SUBCASE("rank-one weight at r=1") {
    auto l = fc("fc", 6, 5);
    const auto u = random_tensor(TensorShape{6}, 1), v = random_tensor(TensorShape{5}, 2);
    DenseTensor w{TensorShape{6, 5}};
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 5; ++j) w[i * 5 + j] = u[i] * v[j];
    CHECK(reconstruction_error(svd_truncate(l, w, 1), l, w) <= 1e-5);
  }
  SUBCASE("full rank is exact") {
    auto l = fc("fc", 9, 7);
    const auto w = random_tensor(l.weight_shape, 3);
    CHECK(reconstruction_error(svd_truncate(l, w, 7), l, w) <= 1e-5);
  }
  SUBCASE("400x120 at r=92 meets the Eckart-Young bound") {
    auto l = fc("fc", 400, 120);
    const auto w = random_tensor(l.weight_shape, 4);
    const auto f = svd_truncate(l, w, 92);
    CHECK(f.parameter_count() == 47840);
    CHECK(stored_params(f) == 47840);
    const auto s = linalg::svd(linalg::from_tensor(w));
    double tail = 0;
    for (std::size_t i = 92; i < s.s.size(); ++i) tail += s.s[i] * s.s[i];
    const double bound = std::sqrt(tail) / linalg::frobenius(w.data());
    CHECK(reconstruction_error(f, l, w) == doctest::Approx(bound).epsilon(1e-4));
  }
  SUBCASE("rank out of range") {
    auto l = fc("fc", 4, 3);
    CHECK_THROWS_AS(svd_truncate(l, random_tensor(l.weight_shape, 1), 4), RankError);
    CHECK_THROWS_AS(svd_truncate(l, random_tensor(l.weight_shape, 1), 0), RankError);
  }
}

TEST_CASE("qr truncation") {
  SUBCASE("upper-triangular full rank is exact") {
    auto l = fc("fc", 4, 4);
    DenseTensor w{TensorShape{4, 4}};
    for (int i = 0; i < 4; ++i)
      for (int j = i; j < 4; ++j) w[i * 4 + j] = static_cast<float>(1 + i + 2 * j);
    CHECK(reconstruction_error(qr_truncate(l, w, 4), l, w) <= 1e-5);
  }
  SUBCASE("rank-two synthetic at r=2") {
    auto l = fc("fc", 7, 6);
    const auto w = cp_synthetic({7, 6}, 2, 10);
    CHECK(reconstruction_error(qr_truncate(l, w, 2), l, w) <= 1e-5);
  }
  SUBCASE("identity at r=1 keeps one pivot") {
    auto l = fc("fc", 2, 2);
    DenseTensor w{TensorShape{2, 2}, {1, 0, 0, 1}};
    const auto rec = reconstruct(qr_truncate(l, w, 1), l);
    double res = 0;
    for (int i = 0; i < 4; ++i) res += (rec[i] - w[i]) * (rec[i] - w[i]);
    CHECK(std::sqrt(res) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("tucker-2") {
  SUBCASE("full ranks are exact") {
    auto l = conv("c", {3, 3, 6, 8}, {5, 5});
    const auto w = random_tensor(l.weight_shape, 5);
    const auto f = tucker2_decompose(l, w, 6, 8);
    CHECK(f.sub_layers.size() == 3);
    CHECK(reconstruction_error(f, l, w) <= 1e-5);
  }
  SUBCASE("synthetic core with ranks 4 is recovered") {
    auto l = conv("c", {3, 3, 8, 10}, {5, 5});
    const auto w = tucker_synthetic(9, 8, 10, 4, 6).reshaped(l.weight_shape);
    CHECK(reconstruction_error(tucker2_decompose(l, w, 4, 4), l, w) <= 1e-4);
  }
  SUBCASE("(3,3,256,512) at (64,128) has 155,648 parameters") {
    auto l = conv("c", {3, 3, 256, 512}, {4, 4});
    CHECK(cost_factorized(l, {Method::Tucker, {64, 128}, {}}).params == 155648);
  }
  SUBCASE("factors are orthonormal") {
    auto l = conv("c", {3, 3, 6, 8}, {5, 5});
    const auto f = tucker2_decompose(l, random_tensor(l.weight_shape, 7), 3, 4);
    const auto a = linalg::from_tensor(f.sub_layers[0].weight.reshaped(TensorShape{6, 3}));
    const auto g = linalg::matmul_tn(a, a);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(g(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("cp") {
  SUBCASE("rank-one synthetic") {
    auto l = conv("c", {3, 3, 4, 5}, {5, 5});
    const auto w = cp_synthetic({3, 3, 4, 5}, 1, 20);
    const auto f = cp_decompose(l, w, 1);
    CHECK(f.fit >= 0.9999);
  }
  SUBCASE("rank-two synthetic") {
    auto l = conv("c", {3, 3, 4, 5}, {5, 5});
    const auto w = cp_synthetic({3, 3, 4, 5}, 2, 30);
    const auto f = cp_decompose(l, w, 2);
    CHECK(f.fit >= 0.999);
    CHECK(f.sub_layers.size() == 4);
  }
  SUBCASE("fit history is non-decreasing") {
    auto l = conv("c", {3, 3, 6, 7}, {5, 5});
    const auto f = cp_decompose(l, random_tensor(l.weight_shape, 31), 5);
    for (std::size_t i = 1; i < f.fit_history.size(); ++i) CHECK(f.fit_history[i] >= f.fit_history[i - 1] - 1e-12);
  }
  SUBCASE("(5,5,96,256) at r=300 has 108,600 parameters") {
    auto l = conv("c", {5, 5, 96, 256}, {4, 4});
    CHECK(cost_factorized(l, {Method::CP, {300}, {}}).params == 108600);
  }
  SUBCASE("sub-layer count follows spatial rank") {
    auto l1 = conv("c", {3, 4, 5}, {6});
    auto l3 = conv("c", {2, 2, 2, 3, 4}, {3, 3, 3});
    CHECK(cp_decompose(l1, random_tensor(l1.weight_shape, 1), 2).sub_layers.size() == 3);
    CHECK(cp_decompose(l3, random_tensor(l3.weight_shape, 1), 2).sub_layers.size() == 5);
  }
  SUBCASE("rank zero is rejected") {
    auto l = conv("c", {3, 3, 4, 5}, {5, 5});
    CHECK_THROWS_AS(cp_decompose(l, random_tensor(l.weight_shape, 1), 0), RankError);
  }
  SUBCASE("seeded runs are deterministic") {
    auto l = conv("c", {3, 3, 4, 5}, {5, 5});
    const auto w = random_tensor(l.weight_shape, 8);
    DecomposeOptions o;
    o.seed = 5;
    CHECK(cp_decompose(l, w, 7, o) == cp_decompose(l, w, 7, o));
  }
}

TEST_CASE("tensor train") {
  SUBCASE("full ranks are exact") {
    auto l = conv("c", {3, 3, 4, 5}, {5, 5});
    const auto w = random_tensor(l.weight_shape, 9);
    const auto b = rank_bounds(l, Method::TT);
    std::vector<std::int64_t> full;
    for (const auto& r : b) full.push_back(r.hi);
    const auto f = tt_decompose(l, w, full);
    CHECK(f.sub_layers.size() == 4);
    CHECK(reconstruction_error(f, l, w) <= 1e-5);
  }
  SUBCASE("(3,3,256,512) at (64,64,64) has 73,728 parameters") {
    auto l = conv("c", {3, 3, 256, 512}, {4, 4});
    CHECK(cost_factorized(l, {Method::TT, {64, 64, 64}, {}}).params == 73728);
  }
  SUBCASE("residual shrinks as ranks grow") {
    auto l = conv("c", {3, 3, 24, 24}, {4, 4});
    const auto w = random_tensor(l.weight_shape, 10);
    const auto e8 = reconstruction_error(tt_decompose(l, w, {8, 8, 8}), l, w);
    const auto e16 = reconstruction_error(tt_decompose(l, w, {16, 16, 16}), l, w);
    CHECK(e8 >= e16);
  }
  SUBCASE("rank beyond the cut bound") {
    auto l = conv("c", {3, 3, 4, 5}, {5, 5});
    CHECK_THROWS_AS(tt_decompose(l, random_tensor(l.weight_shape, 1), {5, 1, 1}), RankError);
  }
}

TEST_CASE("t3f") {
  SUBCASE("Kronecker structure is TT-rank one") {
    auto l = fc("fc", 6, 8);
    const auto a = random_tensor(TensorShape{2, 4}, 11), b = random_tensor(TensorShape{3, 2}, 12);
    DenseTensor w{TensorShape{6, 8}};
    for (int i1 = 0; i1 < 2; ++i1)
      for (int i2 = 0; i2 < 3; ++i2)
        for (int j1 = 0; j1 < 4; ++j1)
          for (int j2 = 0; j2 < 2; ++j2) w[(i1 * 3 + i2) * 8 + j1 * 2 + j2] = a[i1 * 4 + j1] * b[i2 * 2 + j2];
    const auto f = t3f_decompose(l, w, {{2, 3}, {4, 2}}, {1});
    CHECK(reconstruction_error(f, l, w) <= 1e-5);
  }
  SUBCASE("(400,120) with plan (20,20)x(10,12) at full rank is exact") {
    auto l = fc("fc", 400, 120);
    const auto w = random_tensor(l.weight_shape, 13);
    const auto f = t3f_decompose(l, w, {{20, 20}, {10, 12}}, {200});
    CHECK(reconstruction_error(f, l, w) <= 1e-5);
  }
  SUBCASE("interior rank r costs 440r parameters") {
    auto l = fc("fc", 400, 120);
    for (std::int64_t r : {1, 7, 50})
      CHECK(cost_factorized(l, {Method::T3F, {r}, T3FPlan{{20, 20}, {10, 12}}}).params == 440 * r);
  }
  SUBCASE("plan whose products mismatch") {
    auto l = fc("fc", 400, 120);
    CHECK_THROWS_AS(t3f_decompose(l, random_tensor(l.weight_shape, 1), {{20, 21}, {10, 12}}, {1}), RankError);
  }
}

TEST_CASE("parameter count of the built chain equals the closed form") {
  std::mt19937_64 rng(42);
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  for (int trial = 0; trial < 10; ++trial) {
    auto c = conv("c", {pick(1, 3), pick(1, 3), pick(2, 6), pick(2, 6)}, {5, 5}, pick(1, 2));
    const auto w = random_tensor(c.weight_shape, trial);
    for (auto m : {Method::Tucker, Method::CP, Method::TT}) {
      RankConfig cfg{m, {}, {}};
      for (const auto& b : rank_bounds(c, m)) cfg.ranks.push_back(pick(b.lo, std::min<std::int64_t>(b.hi, 6)));
      const auto f = decompose(c, w, cfg);
      CHECK(stored_params(f) == cost_factorized(c, cfg).params);
    }
  }
}
