#include "support.hpp"

#include "lrf/error.hpp"
#include "lrf/explorer.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace lrf;
using namespace lrf::test;

namespace {

std::int64_t brute_valid(const LayerDesc& l, Method m) {
  std::int64_t n = 0;
  enumerate_solutions(l, m, [&](const SolutionView& v) {
    n += v.valid;
    return true;
  });
  return n;
}

std::int64_t brute_band(const LayerDesc& l, Method m, Objective obj, double lo, double hi, bool hi_inclusive) {
  std::int64_t n = 0;
  enumerate_solutions(l, m, [&](const SolutionView& v) {
    const auto r = v.ratio(obj);
    n += v.valid && r >= lo && (hi_inclusive ? r <= hi : r < hi);
    return true;
  });
  return n;
}

Solution make(const LayerDesc& l, RankConfig cfg) {
  const auto orig = cost_original(l);
  Solution s;
  s.ranks = cfg;
  s.cost = cost_factorized(l, cfg);
  s.valid = is_valid_cost(orig, s.cost);
  s.ratio_params = compression_ratio(orig, s.cost, Objective::Params);
  s.ratio_flops = compression_ratio(orig, s.cost, Objective::Flops);
  s.ratio_mem = compression_ratio(orig, s.cost, Objective::OverallMem);
  return s;
}

} // namespace

TEST_CASE("rank bounds and space sizes") {
  CHECK(space_size(conv("c", {3, 3, 256, 512}, {8, 8}), Method::Tucker) == 131072);
  CHECK(cp_max_rank(conv("c", {5, 5, 96, 256}, {8, 8})) == 2400);
  CHECK(space_size(conv("c", {3, 3, 3, 32, 32}, {4, 4, 4}), Method::TT) == 9437184);
  CHECK(space_size(conv("c", {3, 512, 1024}, {16}), Method::Tucker) == 524288);
  CHECK_THROWS_AS(rank_bounds(fc("f", 4, 4), Method::CP), UnsupportedError);
  CHECK_THROWS_AS(rank_bounds(conv("c", {3, 3, 4, 4}, {4, 4}), Method::SVD), UnsupportedError);
}

TEST_CASE("enumeration of FC spaces") {
  auto l = fc("fc", 400, 120);
  CHECK(space_size(l, Method::SVD) == 120);
  CHECK(collect_solutions(l, Method::SVD, false).size() == 120);
  CHECK(brute_valid(l, Method::SVD) == 92);
  auto tiny = fc("fc", 1, 1);
  const auto all = collect_solutions(tiny, Method::SVD, false);
  REQUIRE(all.size() == 1);
  CHECK_FALSE(all[0].valid);
}

TEST_CASE("streamed solutions agree with the cost model and are lexicographic") {
  auto l = conv("c", {3, 3, 6, 8}, {6, 6}, 2);
  for (auto m : {Method::Tucker, Method::CP, Method::TT}) {
    std::vector<std::int64_t> prev;
    std::int64_t n = 0;
    enumerate_solutions(l, m, [&](const SolutionView& v) {
      const RankConfig cfg{m, {v.ranks.begin(), v.ranks.end()}, {}};
      CHECK(v.valid == is_valid_solution(l, cfg));
      CHECK(v.cost == cost_factorized(l, cfg));
      std::vector<std::int64_t> cur(v.ranks.begin(), v.ranks.end());
      if (!prev.empty()) CHECK(prev < cur);
      prev = cur;
      ++n;
      return true;
    });
    CHECK(n == space_size(l, m));
  }
  auto f = fc("fc", 24, 36);
  std::int64_t n = 0;
  enumerate_solutions(f, Method::T3F, [&](const SolutionView& v) {
    CHECK(v.valid == is_valid_solution(f, {Method::T3F, {v.ranks.begin(), v.ranks.end()}, *v.plan}));
    ++n;
    return true;
  });
  CHECK(n == space_size(f, Method::T3F));
}

TEST_CASE("census equals brute-force counting") {
  const std::vector<double> targets{0.25, 0.6, 0.85};
  for (const auto& l : {conv("a", {3, 3, 8, 12}, {6, 6}), conv("b", {3, 3, 16, 8}, {8, 8}, 2, Padding::Valid),
                        conv("c", {3, 12, 20}, {10})})
    for (auto m : {Method::Tucker, Method::CP, Method::TT}) {
      const auto c = census(l, m, targets, 0.005);
      CHECK(c.all_count == space_size(l, m));
      CHECK(c.valid_count == brute_valid(l, m));
      CHECK(c.valid_count <= c.all_count);
      for (const auto& b : c.buckets)
        CHECK(b.count == brute_band(l, m, Objective::Params, b.target - 0.005, b.target + 0.005, true));
      const auto again = census(l, m, targets, 0.005);
      for (std::size_t i = 0; i < c.buckets.size(); ++i) CHECK(again.buckets[i].count == c.buckets[i].count);
    }
  auto f = fc("fc", 48, 60);
  for (auto m : {Method::SVD, Method::QR, Method::T3F}) {
    const auto c = census(f, m, targets, 0.005);
    CHECK(c.valid_count == brute_valid(f, m));
  }
}

TEST_CASE("matrix methods yield one solution per bucket") {
  // One rank step moves the ratio by (M+N)/(MN); a band narrower than that
  // step holds a single rank.
  for (auto [m, n] : {std::pair{400, 120}, std::pair{512, 512}, std::pair{512, 256}}) {
    const double step = double(m + n) / (double(m) * n);
    const double tol = std::min(0.005, 0.5 * step * 0.999);
    for (auto method : {Method::SVD, Method::QR}) {
      const auto c = census(fc("fc", m, n), method, {0.25, 0.6, 0.85}, tol);
      for (const auto& b : c.buckets) CHECK(b.count == 1);
    }
  }
}

TEST_CASE("band enumeration equals brute-force filtering") {
  auto l = conv("c", {3, 3, 8, 12}, {6, 6}, 2);
  for (auto m : {Method::Tucker, Method::CP, Method::TT})
    for (auto obj : {Objective::Params, Objective::Flops, Objective::OverallMem}) {
      const auto got = enumerate_band(l, m, obj, 0.4, 0.7, [](const SolutionView&) { return true; });
      CHECK(got == brute_band(l, m, obj, 0.4, 0.7, false));
    }
}

TEST_CASE("ratio extremes equal brute-force min and max") {
  auto l = conv("c", {3, 3, 8, 12}, {6, 6});
  for (auto m : {Method::Tucker, Method::CP, Method::TT}) {
    const auto e = ratio_extremes(l, m);
    double bp = -1e9, wp = 1e9, bm = -1e9, wm = 1e9;
    enumerate_solutions(l, m, [&](const SolutionView& v) {
      if (!v.valid) return true;
      bp = std::max(bp, v.ratio(Objective::Params));
      wp = std::min(wp, v.ratio(Objective::Params));
      bm = std::max(bm, v.ratio(Objective::OverallMem));
      wm = std::min(wm, v.ratio(Objective::OverallMem));
      return true;
    });
    CHECK(e.best_params == bp);
    CHECK(e.worst_params == wp);
    CHECK(e.best_mem == bm);
    CHECK(e.worst_mem == wm);
  }
}

TEST_CASE("candidate selection") {
  auto l = conv("c", {3, 3, 64, 64}, {8, 8});
  SUBCASE("single candidate") {
    const std::vector<Solution> one{make(l, {Method::TT, {4, 4, 4}, {}})};
    CHECK(select_candidates(one, 3, 1).size() == 1);
  }
  SUBCASE("min, max and equal-rank picks") {
    const std::vector<Solution> c{make(l, {Method::TT, {2, 8, 2}, {}}), make(l, {Method::TT, {4, 4, 4}, {}}),
                                  make(l, {Method::TT, {8, 2, 8}, {}})};
    REQUIRE(c[0].cost.flops < c[1].cost.flops);
    REQUIRE(c[1].cost.flops < c[2].cost.flops);
    const auto picked = select_candidates(c, 3, 1);
    REQUIRE(picked.size() == 3);
    CHECK(picked[0].ranks.ranks == std::vector<std::int64_t>{2, 8, 2});
    CHECK(picked[1].ranks.ranks == std::vector<std::int64_t>{8, 2, 8});
    CHECK(picked[2].ranks.ranks == std::vector<std::int64_t>{4, 4, 4});
    const auto only = select_candidates(c, 1, 1);
    REQUIRE(only.size() == 1);
    CHECK(only[0].ranks.ranks == std::vector<std::int64_t>{2, 8, 2});
  }
  SUBCASE("max_sol larger than the pool clamps without duplicates") {
    std::vector<Solution> c;
    for (std::int64_t r = 1; r <= 5; ++r) c.push_back(make(l, {Method::CP, {r}, {}}));
    const auto picked = select_candidates(c, 10, 3);
    CHECK(picked.size() == 5);
    std::set<std::vector<std::int64_t>> seen;
    for (const auto& s : picked) seen.insert(s.ranks.ranks);
    CHECK(seen.size() == 5);
  }
  SUBCASE("ten picks from a large pool are distinct and seeded") {
    std::vector<Solution> c;
    for (std::int64_t r = 1; r <= 60; ++r) c.push_back(make(l, {Method::CP, {r}, {}}));
    const auto a = select_candidates(c, 10, 7), b = select_candidates(c, 10, 7);
    REQUIRE(a.size() == 10);
    std::set<std::vector<std::int64_t>> seen;
    for (std::size_t i = 0; i < a.size(); ++i) {
      seen.insert(a[i].ranks.ranks);
      CHECK(a[i].ranks == b[i].ranks);
    }
    CHECK(seen.size() == 10);
  }
  SUBCASE("empty pool") { CHECK(select_candidates({}, 3, 1).empty()); }
}

TEST_CASE("constrained queries") {
  auto f = fc("fc", 400, 120);
  SUBCASE("SVD at 85% picks the rank nearest the closed form") {
    const std::vector<Method> ms{Method::SVD};
    const auto res = constrained_query(f, ms, {Objective::Params, 0.85, 0.005, Objective::Flops});
    REQUIRE(res[0].second);
    CHECK(res[0].second->ranks.ranks[0] == std::llround(0.15 * 48000 / 520.0));
  }
  SUBCASE("minimizer is the smallest value in the band") {
    auto l = conv("c", {3, 3, 32, 48}, {8, 8}, 2);
    const std::vector<Method> ms{Method::Tucker, Method::CP, Method::TT};
    const QueryConstraint q{Objective::Params, 0.6, 0.005, Objective::Flops};
    for (const auto& [m, s] : constrained_query(l, ms, q)) {
      const auto band = solutions_in_band(l, m, q.fixed, q.value, q.tol);
      if (band.empty()) {
        CHECK_FALSE(s);
        continue;
      }
      REQUIRE(s);
      for (const auto& b : band) CHECK(s->cost.flops <= b.cost.flops);
    }
  }
}

TEST_CASE("solution-space CSV export") {
  auto f = fc("fc", 400, 120);
  std::ostringstream out;
  const std::vector<Method> svd{Method::SVD};
  CHECK(export_solution_space(f, svd, out) == 92);
  std::ostringstream empty;
  CHECK(export_solution_space(f, std::span<const Method>{}, empty) == 0);
  CHECK(empty.str() == "method,ranks,plan,params,fm,overall_mem,flops,valid,ratio_params,ratio_flops,ratio_mem\n");

  auto l = conv("c", {3, 3, 64, 64}, {8, 8});
  const std::vector<Method> tt{Method::TT};
  std::ostringstream a, b;
  CHECK(export_solution_space(l, tt, a, 10000) == 10000);
  CHECK(export_solution_space(l, tt, b, 10000) == 10000);
  CHECK(a.str() == b.str());
}
