#include "lrf/explorer.hpp"

#include "lrf/error.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cstdio>
#include <ostream>

namespace lrf {

namespace {

/// One rectangular rank grid: the whole space for most methods, one plan's
/// grid for T3F.
struct Grid {
  std::vector<RankRange> bounds;
  const T3FPlan* plan = nullptr;
};

struct Space {
  LayerGeometry geometry;
  Method method;
  std::vector<T3FPlan> plans; // storage for Grid::plan
  std::vector<Grid> grids;

  Space(const LayerDesc& layer, Method m) : geometry(LayerGeometry::of(layer)), method(m) {
    if (!method_supports(m, layer))
      throw UnsupportedError(std::string(to_string(m)) + " cannot factorize " + std::string(to_string(layer.kind)) +
                             " layer '" + layer.name + "'");
    if (m == Method::T3F) {
      plans = t3f_plans(layer.weight_shape[0], layer.weight_shape[1]);
      for (const auto& p : plans) grids.push_back({t3f_rank_bounds(p), &p});
    } else {
      grids.push_back({rank_bounds(layer, m), nullptr});
    }
  }

  CostReport cost(const Grid& g, std::span<const std::int64_t> ranks) const {
    return cost_factorized(geometry, method, ranks, g.plan);
  }
};

/// Largest r in [lo, hi] with pred(r) true, assuming pred holds on a prefix.
template <typename Pred>
std::int64_t last_true(std::int64_t lo, std::int64_t hi, Pred pred) {
  std::int64_t a = lo - 1, b = hi; // invariant: pred(a) true (or a = lo-1); answer ≤ b
  while (a < b) {
    const auto mid = a + (b - a + 1) / 2;
    if (pred(mid)) a = mid;
    else b = mid - 1;
  }
  return a;
}

/// Smallest r in [lo, hi] with pred(r) true, assuming pred holds on a suffix.
template <typename Pred>
std::int64_t first_true(std::int64_t lo, std::int64_t hi, Pred pred) {
  std::int64_t a = lo, b = hi + 1;
  while (a < b) {
    const auto mid = a + (b - a) / 2;
    if (pred(mid)) b = mid;
    else a = mid + 1;
  }
  return a;
}

/// Calls f(ranks) for every assignment of all but the last rank; f sets and
/// scans the last rank itself. Ranks with a single entry get one call.
template <typename F>
void for_each_prefix(const std::vector<RankRange>& bounds, std::vector<std::int64_t>& ranks, F f) {
  const auto n = bounds.size();
  ranks.resize(n);
  if (n == 0) return;
  for (std::size_t i = 0; i + 1 < n; ++i) ranks[i] = bounds[i].lo;
  for (;;) {
    f(ranks);
    std::size_t i = n - 1;
    for (;;) {
      if (i == 0) return;
      --i;
      if (++ranks[i] <= bounds[i].hi) break;
      ranks[i] = bounds[i].lo;
    }
  }
}

/// Interval [first, last] of last-rank values that are valid and whose
/// objective ratio lies in the band. Empty when first > last.
struct Interval {
  std::int64_t first = 1, last = 0;
  std::int64_t size() const { return std::max<std::int64_t>(last - first + 1, 0); }
};

Interval band_interval(const Space& sp, const Grid& g, std::vector<std::int64_t>& ranks, Objective objective,
                       double lo, double hi, bool hi_inclusive) {
  const auto& rb = g.bounds.back();
  const auto& orig = sp.geometry.original;
  auto& last = ranks.back();
  auto at = [&](std::int64_t r) {
    last = r;
    return sp.cost(g, ranks);
  };
  // Ratios fall as the last rank grows: "ratio ≥ lo" and validity hold on a
  // prefix, "ratio below hi" on a suffix.
  const auto valid_end = last_true(rb.lo, rb.hi, [&](std::int64_t r) { return is_valid_cost(orig, at(r)); });
  const auto lo_end = last_true(rb.lo, valid_end, [&](std::int64_t r) {
    return compression_ratio(orig, at(r), objective) >= lo;
  });
  const auto hi_start = first_true(rb.lo, lo_end, [&](std::int64_t r) {
    const auto ratio = compression_ratio(orig, at(r), objective);
    return hi_inclusive ? ratio <= hi : ratio < hi;
  });
  return {hi_start, lo_end};
}

SolutionView view(const Space& sp, const Grid& g, std::span<const std::int64_t> ranks, const CostReport& cost) {
  const auto& orig = sp.geometry.original;
  return {sp.method, ranks, g.plan, cost, is_valid_cost(orig, cost), orig};
}

std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string fmt_ratio(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

} // namespace

double Solution::ratio(Objective objective) const {
  switch (objective) {
  case Objective::Params: return ratio_params;
  case Objective::Flops: return ratio_flops;
  case Objective::OverallMem: return ratio_mem;
  }
  return 0.0;
}

Solution SolutionView::materialize() const {
  Solution s;
  s.ranks.method = method;
  s.ranks.ranks.assign(ranks.begin(), ranks.end());
  if (plan) s.ranks.plan = *plan;
  s.cost = cost;
  s.valid = valid;
  s.ratio_params = compression_ratio(original, cost, Objective::Params);
  s.ratio_flops = compression_ratio(original, cost, Objective::Flops);
  s.ratio_mem = compression_ratio(original, cost, Objective::OverallMem);
  return s;
}

std::int64_t space_size(const LayerDesc& layer, Method method) {
  const Space sp(layer, method);
  std::int64_t total = 0;
  for (const auto& g : sp.grids) {
    std::int64_t n = 1;
    for (const auto& b : g.bounds) n *= b.width();
    total += n;
  }
  return total;
}

std::int64_t enumerate_solutions(const LayerDesc& layer, Method method, const SolutionSink& sink) {
  const Space sp(layer, method);
  std::int64_t emitted = 0;
  std::vector<std::int64_t> ranks;
  bool stop = false;
  for (const auto& g : sp.grids) {
    if (stop) break;
    for_each_prefix(g.bounds, ranks, [&](std::vector<std::int64_t>& r) {
      if (stop) return;
      const auto& rb = g.bounds.back();
      for (std::int64_t v = rb.lo; v <= rb.hi; ++v) {
        r.back() = v;
        ++emitted;
        if (!sink(view(sp, g, r, sp.cost(g, r)))) {
          stop = true;
          return;
        }
      }
    });
  }
  return emitted;
}

std::vector<Solution> collect_solutions(const LayerDesc& layer, Method method, bool valid_only, std::int64_t limit) {
  std::vector<Solution> out;
  enumerate_solutions(layer, method, [&](const SolutionView& v) {
    if (valid_only && !v.valid) return true;
    out.push_back(v.materialize());
    return limit < 0 || static_cast<std::int64_t>(out.size()) < limit;
  });
  return out;
}

SpaceCensus census(const LayerDesc& layer, Method method, const std::vector<double>& target_ratios, double tol) {
  const auto start = std::chrono::steady_clock::now();
  const Space sp(layer, method);
  SpaceCensus c;
  c.method = method;
  for (auto t : target_ratios) c.buckets.push_back({t, 0});
  const auto& orig = sp.geometry.original;
  std::vector<std::int64_t> ranks;
  for (const auto& g : sp.grids) {
    for_each_prefix(g.bounds, ranks, [&](std::vector<std::int64_t>& r) {
      const auto& rb = g.bounds.back();
      c.all_count += rb.width();
      const auto valid_end = last_true(rb.lo, rb.hi, [&](std::int64_t v) {
        r.back() = v;
        return is_valid_cost(orig, sp.cost(g, r));
      });
      c.valid_count += valid_end - rb.lo + 1;
      if (valid_end < rb.lo) return;
      for (auto& b : c.buckets)
        b.count += band_interval(sp, g, r, Objective::Params, b.target - tol, b.target + tol, true).size();
    });
  }
  c.generation_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

RatioExtremes ratio_extremes(const LayerDesc& layer, Method method) {
  const Space sp(layer, method);
  const auto& orig = sp.geometry.original;
  RatioExtremes e;
  e.best_params = e.best_flops = e.best_mem = -std::numeric_limits<double>::infinity();
  e.worst_params = e.worst_flops = e.worst_mem = std::numeric_limits<double>::infinity();
  auto take = [&](const CostReport& c) {
    const auto p = compression_ratio(orig, c, Objective::Params);
    const auto f = compression_ratio(orig, c, Objective::Flops);
    const auto m = compression_ratio(orig, c, Objective::OverallMem);
    e.best_params = std::max(e.best_params, p);
    e.worst_params = std::min(e.worst_params, p);
    e.best_flops = std::max(e.best_flops, f);
    e.worst_flops = std::min(e.worst_flops, f);
    e.best_mem = std::max(e.best_mem, m);
    e.worst_mem = std::min(e.worst_mem, m);
  };
  std::vector<std::int64_t> ranks;
  for (const auto& g : sp.grids) {
    for_each_prefix(g.bounds, ranks, [&](std::vector<std::int64_t>& r) {
      const auto& rb = g.bounds.back();
      const auto valid_end = last_true(rb.lo, rb.hi, [&](std::int64_t v) {
        r.back() = v;
        return is_valid_cost(orig, sp.cost(g, r));
      });
      if (valid_end < rb.lo) return;
      e.valid_count += valid_end - rb.lo + 1;
      r.back() = rb.lo;
      take(sp.cost(g, r));
      r.back() = valid_end;
      take(sp.cost(g, r));
    });
  }
  if (e.valid_count == 0) e = RatioExtremes{};
  return e;
}

std::int64_t enumerate_band(const LayerDesc& layer, Method method, Objective objective, double lo, double hi,
                            const SolutionSink& sink, bool hi_inclusive) {
  const Space sp(layer, method);
  std::int64_t emitted = 0;
  std::vector<std::int64_t> ranks;
  bool stop = false;
  for (const auto& g : sp.grids) {
    if (stop) break;
    for_each_prefix(g.bounds, ranks, [&](std::vector<std::int64_t>& r) {
      if (stop) return;
      const auto iv = band_interval(sp, g, r, objective, lo, hi, hi_inclusive);
      for (auto v = iv.first; v <= iv.last; ++v) {
        r.back() = v;
        ++emitted;
        if (!sink(view(sp, g, r, sp.cost(g, r)))) {
          stop = true;
          return;
        }
      }
    });
  }
  return emitted;
}

CandidateSelector::CandidateSelector(std::size_t max_sol, std::uint64_t seed)
    : max_sol_(max_sol), seed_(seed), state_(seed) {}

void CandidateSelector::offer(const SolutionView& s) {
  const auto order = seen_++;
  if (max_sol_ == 0) return;
  if (!min_ || s.cost.flops < min_->s.cost.flops) min_ = Kept{s.materialize(), order};
  if (!max_ || s.cost.flops > max_->s.cost.flops) max_ = Kept{s.materialize(), order};
  const auto [mn, mx] = std::minmax_element(s.ranks.begin(), s.ranks.end());
  const auto spread = s.ranks.empty() ? 0 : *mx - *mn;
  if (!equal_ || spread < equal_spread_ ||
      (spread == equal_spread_ && s.cost.flops < equal_->s.cost.flops)) {
    equal_ = Kept{s.materialize(), order};
    equal_spread_ = spread;
  }
  // Reservoir sampling (algorithm R) over the whole stream.
  if (reservoir_.size() < max_sol_) {
    reservoir_.push_back({s.materialize(), order});
  } else {
    const auto j = splitmix(state_) % static_cast<std::uint64_t>(order + 1);
    if (j < max_sol_) reservoir_[j] = Kept{s.materialize(), order};
  }
}

std::vector<Solution> CandidateSelector::result() const {
  std::vector<Solution> out;
  auto add = [&](const Solution& s) {
    if (out.size() >= max_sol_) return;
    for (const auto& o : out)
      if (o.ranks == s.ranks) return;
    out.push_back(s);
  };
  if (!min_) return out;
  add(min_->s);
  if (max_sol_ >= 2) add(max_->s);
  if (max_sol_ >= 3) add(equal_->s);
  auto extras = reservoir_;
  std::sort(extras.begin(), extras.end(), [](const Kept& a, const Kept& b) { return a.order < b.order; });
  for (const auto& k : extras) add(k.s);
  (void)seed_;
  return out;
}

std::vector<Solution> select_candidates(std::span<const Solution> solutions, std::size_t max_sol, std::uint64_t seed) {
  CandidateSelector sel(max_sol, seed);
  for (const auto& s : solutions) {
    SolutionView v{s.ranks.method, s.ranks.ranks, s.ranks.plan ? &*s.ranks.plan : nullptr, s.cost, s.valid, {}};
    // The view carries no baseline; keep the caller's ratios on the way out.
    sel.offer(v);
  }
  auto picked = sel.result();
  for (auto& p : picked)
    for (const auto& s : solutions)
      if (s.ranks == p.ranks) {
        p = s;
        break;
      }
  return picked;
}

std::vector<std::pair<Method, std::optional<Solution>>> constrained_query(const LayerDesc& layer,
                                                                          std::span<const Method> methods,
                                                                          const QueryConstraint& q) {
  std::vector<std::pair<Method, std::optional<Solution>>> out;
  for (auto m : methods) {
    std::optional<Solution> best;
    if (method_supports(m, layer)) {
      std::int64_t best_value = 0;
      enumerate_band(
          layer, m, q.fixed, q.value - q.tol, q.value + q.tol,
          [&](const SolutionView& v) {
            const auto value = objective_value(v.cost, q.minimize);
            if (!best || value < best_value) {
              best = v.materialize();
              best_value = value;
            }
            return true;
          },
          true);
    }
    out.emplace_back(m, std::move(best));
  }
  return out;
}

std::vector<Solution> solutions_in_band(const LayerDesc& layer, Method method, Objective objective, double center,
                                        double tol, std::int64_t limit) {
  std::vector<Solution> out;
  enumerate_band(
      layer, method, objective, center - tol, center + tol,
      [&](const SolutionView& v) {
        out.push_back(v.materialize());
        return limit < 0 || static_cast<std::int64_t>(out.size()) < limit;
      },
      true);
  return out;
}

std::int64_t export_solution_space(const LayerDesc& layer, std::span<const Method> methods, std::ostream& out,
                                   std::int64_t limit) {
  out << "method,ranks,plan,params,fm,overall_mem,flops,valid,ratio_params,ratio_flops,ratio_mem\n";
  std::int64_t rows = 0;
  for (auto m : methods) {
    if (limit >= 0 && rows >= limit) break;
    enumerate_solutions(layer, m, [&](const SolutionView& v) {
      if (!v.valid) return true;
      out << to_string(v.method) << ',';
      for (std::size_t i = 0; i < v.ranks.size(); ++i) out << (i ? "/" : "") << v.ranks[i];
      out << ',';
      if (v.plan) {
        for (std::size_t i = 0; i < v.plan->m.size(); ++i) out << (i ? "x" : "") << v.plan->m[i];
        out << ':';
        for (std::size_t i = 0; i < v.plan->n.size(); ++i) out << (i ? "x" : "") << v.plan->n[i];
      }
      out << ',' << v.cost.params << ',' << v.cost.fm_elems << ',' << v.cost.overall_mem() << ',' << v.cost.flops
          << ",1," << fmt_ratio(v.ratio(Objective::Params)) << ',' << fmt_ratio(v.ratio(Objective::Flops)) << ','
          << fmt_ratio(v.ratio(Objective::OverallMem)) << '\n';
      ++rows;
      return limit < 0 || rows < limit;
    });
  }
  return rows;
}

} // namespace lrf
