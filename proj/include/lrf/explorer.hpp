#pragma once

#include "lrf/cost.hpp"
#include "lrf/rank.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace lrf {

struct Solution {
  RankConfig ranks;
  CostReport cost;
  bool valid = false;
  double ratio_params = 0.0;
  double ratio_flops = 0.0;
  double ratio_mem = 0.0;

  Method method() const { return ranks.method; }
  double ratio(Objective objective) const;
};

/// Non-owning view passed to enumeration callbacks; copy into a Solution to
/// keep it.
struct SolutionView {
  Method method;
  std::span<const std::int64_t> ranks;
  const T3FPlan* plan;
  CostReport cost;
  bool valid;
  CostReport original;

  double ratio(Objective objective) const { return compression_ratio(original, cost, objective); }
  Solution materialize() const;
};

/// Called per solution; return false to stop the stream.
using SolutionSink = std::function<bool(const SolutionView&)>;

/// Closed-form size of the exploration space (plans × rank grid for T3F).
std::int64_t space_size(const LayerDesc& layer, Method method);

/// Streams every rank tuple in lexicographic order (plans outermost for T3F).
/// Returns the number of solutions emitted.
std::int64_t enumerate_solutions(const LayerDesc& layer, Method method, const SolutionSink& sink);
std::vector<Solution> collect_solutions(const LayerDesc& layer, Method method, bool valid_only,
                                        std::int64_t limit = -1);

struct BucketCount {
  double target = 0.0; // fraction
  std::int64_t count = 0;
};

struct SpaceCensus {
  Method method = Method::SVD;
  std::int64_t all_count = 0;
  std::int64_t valid_count = 0;
  std::vector<BucketCount> buckets;
  double generation_time = 0.0; // seconds
};

/// Counts all/valid solutions and valid solutions whose parameter ratio lies
/// within ±tol of each target. Uses monotonicity in the last rank so only
/// the leading ranks are iterated.
SpaceCensus census(const LayerDesc& layer, Method method, const std::vector<double>& target_ratios,
                   double tol = 0.005);

/// Lowest and highest ratio per objective over the valid solutions.
struct RatioExtremes {
  std::int64_t valid_count = 0;
  double best_params = 0.0, worst_params = 0.0;
  double best_flops = 0.0, worst_flops = 0.0;
  double best_mem = 0.0, worst_mem = 0.0;
};

/// Scans valid solutions without materializing them: every cost is monotone
/// in the last rank, so only its two valid endpoints are inspected.
RatioExtremes ratio_extremes(const LayerDesc& layer, Method method);

/// Streams only the valid solutions whose `objective` ratio lies in
/// [lo, hi) (hi_inclusive widens it to [lo, hi]).
std::int64_t enumerate_band(const LayerDesc& layer, Method method, Objective objective, double lo, double hi,
                            const SolutionSink& sink, bool hi_inclusive = false);

/// Streaming max-sol picker: min-FLOPs, max-FLOPs, the most equal-rank
/// tuple, then seeded uniform extras, deduplicated.
class CandidateSelector {
public:
  CandidateSelector(std::size_t max_sol, std::uint64_t seed);
  void offer(const SolutionView& s);
  std::vector<Solution> result() const;
  std::int64_t seen() const { return seen_; }

private:
  struct Kept {
    Solution s;
    std::int64_t order = 0;
  };
  std::size_t max_sol_;
  std::uint64_t seed_;
  std::uint64_t state_;
  std::int64_t seen_ = 0;
  std::optional<Kept> min_, max_, equal_;
  std::int64_t equal_spread_ = 0;
  std::vector<Kept> reservoir_;
};

std::vector<Solution> select_candidates(std::span<const Solution> solutions, std::size_t max_sol,
                                        std::uint64_t seed);

struct QueryConstraint {
  Objective fixed = Objective::Params;
  double value = 0.0; // target ratio (fraction)
  double tol = 0.005;
  Objective minimize = Objective::Flops;
};

/// Per method, the valid solution inside the fixed band that minimizes the
/// other objective (ties: lexicographically first). Absent when the band is
/// empty.
std::vector<std::pair<Method, std::optional<Solution>>> constrained_query(const LayerDesc& layer,
                                                                          std::span<const Method> methods,
                                                                          const QueryConstraint& q);

/// Every solution in a band, for reports.
std::vector<Solution> solutions_in_band(const LayerDesc& layer, Method method, Objective objective, double center,
                                        double tol, std::int64_t limit = -1);

/// CSV export: method, ranks (slash separated), plan, params, fm, overall_mem,
/// flops, valid, ratio_params, ratio_flops, ratio_mem. Valid rows only;
/// `limit` < 0 means unbounded. Returns rows written.
std::int64_t export_solution_space(const LayerDesc& layer, std::span<const Method> methods, std::ostream& out,
                                   std::int64_t limit = -1);

} // namespace lrf
