#pragma once

#include "lrf/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lrf {

enum class Method { Tucker, CP, TT, SVD, QR, T3F };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);
/// Tucker, CP and TT act on conv kernels; SVD, QR and T3F on FC matrices.
bool method_targets_conv(Method method);
bool method_supports(Method method, const LayerDesc& layer);

/// Factorization of M and N into paired mode sizes, ∏m = M and ∏n = N.
struct T3FPlan {
  std::vector<std::int64_t> m;
  std::vector<std::int64_t> n;

  std::size_t order() const { return m.size(); }
  friend bool operator==(const T3FPlan&, const T3FPlan&) = default;
  friend auto operator<=>(const T3FPlan&, const T3FPlan&) = default;
};

/// Rank tuple for one method. Tucker: (r1, r2). CP, SVD, QR: (r). TT on a
/// d-dimensional conv: the d+1 interior ranks. T3F: the d-1 interior ranks of
/// its plan (boundary ranks are implicitly one).
struct RankConfig {
  Method method = Method::SVD;
  std::vector<std::int64_t> ranks;
  std::optional<T3FPlan> plan;

  std::string to_string() const;
  friend bool operator==(const RankConfig&, const RankConfig&) = default;
};

struct RankRange {
  std::int64_t lo = 1;
  std::int64_t hi = 1;
  std::int64_t width() const { return hi - lo + 1; }
};

/// Upper rank of CP on a kernel: ∏dims / max(dims).
std::int64_t cp_max_rank(const LayerDesc& layer);

/// Inclusive per-rank ranges. Throws UnsupportedError for T3F (ranges depend
/// on the plan) and for method/layer mismatches.
std::vector<RankRange> rank_bounds(const LayerDesc& layer, Method method);
std::vector<RankRange> t3f_rank_bounds(const T3FPlan& plan);

/// Every ordered factorization of `value` into exactly `parts` factors, each
/// at least `min_factor`, in lexicographic order.
std::vector<std::vector<std::int64_t>> ordered_factorizations(std::int64_t value, std::size_t parts,
                                                              std::int64_t min_factor = 2);
/// T3F plans for an (M, N) layer: d in {2, 3}, factors ≥ 2, lexicographic by
/// (d, m, n).
std::vector<T3FPlan> t3f_plans(std::int64_t m, std::int64_t n);

/// Throws RankError unless `config` fits the method's bounds for `layer`.
void validate_rank_config(const LayerDesc& layer, const RankConfig& config);

/// All ranks one (T3F uses the first enumerated plan, or a trivial (M)x(N)
/// single-core plan when no factorization exists).
RankConfig rank_one_config(const LayerDesc& layer, Method method);

} // namespace lrf
