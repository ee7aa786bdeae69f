#pragma once

#include "lrf/model.hpp"
#include "lrf/rank.hpp"

#include <array>
#include <cstdint>
#include <span>

namespace lrf {

/// Element and operation counts for a layer or model. FLOPs count a
/// multiply-accumulate as two operations; biases and activations are free.
struct CostReport {
  std::int64_t params = 0;
  std::int64_t fm_elems = 0;
  std::int64_t flops = 0;

  std::int64_t overall_mem() const { return params + fm_elems; }

  CostReport& operator+=(const CostReport& o) {
    params += o.params;
    fm_elems += o.fm_elems;
    flops += o.flops;
    return *this;
  }
  friend CostReport operator+(CostReport a, const CostReport& b) { return a += b; }
  friend bool operator==(const CostReport&, const CostReport&) = default;
};

enum class Objective { Params, Flops, OverallMem };
std::string_view to_string(Objective objective);
Objective parse_objective(std::string_view text);
std::int64_t objective_value(const CostReport& cost, Objective objective);

/// Shape facts of a decomposable layer, precomputed once so per-solution cost
/// evaluation never allocates.
struct LayerGeometry {
  bool fc = false;
  std::size_t d = 0;                       // spatial axes (conv)
  std::array<std::int64_t, 3> kernel{};    // K1..Kd
  std::int64_t c = 0, f = 0;               // conv channels, or FC (M, N)
  std::int64_t in_spatial = 1;             // ∏ input extents
  std::int64_t out_spatial = 1;            // ∏ output extents
  /// Spatial size after the per-axis stage j of CP/TT chains: axes ≤ j at
  /// output extent, the rest still at input extent.
  std::array<std::int64_t, 3> staged{};
  CostReport original;

  static LayerGeometry of(const LayerDesc& layer);
};

/// Cost of the unmodified layer. Conv and FC only.
CostReport cost_original(const LayerDesc& layer);

/// Cost of any single layer in a model graph, including factorized sub-layers
/// (depthwise, grouped conv, TT cores). Unweighted kinds cost zero.
CostReport layer_cost(const LayerDesc& layer);

/// Closed-form cost of `layer` factorized by `config`. Validates the config.
CostReport cost_factorized(const LayerDesc& layer, const RankConfig& config);

/// Unchecked fast paths used by enumeration. `ranks` must be in bounds.
CostReport cost_factorized(const LayerGeometry& g, Method method, std::span<const std::int64_t> ranks,
                           const T3FPlan* plan = nullptr);

/// Strictly fewer parameters and FLOPs than the original layer.
bool is_valid_solution(const LayerDesc& layer, const RankConfig& config);
inline bool is_valid_cost(const CostReport& original, const CostReport& factorized) {
  return factorized.params < original.params && factorized.flops < original.flops;
}

/// 1 − factorized/original for the chosen objective.
double compression_ratio(const LayerDesc& layer, const RankConfig& config, Objective objective);
double compression_ratio(const CostReport& original, const CostReport& factorized, Objective objective);

/// Costs split by weighted-layer family. Conv covers every conv-like kind,
/// FC covers dense and TT-matrix cores.
struct ModelBreakdown {
  CostReport conv;
  CostReport fc;
  CostReport total;
};
ModelBreakdown model_breakdown(const ModelDesc& model);

} // namespace lrf
