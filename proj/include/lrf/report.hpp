#pragma once

#include "lrf/cost.hpp"
#include "lrf/explorer.hpp"
#include "lrf/model.hpp"
#include "lrf/rank.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lrf {

enum class Flexibility { ShapeRanks, PerDimRanks, MultipleRanks, FixedRank, Rigid };

std::string_view to_string(Flexibility f);
Flexibility parse_flexibility(std::string_view text);
Flexibility method_flexibility(Method method);

enum class ScoreMetric {
  RankConfigurations,
  BestParams,
  WorstParams,
  BestFlops,
  WorstFlops,
  BestMem,
  WorstMem,
  ExplorationSpace,
  ParamCoverage,
  FlopsCoverage,
  Flexibility,
  DecompositionTime,
};
inline constexpr std::size_t kScoreMetricCount = 12;

std::string_view to_string(ScoreMetric metric);

/// Level 1..5 for a raw value. Percentages are in percent (95 means 95%);
/// memory rows take the improvement (best) or the increase (worst) in percent;
/// time is in seconds; rank configurations is the count of free ranks. Every
/// interval includes its lower bound. Flexibility must go through the
/// Flexibility overload.
int score_level(ScoreMetric metric, double raw);
int score_level(Flexibility flexibility);

/// Raw measurements for one method. Unset fields are missing.
struct ScoreInputs {
  std::optional<double> rank_configurations;
  std::optional<double> best_params, worst_params;
  std::optional<double> best_flops, worst_flops;
  std::optional<double> best_mem_improvement;
  std::optional<double> worst_mem_increase;
  std::optional<double> exploration_space;
  std::optional<double> param_coverage, flops_coverage;
  std::optional<Flexibility> flexibility;
  std::optional<double> decomposition_time;
};

struct QualitativeScorecard {
  struct Row {
    ScoreMetric metric;
    double raw = 0.0; // flexibility rows carry the enum value
    int level = 0;
  };
  std::array<Row, kScoreMetricCount> rows{};
};

/// Throws ParseError naming the first missing metric.
QualitativeScorecard qualitative_score(const ScoreInputs& inputs);

/// Number of ranks a user picks for this method on this layer.
std::int64_t free_rank_count(const LayerDesc& layer, Method method);

/// Averages per-layer measurements over the layers the method supports.
/// Decomposition time is left unset. Throws UnsupportedError when no layer is
/// supported.
ScoreInputs measure_method(std::span<const LayerDesc> layers, Method method);

std::string scorecard_to_json(Method method, const ScoreInputs& inputs, const QualitativeScorecard& card);
std::string census_to_json(const LayerDesc& layer, std::span<const SpaceCensus> censuses, bool timing);
std::string breakdown_to_json(const ModelDesc& model);
std::string solution_to_json(const LayerDesc& layer, const Solution& solution);

} // namespace lrf
