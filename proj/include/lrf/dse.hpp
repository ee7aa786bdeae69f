#pragma once

#include "lrf/cost.hpp"
#include "lrf/decompose.hpp"
#include "lrf/explorer.hpp"
#include "lrf/serialize.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lrf {

struct DseConfig {
  Objective objective = Objective::Params;
  double accuracy_drop_limit = 0.015;
  double step_size = 5.0; // percent
  std::size_t max_sol = 3;
  double sim_threshold_sequential = 0.92;
  double sim_threshold_nonsequential = 0.96;
  double target_fraction = 0.9;
  std::int64_t sample_count = 1000;
  std::uint64_t seed = 0;
  Method conv_method = Method::Tucker;
  Method fc_method = Method::SVD;
  unsigned threads = 1;
  DecomposeOptions decompose;

  /// Throws ParseError when a field is out of range.
  void validate() const;
};

/// Returns accuracy in [0, 1] for a candidate model.
struct Evaluator {
  std::function<double(const ModelDesc&, const WeightStore&)> fn;
  std::string label;
};

double builtin_eval_accuracy(const ModelDesc& model, const WeightStore& weights, const Dataset& data);
Evaluator builtin_evaluator(const Dataset& data);
/// Runs `<command> <model.json> <weights.lrfw>` and parses one decimal from
/// stdout; nonzero exit or unparsable output raises EvaluatorError.
Evaluator external_evaluator(std::string command);

/// The ⌈fraction·L⌉ decomposable layers largest by the objective, in model
/// order. Ties at the cut keep the earlier layer.
std::vector<std::string> select_target_layers(const ModelDesc& model, Objective objective, double fraction);

/// Rank-1 factorization of every target (conv layers by conv_method, FC by
/// fc_method).
std::map<std::string, FactorizedLayer> init_rank_one(const ModelDesc& model, const WeightStore& weights,
                                                     const std::vector<std::string>& targets, Method conv_method,
                                                     Method fc_method, const DecomposeOptions& options = {});

struct LayerState {
  std::string name;
  std::optional<RankConfig> ranks; // empty once reverted to the original
  double step = 0.0;               // percent
  bool frozen = false;
  bool exhausted = false;
  bool sequential = true;
  double similarity = 0.0;
  std::int64_t objective_cost = 0;
};

struct AuditEntry {
  int iteration = 0;
  double accuracy = 0.0;
  std::vector<LayerState> layers;
  /// Candidates decomposed per layer while advancing after this evaluation.
  std::map<std::string, std::int64_t> candidates;
};

struct DseResult {
  ModelDesc model;
  WeightStore weights;
  std::map<std::string, FactorizedLayer> chains;
  std::vector<LayerState> layers;
  std::vector<AuditEntry> audit;
  double original_accuracy = 0.0;
  double final_accuracy = 0.0;
  bool met = false;
  std::string evaluator;
  Method conv_method = Method::Tucker;
  Method fc_method = Method::SVD;
  Objective objective = Objective::Params;
};

/// Every layer was frozen or exhausted before accuracy recovered. Carries the
/// most accurate model seen.
class ConstraintUnreachableError : public Error {
public:
  ConstraintUnreachableError(const std::string& what, DseResult best)
      : Error(what), best_(std::make_shared<DseResult>(std::move(best))) {}
  const DseResult& best() const { return *best_; }

private:
  std::shared_ptr<const DseResult> best_;
};

DseResult run_dse(const ModelDesc& model, const WeightStore& weights, const Dataset& dataset, const DseConfig& config,
                  const Evaluator& evaluator);

/// Objective cost of one layer as left by a run (original cost if reverted).
std::int64_t layer_objective(const DseResult& run, const ModelDesc& original, const std::string& layer,
                             Objective objective);

struct HybridResult {
  ModelDesc model;
  WeightStore weights;
  std::map<std::string, FactorizedLayer> chains;
  std::map<std::string, std::size_t> chosen_run;     // layer -> index into runs
  std::map<std::string, std::int64_t> layer_objective;
  std::int64_t total_objective = 0;
};

/// Per target layer, installs the chain of the run with the lowest objective
/// cost (ties keep the earlier run).
HybridResult hybrid_combine(const ModelDesc& model, const WeightStore& weights, const std::vector<DseResult>& runs,
                            Objective objective);

/// JSON rendering of the audit log and final layer states.
std::string audit_to_json(const DseResult& result);

} // namespace lrf
