#include "support.hpp"

#include "lrf/cli.hpp"
#include "lrf/error.hpp"
#include "lrf/report.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace lrf;
using namespace lrf::test;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ScoreInputs complete_inputs() {
  ScoreInputs s;
  s.rank_configurations = 2;
  s.best_params = 99;
  s.worst_params = 15;
  s.best_flops = 91;
  s.worst_flops = 1;
  s.best_mem_improvement = 65;
  s.worst_mem_increase = 30;
  s.exploration_space = 5.2e5;
  s.param_coverage = 86;
  s.flops_coverage = 95;
  s.flexibility = Flexibility::PerDimRanks;
  s.decomposition_time = 3;
  return s;
}

} // namespace

TEST_CASE("scorecard examples") {
  CHECK(score_level(ScoreMetric::DecompositionTime, 3) == 5);
  CHECK(score_level(ScoreMetric::ExplorationSpace, 5.2e5) == 4);
  CHECK(score_level(ScoreMetric::BestParams, 95) == 4);
}

TEST_CASE("every threshold includes its lower bound") {
  struct Probe {
    ScoreMetric metric;
    double raw;
    int level;
  };
  const Probe probes[] = {
      {ScoreMetric::RankConfigurations, 5, 5}, {ScoreMetric::RankConfigurations, 4, 4},
      {ScoreMetric::RankConfigurations, 2, 3}, {ScoreMetric::RankConfigurations, 1, 2},
      {ScoreMetric::RankConfigurations, 0, 1}, {ScoreMetric::BestParams, 98, 5},
      {ScoreMetric::BestParams, 97.999, 4},    {ScoreMetric::BestFlops, 90, 3},
      {ScoreMetric::BestFlops, 79.9, 1},       {ScoreMetric::WorstParams, 10, 4},
      {ScoreMetric::WorstParams, 9.99, 3},     {ScoreMetric::WorstFlops, 2, 2},
      {ScoreMetric::WorstFlops, 1.99, 1},      {ScoreMetric::BestMem, 90, 5},
      {ScoreMetric::BestMem, 0, 2},            {ScoreMetric::BestMem, -0.1, 1},
      {ScoreMetric::WorstMem, 0, 5},           {ScoreMetric::WorstMem, 0.1, 4},
      {ScoreMetric::WorstMem, 25, 3},          {ScoreMetric::WorstMem, 75, 2},
      {ScoreMetric::WorstMem, 150, 1},         {ScoreMetric::ExplorationSpace, 1e6, 5},
      {ScoreMetric::ExplorationSpace, 1e4, 4}, {ScoreMetric::ExplorationSpace, 99, 1},
      {ScoreMetric::ParamCoverage, 93, 4},     {ScoreMetric::FlopsCoverage, 70, 2},
      {ScoreMetric::FlopsCoverage, 69.9, 1},   {ScoreMetric::DecompositionTime, 4.99, 5},
      {ScoreMetric::DecompositionTime, 5, 4},  {ScoreMetric::DecompositionTime, 60, 2},
      {ScoreMetric::DecompositionTime, 300, 1},
  };
  for (const auto& p : probes) {
    CAPTURE(to_string(p.metric));
    CAPTURE(p.raw);
    CHECK(score_level(p.metric, p.raw) == p.level);
  }
  CHECK(score_level(Flexibility::ShapeRanks) == 5);
  CHECK(score_level(Flexibility::Rigid) == 1);
  CHECK_THROWS_AS(score_level(ScoreMetric::Flexibility, 1), ParseError);
  CHECK(method_flexibility(Method::T3F) == Flexibility::ShapeRanks);
  CHECK(method_flexibility(Method::Tucker) == Flexibility::PerDimRanks);
  CHECK(method_flexibility(Method::QR) == Flexibility::Rigid);
}

TEST_CASE("qualitative scorecard") {
  const auto card = qualitative_score(complete_inputs());
  CHECK(card.rows[0].level == 3);
  CHECK(card.rows[7].level == 4);
  CHECK(card.rows[11].level == 5);
  auto missing = complete_inputs();
  missing.worst_flops.reset();
  CHECK_THROWS_WITH_AS(qualitative_score(missing), "missing metric: worst_flops_count", ParseError);
  missing = complete_inputs();
  missing.flexibility.reset();
  CHECK_THROWS_AS(qualitative_score(missing), ParseError);
}

TEST_CASE("measured inputs for a method") {
  const std::vector<LayerDesc> ls{conv("a", {3, 3, 16, 32}, {8, 8}), fc("f", 64, 10)};
  const auto s = measure_method(ls, Method::Tucker);
  CHECK(*s.rank_configurations == 2);
  CHECK(*s.exploration_space == 16 * 32);
  CHECK(*s.param_coverage == doctest::Approx(*s.best_params - *s.worst_params));
  CHECK_FALSE(s.decomposition_time);
  CHECK(free_rank_count(fc("f", 24, 36), Method::T3F) == 2);
  CHECK_THROWS_AS(measure_method(std::span<const LayerDesc>(ls.data(), 1), Method::SVD), UnsupportedError);
}

TEST_CASE("breakdown JSON excludes batch norm") {
  const auto j = nlohmann::json::parse(breakdown_to_json(toy_cnn()));
  CHECK(j["conv"]["params"] == 3 * 3 * 2 * 8 + 3 * 3 * 8 * 8);
  CHECK(j["fc"]["params"] == 72 * 16 + 16 * 4);
  CHECK(j["layers"].size() == 4);
}

TEST_CASE("CLI census and analyze") {
  const auto r = cli({"census", "--layer", "3,3,256,512", "--method", "tucker", "--ratios", "25,60,85"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.dump().find("131072") != std::string::npos);
  CHECK(r.out.find("generation_time") == std::string::npos);

  const auto a = cli({"analyze", "--layer", "400,120", "--fix", "params", "--value", "85", "--minimize", "flops"});
  REQUIRE(a.code == 0);
  CHECK(a.out.find("\"params\": 48000") != std::string::npos);
}

TEST_CASE("CLI exit codes") {
  CHECK(cli({"decompose", "--layer", "3,3,8,8", "--method", "cp", "--rank", "0"}).code == 1);
  CHECK(cli({"decompose", "--layer", "8,8", "--method", "cp", "--rank", "1"}).code == 1);
  CHECK(cli({"score", "--layer", "3,3,8,8", "--method", "tucker"}).code == 1);
  const auto unknown = cli({"frobnicate"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("usage error") != std::string::npos);
  CHECK(cli({"census", "--layer", "3,3,8,8", "--bogus"}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"breakdown", "--model", "/nonexistent/m.json"}).code == 1);
}

TEST_CASE("CLI outputs are byte-identical across runs") {
  const auto dir = scratch_dir("cli-determinism");
  const auto m = toy_cnn();
  const auto w = random_weights(m, 5);
  save_model(m, w, dir / "m.json", dir / "w.lrfw");
  write_dataset(dir / "d.lrfw", self_labelled(m, w, 24, 6));
  const std::vector<std::vector<std::string>> commands{
      {"--seed", "7", "analyze", "--layer", "3,3,64,64"},
      {"--limit", "500", "enumerate", "--layer", "3,3,16,16"},
      {"census", "--layer", "3,3,32,64", "--ratios", "25,60,85"},
      {"--seed", "7", "decompose", "--layer", "3,3,8,16", "--method", "cp", "--rank", "4"},
      {"--seed", "7", "decompose", "--layer", "24,36", "--method", "t3f", "--plan", "4x6:6x6", "--rank", "3"},
      {"score", "--layer", "3,3,32,32", "--method", "tt", "--decomposition-time", "2"},
      {"breakdown", "--model", (dir / "m.json").string()},
      {"--seed", "7", "dse", "--model", (dir / "m.json").string(), "--weights", (dir / "w.lrfw").string(), "--dataset",
       (dir / "d.lrfw").string(), "--step-size", "10", "--samples", "16", "--target-fraction", "100"},
  };
  for (const auto& c : commands) {
    CAPTURE(c[c[0] == "--seed" ? 2 : 0]);
    const auto a = cli(c), b = cli(c);
    CHECK(a.code == b.code);
    CHECK(a.code <= 1);
    CHECK_FALSE(a.out.empty());
    CHECK(a.out == b.out);
  }

  auto dse_with_files = [&](const std::string& tag) {
    const auto run = cli({"--seed", "7", "--out", (dir / (tag + ".json")).string(), "dse", "--model",
                          (dir / "m.json").string(), "--weights", (dir / "w.lrfw").string(), "--dataset",
                          (dir / "d.lrfw").string(), "--step-size", "10", "--samples", "16", "--out-model",
                          (dir / (tag + "_m.json")).string(), "--out-weights", (dir / (tag + "_w.lrfw")).string()});
    CHECK(run.code <= 1);
    return slurp(dir / (tag + ".json")) + slurp(dir / (tag + "_m.json")) + slurp(dir / (tag + "_w.lrfw"));
  };
  const auto first = dse_with_files("a");
  CHECK(first.size() > 100);
  CHECK(first == dse_with_files("b"));
}
