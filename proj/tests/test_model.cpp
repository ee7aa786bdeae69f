#include "support.hpp"

#include "lrf/error.hpp"

#include <doctest.h>

#include <fstream>

using namespace lrf;
using namespace lrf::test;

TEST_CASE("tensor shape rejects empty and non-positive extents") {
  CHECK_THROWS_AS(TensorShape(std::vector<std::int64_t>{}), ShapeError);
  CHECK_THROWS_AS(TensorShape({3, 0}), ShapeError);
  CHECK(TensorShape({2, 3, 4}).elements() == 24);
}

TEST_CASE("output extent follows same and valid padding") {
  CHECK(output_extent(16, 3, 1, Padding::Same) == 16);
  CHECK(output_extent(16, 3, 2, Padding::Same) == 8);
  CHECK(output_extent(7, 3, 2, Padding::Same) == 4);
  CHECK(output_extent(16, 3, 1, Padding::Valid) == 14);
  CHECK(output_extent(7, 3, 2, Padding::Valid) == 3);
}

TEST_CASE("output extent agrees with a naive convolution on a grid") {
  for (std::int64_t x = 3; x <= 9; ++x)
    for (std::int64_t k = 1; k <= 3; ++k)
      for (std::int64_t s = 1; s <= 3; ++s)
        for (auto p : {Padding::Same, Padding::Valid}) {
          auto l = conv("c", {k, 1, 1}, {x}, s, p);
          const auto y = naive_conv(l, DenseTensor{l.weight_shape}, DenseTensor{TensorShape{1, x, 1}});
          CHECK(y.shape()[1] == output_extent(x, k, s, p));
        }
}

TEST_CASE("layer validation catches degenerate outputs") {
  auto l = conv("c", {5, 5, 3, 8}, {4, 4}, 1, Padding::Valid);
  CHECK_THROWS_AS(validate_layer(l), ShapeError);
}

TEST_CASE("LeNet5-style descriptor loads with declared kinds") {
  const auto path = fixture_dir() / "lenet5.json";
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto m = model_from_json(text);
  m.validate();
  REQUIRE(m.layers.size() == 5);
  CHECK(m.layers[0].kind == LayerKind::Conv2D);
  CHECK(m.layers[1].kind == LayerKind::Conv2D);
  CHECK(m.layers[2].kind == LayerKind::FC);
  CHECK(m.layers[4].kind == LayerKind::FC);
  CHECK(output_spatial(m.at("conv2")) == std::vector<std::int64_t>{5, 5});

  const auto dir = scratch_dir("lenet");
  const auto w = random_weights(m, 1);
  write_weights(dir / "w.lrfw", w);
  const auto [m2, w2] = load_model(path, dir / "w.lrfw");
  CHECK(m2 == m);
  CHECK(w2 == w);
}

TEST_CASE("minimal FC model round trips bit-exactly") {
  const auto dir = scratch_dir("roundtrip");
  auto m = chain_model({fc("fc", 400, 120)});
  WeightStore w;
  w.set("fc", random_tensor(TensorShape{400, 120}, 9));
  save_model(m, w, dir / "m.json", dir / "w.lrfw");
  const auto [m2, w2] = load_model(dir / "m.json", dir / "w.lrfw");
  CHECK(m2.layers.size() == 1);
  CHECK(m2 == m);
  CHECK(w2 == w);
}

TEST_CASE("weights with the wrong shape are rejected") {
  const auto dir = scratch_dir("mismatch");
  auto m = chain_model({fc("fc", 400, 120)});
  WeightStore w;
  w.set("fc", DenseTensor{TensorShape{400, 119}});
  std::ofstream(dir / "m.json") << model_to_json(m);
  write_weights(dir / "w.lrfw", w);
  CHECK_THROWS_AS(load_model(dir / "m.json", dir / "w.lrfw"), ShapeError);
}

TEST_CASE("malformed inputs raise parse errors") {
  CHECK_THROWS_AS(model_from_json("{not json"), ParseError);
  CHECK_THROWS_AS(model_from_json(R"({"layers": []})"), ParseError);
  const auto dir = scratch_dir("badcontainer");
  std::ofstream(dir / "bad.lrfw") << "NOPE";
  CHECK_THROWS_AS(read_weights(dir / "bad.lrfw"), ParseError);
}

TEST_CASE("graph errors: cycles and dangling edges") {
  auto m = chain_model({fc("a", 4, 4), fc("b", 4, 4)});
  auto dangling = m;
  dangling.predecessors["b"] = {"ghost"};
  CHECK_THROWS_AS(dangling.validate(), GraphError);
  auto cyc = chain_model({fc("a", 4, 4), fc("b", 4, 4), fc("c", 4, 4)});
  cyc.predecessors["b"] = {"c"};
  cyc.predecessors["c"] = {"b"};
  CHECK_THROWS_AS(cyc.validate(), GraphError);
}

TEST_CASE("saving to an unwritable path is an I/O error") {
  auto m = chain_model({fc("fc", 2, 2)});
  WeightStore w;
  w.set("fc", DenseTensor{TensorShape{2, 2}});
  CHECK_THROWS_AS(save_model(m, w, "/nonexistent-dir/m.json", "/nonexistent-dir/w.lrfw"), IoError);
}

TEST_CASE("factorized model saves and reloads with edges preserved") {
  const auto dir = scratch_dir("factorized");
  auto c = conv("conv", {3, 3, 4, 8}, {6, 6});
  auto m = chain_model({c, fc("fc", 288, 3)});
  const auto w = random_weights(m, 4);
  const auto f = tucker2_decompose(c, w.at("conv"), 2, 3);
  const auto [fm, fw] = apply_factorizations(m, w, {{"conv", f}});
  save_model(fm, fw, dir / "m.json", dir / "w.lrfw");
  const auto [m2, w2] = load_model(dir / "m.json", dir / "w.lrfw");
  REQUIRE(m2.layers.size() == 4);
  CHECK(m2.input == "conv_tucker0");
  CHECK(m2.inputs_of("conv_tucker1") == std::vector<std::string>{"conv_tucker0"});
  CHECK(m2.inputs_of("fc") == std::vector<std::string>{"conv_tucker2"});
  CHECK(w2 == fw);
}

TEST_CASE("model breakdown splits conv and FC") {
  SUBCASE("single FC") {
    const auto b = model_breakdown(chain_model({fc("fc", 400, 120)}));
    CHECK(b.fc.params == 48000);
    CHECK(b.conv.params == 0);
  }
  SUBCASE("conv plus FC") {
    auto c = conv("conv", {3, 3, 256, 512}, {1, 1});
    const auto b = model_breakdown(chain_model({c, fc("fc", 512, 10)}));
    CHECK(b.conv.params == 1179648);
    CHECK(b.fc.params == 5120);
    CHECK(b.total.params == b.conv.params + b.fc.params);
    CHECK(b.total.flops == b.conv.flops + b.fc.flops);
    CHECK(b.total.fm_elems == b.conv.fm_elems + b.fc.fm_elems);
  }
  SUBCASE("activations only") {
    auto m = chain_model({activation("a", ActivationFn::Relu)});
    m.input_shape = {4};
    const auto b = model_breakdown(m);
    CHECK(b.total == CostReport{});
  }
}
