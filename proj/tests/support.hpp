#pragma once

// Shared fixtures and independent oracles for the unit and acceptance suites.

#include "lrf/cost.hpp"
#include "lrf/decompose.hpp"
#include "lrf/model.hpp"
#include "lrf/serialize.hpp"
#include "lrf/similarity.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace lrf::test {

inline DenseTensor random_tensor(const TensorShape& shape, std::uint64_t seed, float scale = 1.0f) {
  DenseTensor t{shape};
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, scale);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline LayerDesc fc(const std::string& name, std::int64_t m, std::int64_t n) {
  LayerDesc l;
  l.name = name;
  l.kind = LayerKind::FC;
  l.weight_shape = TensorShape{m, n};
  return l;
}

/// dims = (K1..Kd, C, F).
inline LayerDesc conv(const std::string& name, std::vector<std::int64_t> dims, std::vector<std::int64_t> input,
                      std::int64_t stride = 1, Padding padding = Padding::Same) {
  LayerDesc l;
  l.name = name;
  const auto d = dims.size() - 2;
  l.kind = d == 1 ? LayerKind::Conv1D : d == 2 ? LayerKind::Conv2D : LayerKind::Conv3D;
  l.weight_shape = TensorShape(std::move(dims));
  l.input_spatial = std::move(input);
  l.stride.assign(d, stride);
  l.padding = padding;
  return l;
}

inline LayerDesc activation(const std::string& name, ActivationFn fn) {
  LayerDesc l;
  l.name = name;
  l.kind = LayerKind::Activation;
  l.activation = fn;
  return l;
}

inline double rel_error(std::span<const float> a, std::span<const float> b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    den += double(b[i]) * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

/// Naive channels-last convolution (any d, groups, stride, padding). Weight is
/// (K1..Kd, C/groups, F); input is (B, X1..Xd, C).
inline DenseTensor naive_conv(const LayerDesc& l, const DenseTensor& w, const DenseTensor& x) {
  const auto& ws = w.shape().dims();
  const std::size_t d = ws.size() - 2;
  const auto cg = ws[d];
  const auto f = ws[d + 1];
  const auto groups = l.kind == LayerKind::DepthwiseConv ? f : l.groups;
  const auto c = cg * groups;
  const auto fg = f / groups;
  const auto b = x.shape()[0];
  std::vector<std::int64_t> in(d), out(d), pad(d), k(d);
  for (std::size_t a = 0; a < d; ++a) {
    in[a] = x.shape()[a + 1];
    k[a] = ws[a];
    const auto s = l.stride[a];
    if (l.padding == Padding::Same) {
      out[a] = (in[a] + s - 1) / s;
      pad[a] = std::max<std::int64_t>((out[a] - 1) * s + k[a] - in[a], 0) / 2;
    } else {
      out[a] = (in[a] - k[a]) / s + 1;
      pad[a] = 0;
    }
  }
  std::vector<std::int64_t> yshape{b};
  for (auto o : out) yshape.push_back(o);
  yshape.push_back(f);
  DenseTensor y{TensorShape(yshape)};
  std::int64_t out_sp = 1, k_sp = 1, in_sp = 1;
  for (std::size_t a = 0; a < d; ++a) out_sp *= out[a], k_sp *= k[a], in_sp *= in[a];
  std::vector<std::int64_t> o(d), kk(d);
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t op = 0; op < out_sp; ++op) {
      auto rem = op;
      for (std::size_t a = d; a-- > 0;) o[a] = rem % out[a], rem /= out[a];
      for (std::int64_t fo = 0; fo < f; ++fo) {
        const auto g = fo / fg;
        double acc = 0;
        for (std::int64_t kp = 0; kp < k_sp; ++kp) {
          auto r2 = kp;
          for (std::size_t a = d; a-- > 0;) kk[a] = r2 % k[a], r2 /= k[a];
          std::int64_t pos = 0;
          bool inside = true;
          for (std::size_t a = 0; a < d; ++a) {
            const auto p = o[a] * l.stride[a] + kk[a] - pad[a];
            if (p < 0 || p >= in[a]) inside = false;
            pos = pos * in[a] + p;
          }
          if (!inside) continue;
          for (std::int64_t ci = 0; ci < cg; ++ci) {
            const auto cin = g * cg + ci;
            acc += double(x[(n * in_sp + pos) * c + cin]) * w[(kp * cg + ci) * f + fo];
          }
        }
        y[(n * out_sp + op) * f + fo] = static_cast<float>(acc);
      }
    }
  return y;
}

/// Costs summed over the constructed chain, layer by layer.
inline CostReport trace_cost(const FactorizedLayer& f) {
  CostReport c;
  for (const auto& s : f.sub_layers) c += layer_cost(s.desc);
  return c;
}

/// Sequential model from an ordered list of layers (post-ops included).
inline ModelDesc chain_model(std::vector<LayerDesc> layers) {
  ModelDesc m;
  for (std::size_t i = 1; i < layers.size(); ++i) m.predecessors[layers[i].name] = {layers[i - 1].name};
  m.input = layers.front().name;
  m.output = layers.back().name;
  m.layers = std::move(layers);
  return m;
}

/// Random weights for every weighted layer.
inline WeightStore random_weights(const ModelDesc& m, std::uint64_t seed, float scale = 0.5f) {
  WeightStore w;
  for (const auto& l : m.layers)
    if (has_weights(l.kind)) w.set(l.name, random_tensor(l.weight_shape, seed++, scale));
  return w;
}

/// Dataset labelled by the model's own argmax, so the original accuracy is 1.
inline Dataset self_labelled(const ModelDesc& m, const WeightStore& w, std::int64_t count, std::uint64_t seed) {
  std::vector<std::int64_t> shape{count};
  for (auto d : m.sample_shape()) shape.push_back(d);
  Dataset data;
  data.inputs = random_tensor(TensorShape(shape), seed);
  const auto out = run_model(m, w, data.inputs);
  const auto classes = out.size() / count;
  data.labels = DenseTensor{TensorShape{count}};
  for (std::int64_t s = 0; s < count; ++s) {
    std::int64_t best = 0;
    for (std::int64_t k = 1; k < classes; ++k)
      if (out[s * classes + k] > out[s * classes + best]) best = k;
    data.labels[s] = static_cast<float>(best);
  }
  return data;
}

/// Toy CNN: conv(3,3,2,8)+relu -> conv(3,3,8,8) stride 2 -> fc(72,16) -> fc(16,4).
inline ModelDesc toy_cnn() {
  auto c1 = conv("conv1", {3, 3, 2, 8}, {6, 6});
  c1.post_ops = {"relu1"};
  auto c2 = conv("conv2", {3, 3, 8, 8}, {6, 6}, 2);
  return chain_model({c1, activation("relu1", ActivationFn::Relu), c2, fc("fc1", 72, 16), fc("fc2", 16, 4)});
}

/// Two FC layers where the first weight is exactly rank one.
inline std::pair<ModelDesc, WeightStore> rank_one_fixture(std::uint64_t seed = 3) {
  auto m = chain_model({fc("fcA", 8, 8), fc("fcB", 8, 8)});
  WeightStore w;
  const auto u = random_tensor(TensorShape{8}, seed);
  const auto v = random_tensor(TensorShape{8}, seed + 1);
  DenseTensor a{TensorShape{8, 8}};
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) a[i * 8 + j] = u[i] * v[j];
  w.set("fcA", a);
  w.set("fcB", random_tensor(TensorShape{8, 8}, seed + 2));
  return {m, w};
}

inline std::filesystem::path fixture_dir() { return LRF_FIXTURE_DIR; }

inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("lrf-test-" + tag);
  std::filesystem::create_directories(p);
  return p;
}

} // namespace lrf::test
