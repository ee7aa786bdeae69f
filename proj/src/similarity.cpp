#include "lrf/similarity.hpp"

#include "lrf/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace lrf {

namespace {

std::size_t idx(std::int64_t v) { return static_cast<std::size_t>(v); }

[[noreturn]] void shape_fail(const LayerDesc& layer, const std::string& msg) {
  throw ShapeError("forward '" + layer.name + "': " + msg);
}

std::int64_t batch_of(const DenseTensor& x) { return x.shape().rank() == 0 ? 0 : x.shape()[0]; }
std::int64_t sample_elems(const DenseTensor& x) { return x.size() / std::max<std::int64_t>(batch_of(x), 1); }

std::vector<std::int64_t> with_batch(std::int64_t b, const std::vector<std::int64_t>& sample) {
  std::vector<std::int64_t> dims{b};
  dims.insert(dims.end(), sample.begin(), sample.end());
  return dims;
}

/// Spatial geometry padded to three axes so one loop nest covers 1D..3D.
struct Grid {
  std::array<std::int64_t, 3> in{1, 1, 1}, out{1, 1, 1}, k{1, 1, 1}, s{1, 1, 1}, pad{0, 0, 0};
};

Grid make_grid(const std::vector<std::int64_t>& in, const std::vector<std::int64_t>& kernel,
               const std::vector<std::int64_t>& stride, Padding padding) {
  Grid g;
  for (std::size_t a = 0; a < in.size(); ++a) {
    g.in[a] = in[a];
    g.k[a] = kernel[a];
    g.s[a] = stride[a];
    g.out[a] = output_extent(in[a], kernel[a], stride[a], padding);
    if (padding == Padding::Same) g.pad[a] = std::max<std::int64_t>((g.out[a] - 1) * g.s[a] + g.k[a] - g.in[a], 0) / 2;
  }
  return g;
}

void check_spatial_input(const LayerDesc& layer, const DenseTensor& x, std::int64_t channels) {
  const auto& dims = x.shape().dims();
  if (dims.size() != layer.input_spatial.size() + 2) shape_fail(layer, "expected (B, spatial..., C) input, got " + x.shape().to_string());
  for (std::size_t a = 0; a < layer.input_spatial.size(); ++a)
    if (dims[a + 1] != layer.input_spatial[a]) shape_fail(layer, "input " + x.shape().to_string() + " does not match input_spatial");
  if (dims.back() != channels) shape_fail(layer, "input has " + std::to_string(dims.back()) + " channels, expected " + std::to_string(channels));
}

DenseTensor conv_forward(const LayerDesc& layer, const DenseTensor& w, const DenseTensor& x) {
  const auto d = spatial_rank(layer);
  const bool depthwise = layer.kind == LayerKind::DepthwiseConv;
  const auto cin = in_channels(layer);
  const auto f = out_channels(layer);
  check_spatial_input(layer, x, cin);
  const auto g = make_grid(layer.input_spatial, kernel_dims(layer), layer.stride, layer.padding);
  const auto groups = depthwise ? cin : layer.groups;
  const auto cin_g = cin / groups, f_g = f / groups;
  const auto b = batch_of(x);
  std::vector<std::int64_t> out_sp(g.out.begin(), g.out.begin() + static_cast<std::ptrdiff_t>(d));
  out_sp.push_back(f);
  DenseTensor y(TensorShape(with_batch(b, out_sp)));
  const auto wdata = w.data();
  const auto xdata = x.data();
  auto ydata = y.data();
  const auto in_plane = g.in[0] * g.in[1] * g.in[2] * cin;
  std::vector<double> acc(idx(f));
  std::int64_t oflat = 0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t ox = 0; ox < g.out[0]; ++ox)
      for (std::int64_t oy = 0; oy < g.out[1]; ++oy)
        for (std::int64_t oz = 0; oz < g.out[2]; ++oz, oflat += f) {
          std::fill(acc.begin(), acc.end(), 0.0);
          for (std::int64_t kx = 0; kx < g.k[0]; ++kx) {
            const auto ix = ox * g.s[0] - g.pad[0] + kx;
            if (ix < 0 || ix >= g.in[0]) continue;
            for (std::int64_t ky = 0; ky < g.k[1]; ++ky) {
              const auto iy = oy * g.s[1] - g.pad[1] + ky;
              if (iy < 0 || iy >= g.in[1]) continue;
              for (std::int64_t kz = 0; kz < g.k[2]; ++kz) {
                const auto iz = oz * g.s[2] - g.pad[2] + kz;
                if (iz < 0 || iz >= g.in[2]) continue;
                const float* xin = xdata.data() + n * in_plane + ((ix * g.in[1] + iy) * g.in[2] + iz) * cin;
                const auto kidx = (kx * g.k[1] + ky) * g.k[2] + kz;
                if (depthwise) {
                  const float* wk = wdata.data() + kidx * cin;
                  for (std::int64_t c = 0; c < cin; ++c) acc[idx(c)] += static_cast<double>(xin[c]) * wk[c];
                  continue;
                }
                const float* wk = wdata.data() + kidx * cin_g * f;
                for (std::int64_t c = 0; c < cin; ++c) {
                  const double v = xin[c];
                  if (v == 0.0) continue;
                  const auto grp = c / cin_g;
                  const float* wrow = wk + (c % cin_g) * f + grp * f_g;
                  double* arow = acc.data() + grp * f_g;
                  for (std::int64_t o = 0; o < f_g; ++o) arow[o] += v * wrow[o];
                }
              }
            }
          }
          for (std::int64_t o = 0; o < f; ++o) ydata[idx(oflat + o)] = static_cast<float>(acc[idx(o)]);
        }
  return y;
}

DenseTensor fc_forward(const LayerDesc& layer, const DenseTensor& w, const DenseTensor& x) {
  const auto m = layer.weight_shape[0], n = layer.weight_shape[1];
  const auto b = batch_of(x);
  if (sample_elems(x) != m) shape_fail(layer, "input " + x.shape().to_string() + " does not flatten to " + std::to_string(m));
  DenseTensor y(TensorShape{b, n});
  std::vector<double> acc(idx(n));
  for (std::int64_t s = 0; s < b; ++s) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::int64_t i = 0; i < m; ++i) {
      const double v = x[s * m + i];
      if (v == 0.0) continue;
      const float* wrow = w.data().data() + i * n;
      for (std::int64_t j = 0; j < n; ++j) acc[idx(j)] += v * wrow[j];
    }
    for (std::int64_t j = 0; j < n; ++j) y[s * n + j] = static_cast<float>(acc[idx(j)]);
  }
  return y;
}

DenseTensor activation_forward(const LayerDesc& layer, const DenseTensor& x) {
  DenseTensor y = x;
  auto v = y.data();
  switch (layer.activation) {
  case ActivationFn::Linear: break;
  case ActivationFn::Relu:
    for (auto& e : v) e = std::max(e, 0.0f);
    break;
  case ActivationFn::Tanh:
    for (auto& e : v) e = static_cast<float>(std::tanh(static_cast<double>(e)));
    break;
  case ActivationFn::Sigmoid:
    for (auto& e : v) e = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(e))));
    break;
  case ActivationFn::Softmax: {
    const auto width = x.shape().dims().back();
    for (std::int64_t start = 0; start < y.size(); start += width) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::int64_t i = 0; i < width; ++i) mx = std::max(mx, static_cast<double>(v[idx(start + i)]));
      double sum = 0.0;
      std::vector<double> e(idx(width));
      for (std::int64_t i = 0; i < width; ++i) sum += e[idx(i)] = std::exp(v[idx(start + i)] - mx);
      for (std::int64_t i = 0; i < width; ++i) v[idx(start + i)] = static_cast<float>(e[idx(i)] / sum);
    }
    break;
  }
  }
  return y;
}

DenseTensor pool_forward(const LayerDesc& layer, const DenseTensor& x) {
  const auto& dims = x.shape().dims();
  const auto d = layer.pool_size.size();
  if (dims.size() != d + 2) shape_fail(layer, "pool expects (B, spatial..., C), got " + x.shape().to_string());
  std::vector<std::int64_t> in_sp(dims.begin() + 1, dims.end() - 1);
  if (!layer.input_spatial.empty() && layer.input_spatial != in_sp) shape_fail(layer, "input does not match input_spatial");
  const auto c = dims.back();
  const auto g = make_grid(in_sp, layer.pool_size, layer.stride, layer.padding);
  std::vector<std::int64_t> out_sp(g.out.begin(), g.out.begin() + static_cast<std::ptrdiff_t>(d));
  out_sp.push_back(c);
  const auto b = dims[0];
  DenseTensor y(TensorShape(with_batch(b, out_sp)));
  const auto in_plane = g.in[0] * g.in[1] * g.in[2] * c;
  std::int64_t oflat = 0;
  const bool is_max = layer.pool_mode == PoolMode::Max;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t ox = 0; ox < g.out[0]; ++ox)
      for (std::int64_t oy = 0; oy < g.out[1]; ++oy)
        for (std::int64_t oz = 0; oz < g.out[2]; ++oz, oflat += c)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
            std::int64_t count = 0;
            for (std::int64_t kx = 0; kx < g.k[0]; ++kx) {
              const auto ix = ox * g.s[0] - g.pad[0] + kx;
              if (ix < 0 || ix >= g.in[0]) continue;
              for (std::int64_t ky = 0; ky < g.k[1]; ++ky) {
                const auto iy = oy * g.s[1] - g.pad[1] + ky;
                if (iy < 0 || iy >= g.in[1]) continue;
                for (std::int64_t kz = 0; kz < g.k[2]; ++kz) {
                  const auto iz = oz * g.s[2] - g.pad[2] + kz;
                  if (iz < 0 || iz >= g.in[2]) continue;
                  const double v = x[n * in_plane + ((ix * g.in[1] + iy) * g.in[2] + iz) * c + ch];
                  acc = is_max ? std::max(acc, v) : acc + v;
                  ++count;
                }
              }
            }
            y[oflat + ch] = static_cast<float>(is_max ? acc : acc / static_cast<double>(std::max<std::int64_t>(count, 1)));
          }
  return y;
}

DenseTensor batchnorm_forward(const LayerDesc& layer, const DenseTensor& w, const DenseTensor& x) {
  const auto c = layer.weight_shape[1];
  if (x.shape().dims().back() != c) shape_fail(layer, "channel count mismatch");
  DenseTensor y = x;
  std::vector<double> scale(idx(c)), shift(idx(c));
  for (std::int64_t i = 0; i < c; ++i) {
    const double gamma = w[i], beta = w[c + i], mean = w[2 * c + i], var = w[3 * c + i];
    scale[idx(i)] = gamma / std::sqrt(var + layer.epsilon);
    shift[idx(i)] = beta - mean * scale[idx(i)];
  }
  auto v = y.data();
  for (std::size_t e = 0; e < v.size(); ++e) {
    const auto ch = e % idx(c);
    v[e] = static_cast<float>(v[e] * scale[ch] + shift[ch]);
  }
  return y;
}

DenseTensor ttcore_forward(const LayerDesc& layer, const DenseTensor& w, const DenseTensor& x) {
  const auto& tt = *layer.tt;
  const auto t = idx(tt.core);
  const auto d = tt.m_factors.size();
  const auto mt = tt.m_factors[t], nt = tt.n_factors[t];
  const auto rp = tt.ranks[t], rn = tt.ranks[t + 1];
  std::int64_t a_rest = 1, j_done = 1;
  for (auto k = t + 1; k < d; ++k) a_rest *= tt.m_factors[k];
  for (std::size_t k = 0; k < t; ++k) j_done *= tt.n_factors[k];
  const auto in_len = mt * a_rest * j_done * rp;
  const auto out_len = a_rest * j_done * nt * rn;
  const auto b = batch_of(x);
  if (sample_elems(x) != in_len) shape_fail(layer, "TT core expects " + std::to_string(in_len) + " elements per sample");
  DenseTensor y(TensorShape{b, out_len});
  std::vector<double> acc(idx(out_len));
  for (std::int64_t s = 0; s < b; ++s) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* in = x.data().data() + s * in_len;
    // in[i_t, rest, jprev, a] · G[a, i_t, j_t, b] -> out[rest, jprev, j_t, b]
    for (std::int64_t it = 0; it < mt; ++it)
      for (std::int64_t ia = 0; ia < a_rest; ++ia)
        for (std::int64_t jj = 0; jj < j_done; ++jj)
          for (std::int64_t a = 0; a < rp; ++a) {
            const double v = in[((it * a_rest + ia) * j_done + jj) * rp + a];
            if (v == 0.0) continue;
            const float* g = w.data().data() + (a * mt + it) * nt * rn;
            double* o = acc.data() + (ia * j_done + jj) * nt * rn;
            for (std::int64_t e = 0; e < nt * rn; ++e) o[e] += v * g[e];
          }
    for (std::int64_t e = 0; e < out_len; ++e) y[s * out_len + e] = static_cast<float>(acc[idx(e)]);
  }
  return y;
}

} // namespace

DenseTensor forward_layer(const LayerDesc& layer, const DenseTensor* weight,
                          std::span<const DenseTensor* const> inputs) {
  if (inputs.empty()) shape_fail(layer, "no input");
  if (has_weights(layer.kind)) {
    if (!weight) shape_fail(layer, "missing weights");
    if (weight->shape() != layer.weight_shape) shape_fail(layer, "weight shape mismatch");
  }
  const bool merge = layer.kind == LayerKind::Add || layer.kind == LayerKind::Concat;
  if (!merge && inputs.size() != 1) shape_fail(layer, "expected exactly one input");
  const DenseTensor& x = *inputs[0];
  switch (layer.kind) {
  case LayerKind::Conv1D:
  case LayerKind::Conv2D:
  case LayerKind::Conv3D:
  case LayerKind::DepthwiseConv: return conv_forward(layer, *weight, x);
  case LayerKind::FC: return fc_forward(layer, *weight, x);
  case LayerKind::Activation: return activation_forward(layer, x);
  case LayerKind::Pool: return pool_forward(layer, x);
  case LayerKind::BatchNorm: return batchnorm_forward(layer, *weight, x);
  case LayerKind::TTCore: return ttcore_forward(layer, *weight, x);
  case LayerKind::Flatten: return x.reshaped(TensorShape{batch_of(x), sample_elems(x)});
  case LayerKind::Reshape: {
    if (product(layer.target_shape) != sample_elems(x)) shape_fail(layer, "reshape element count mismatch");
    return x.reshaped(TensorShape(with_batch(batch_of(x), layer.target_shape)));
  }
  case LayerKind::Add: {
    DenseTensor y = x;
    for (std::size_t i = 1; i < inputs.size(); ++i) {
      if (inputs[i]->shape() != x.shape()) shape_fail(layer, "add inputs differ in shape");
      auto v = y.data();
      const auto o = inputs[i]->data();
      for (std::size_t e = 0; e < v.size(); ++e) v[e] += o[e];
    }
    return y;
  }
  case LayerKind::Concat: {
    const auto b = batch_of(x);
    auto dims = x.shape().dims();
    std::int64_t total = 0;
    for (const auto* in : inputs) {
      auto od = in->shape().dims();
      if (od.size() != dims.size() || !std::equal(od.begin(), od.end() - 1, dims.begin()))
        shape_fail(layer, "concat inputs disagree outside the channel axis");
      total += od.back();
    }
    const auto rows = x.size() / dims.back();
    dims.back() = total;
    DenseTensor y{TensorShape(dims)};
    std::int64_t offset = 0;
    for (const auto* in : inputs) {
      const auto c = in->shape().dims().back();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t e = 0; e < c; ++e) y[r * total + offset + e] = (*in)[r * c + e];
      offset += c;
    }
    (void)b;
    return y;
  }
  }
  throw UnsupportedError("forward: unsupported layer kind " + std::string(to_string(layer.kind)));
}

DenseTensor forward_layer(const LayerDesc& layer, const DenseTensor* weight, const DenseTensor& input) {
  const DenseTensor* in[] = {&input};
  return forward_layer(layer, weight, std::span<const DenseTensor* const>(in));
}

DenseTensor forward_factorized(const FactorizedLayer& f, const DenseTensor& input) {
  DenseTensor x = input;
  for (const auto& sub : f.sub_layers)
    x = forward_layer(sub.desc, has_weights(sub.desc.kind) ? &sub.weight : nullptr, x);
  return x;
}

std::map<std::string, DenseTensor> run_model_all(const ModelDesc& model, const WeightStore& weights,
                                                 const DenseTensor& inputs) {
  std::map<std::string, DenseTensor> out;
  for (const auto& name : model.topological_order()) {
    const auto& layer = model.at(name);
    std::vector<const DenseTensor*> ins;
    if (name == model.input) ins.push_back(&inputs);
    for (const auto& p : model.inputs_of(name)) ins.push_back(&out.at(p));
    const DenseTensor* w = has_weights(layer.kind) ? &weights.at(name) : nullptr;
    out.emplace(name, forward_layer(layer, w, std::span<const DenseTensor* const>(ins)));
  }
  return out;
}

DenseTensor run_model(const ModelDesc& model, const WeightStore& weights, const DenseTensor& inputs) {
  auto all = run_model_all(model, weights, inputs);
  return std::move(all.at(model.output));
}

FeatureMapCapture capture_feature_maps(const ModelDesc& model, const WeightStore& weights,
                                       const DenseTensor& samples, const std::vector<std::string>& targets) {
  auto all = run_model_all(model, weights, samples);
  FeatureMapCapture cap;
  cap.batch = batch_of(samples);
  for (const auto& name : targets) {
    const auto& layer = model.at(name);
    const auto& preds = model.inputs_of(name);
    if (preds.size() > 1) throw GraphError("capture: layer '" + name + "' has several inputs");
    CaptureEntry e;
    e.input = preds.empty() ? samples : all.at(preds.front());
    e.reference = all.at(layer.post_ops.empty() ? name : layer.post_ops.back());
    for (const auto& op : layer.post_ops) {
      const auto& desc = model.at(op);
      e.post_ops.push_back(desc);
      e.post_weights.push_back(has_weights(desc.kind) ? weights.at(op) : DenseTensor{});
    }
    cap.entries.emplace(name, std::move(e));
  }
  return cap;
}

DenseTensor select_samples(const DenseTensor& inputs, std::int64_t count, std::uint64_t seed) {
  const auto b = batch_of(inputs);
  if (count >= b) return inputs;
  std::vector<std::int64_t> order(idx(b));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::int64_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::int64_t> pick(i, b - 1);
    std::swap(order[idx(i)], order[idx(pick(rng))]);
  }
  order.resize(idx(count));
  std::sort(order.begin(), order.end());
  const auto per = sample_elems(inputs);
  auto dims = inputs.shape().dims();
  dims[0] = count;
  DenseTensor out{TensorShape(dims)};
  for (std::int64_t i = 0; i < count; ++i)
    std::copy_n(inputs.data().begin() + order[idx(i)] * per, per, out.data().begin() + i * per);
  return out;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("cosine: vectors differ in length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double batch_similarity(const DenseTensor& output, const CaptureEntry& entry) {
  DenseTensor y = output;
  for (std::size_t i = 0; i < entry.post_ops.size(); ++i) {
    const auto& op = entry.post_ops[i];
    y = forward_layer(op, has_weights(op.kind) ? &entry.post_weights[i] : nullptr, y);
  }
  if (y.size() != entry.reference.size())
    throw ShapeError("similarity: output " + y.shape().to_string() + " vs reference " + entry.reference.shape().to_string());
  const auto b = batch_of(y);
  if (b == 0) return 0.0;
  const auto per = y.size() / b;
  double sum = 0.0;
  for (std::int64_t s = 0; s < b; ++s)
    sum += cosine(y.data().subspan(idx(s * per), idx(per)), entry.reference.data().subspan(idx(s * per), idx(per)));
  return sum / static_cast<double>(b);
}

double layer_similarity(const FactorizedLayer& f, const FeatureMapCapture& capture) {
  auto it = capture.entries.find(f.source_layer);
  if (it == capture.entries.end()) throw GraphError("no captured feature maps for layer '" + f.source_layer + "'");
  return batch_similarity(forward_factorized(f, it->second.input), it->second);
}

} // namespace lrf
