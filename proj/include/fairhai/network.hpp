/*
 * Copyright 2026 The FairHAI Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FAIRHAI_NETWORK_HPP_
#define FAIRHAI_NETWORK_HPP_

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fairhai/detail/common.hpp"
#include "fairhai/error.hpp"

namespace fairhai::nn {

enum class Activation : std::uint8_t { identity = 0, relu = 1, sigmoid = 2, softmax = 3 };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

/// Fully connected layer y = act(W x + b), W stored row-major (out x in).
struct DenseLayer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  Activation activation = Activation::identity;

  DenseLayer() = default;
  DenseLayer(std::size_t out, std::size_t in, Activation act)
      : rows(out), cols(in), weights(out * in, 0.0), bias(out, 0.0), activation(act) {}

  double& w(std::size_t r, std::size_t c) { return weights[r * cols + c]; }
  double w(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }

  bool operator==(const DenseLayer&) const = default;
};

struct NetParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().cols; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().rows; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const DenseLayer& l = layers[i];
      if (l.rows == 0 || l.cols == 0) throw ShapeError("layer " + std::to_string(i) + " has a zero dimension");
      if (l.weights.size() != l.rows * l.cols || l.bias.size() != l.rows) {
        throw ShapeError("layer " + std::to_string(i) + " storage does not match its dims");
      }
      if (i > 0 && layers[i - 1].rows != l.cols) {
        throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(l.cols) +
                         " inputs but layer " + std::to_string(i - 1) + " emits " +
                         std::to_string(layers[i - 1].rows));
      }
      if (l.activation == Activation::softmax && i + 1 != layers.size()) {
        throw ShapeError("softmax is only allowed on the terminal layer");
      }
    }
  }

  bool operator==(const NetParams&) const = default;
};

/// Multi-layer perceptron with `hidden` activation between layers and
/// `terminal` on the last one. Weights ~ U(-b, b) with b = sqrt(6 / fan_in)
/// ahead of relu and sqrt(3 / fan_in) otherwise; biases start at zero.
inline NetParams make_mlp(std::span<const std::size_t> dims, Activation hidden, Activation terminal,
                          std::uint64_t seed) {
  if (dims.size() < 2) throw ShapeError("an MLP needs at least input and output dims");
  NetParams net;
  Rng rng = detail::make_rng({seed, 0x1417});
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    DenseLayer layer(dims[i + 1], dims[i], last ? terminal : hidden);
    const double gain = layer.activation == Activation::relu ? 6.0 : 3.0;
    const double bound = std::sqrt(gain / static_cast<double>(dims[i]));
    for (double& w : layer.weights) w = (2.0 * detail::uniform01(rng) - 1.0) * bound;
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

inline NetParams make_mlp(std::initializer_list<std::size_t> dims, Activation hidden,
                          Activation terminal, std::uint64_t seed) {
  std::vector<std::size_t> d(dims);
  return make_mlp(std::span<const std::size_t>(d), hidden, terminal, seed);
}

/// Same topology, every weight and bias zero.
inline NetParams zeros_like(const NetParams& net) {
  NetParams z = net;
  for (auto& l : z.layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  return z;
}

namespace detail {

inline void apply_activation(Activation act, std::span<const double> pre, std::vector<double>& post) {
  post.resize(pre.size());
  switch (act) {
    case Activation::identity:
      std::copy(pre.begin(), pre.end(), post.begin());
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < pre.size(); ++i) post[i] = pre[i] > 0.0 ? pre[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < pre.size(); ++i) post[i] = fairhai::detail::sigmoid(pre[i]);
      break;
    case Activation::softmax:
      post = fairhai::detail::softmax(pre);
      break;
  }
}

inline void affine(const DenseLayer& l, std::span<const double> x, std::vector<double>& out) {
  out.assign(l.bias.begin(), l.bias.end());
  for (std::size_t r = 0; r < l.rows; ++r) {
    const double* row = l.weights.data() + r * l.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < l.cols; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
}

}  // namespace detail

struct LayerCache {
  std::vector<double> input;
  std::vector<double> pre;
  std::vector<double> post;
};

using ForwardCache = std::vector<LayerCache>;

struct ForwardResult {
  std::vector<double> output;
  ForwardCache cache;
};

inline ForwardResult forward(const NetParams& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(x.size()) + " entries, network expects " +
                     std::to_string(net.input_dim()));
  }
  ForwardResult res;
  res.cache.resize(net.layers.size());
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    LayerCache& c = res.cache[i];
    c.input = std::move(cur);
    detail::affine(net.layers[i], c.input, c.pre);
    detail::apply_activation(net.layers[i].activation, c.pre, c.post);
    cur = c.post;
  }
  res.output = std::move(cur);
  return res;
}

/// Forward pass without keeping intermediates.
inline std::vector<double> predict(const NetParams& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw ShapeError("predict: input has " + std::to_string(x.size()) + " entries, network expects " +
                     std::to_string(net.input_dim()));
  }
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> pre;
  for (const auto& layer : net.layers) {
    detail::affine(layer, cur, pre);
    detail::apply_activation(layer.activation, pre, cur);
  }
  return cur;
}

struct LayerGrad {
  std::vector<double> weights;
  std::vector<double> bias;

  bool operator==(const LayerGrad&) const = default;
};

/// Per-layer gradients, shape-matched to a NetParams.
struct GradientSet {
  std::vector<LayerGrad> layers;

  static GradientSet zeros(const NetParams& net) {
    GradientSet g;
    g.layers.reserve(net.layers.size());
    for (const auto& l : net.layers) {
      g.layers.push_back(LayerGrad{std::vector<double>(l.weights.size(), 0.0),
                                   std::vector<double>(l.bias.size(), 0.0)});
    }
    return g;
  }

  bool matches(const NetParams& net) const {
    if (layers.size() != net.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].weights.size() != net.layers[i].weights.size() ||
          layers[i].bias.size() != net.layers[i].bias.size()) {
        return false;
      }
    }
    return true;
  }

  bool all_zero() const {
    for (const auto& l : layers) {
      for (double v : l.weights) if (v != 0.0) return false;
      for (double v : l.bias) if (v != 0.0) return false;
    }
    return true;
  }

  GradientSet& operator+=(const GradientSet& o) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (std::size_t k = 0; k < layers[i].weights.size(); ++k) layers[i].weights[k] += o.layers[i].weights[k];
      for (std::size_t k = 0; k < layers[i].bias.size(); ++k) layers[i].bias[k] += o.layers[i].bias[k];
    }
    return *this;
  }

  bool operator==(const GradientSet&) const = default;
};

/// Adds the gradients of <upstream, output> into `acc` and returns the
/// gradient with respect to the network input.
inline std::vector<double> backward_into(const NetParams& net, const ForwardCache& cache,
                                         std::span<const double> upstream, GradientSet& acc) {
  if (cache.size() != net.layers.size()) throw ShapeError("backward: cache does not match network depth");
  if (!acc.matches(net)) throw ShapeError("backward: gradient set does not match network");
  if (upstream.size() != net.output_dim()) throw ShapeError("backward: upstream gradient has wrong size");
  std::vector<double> grad(upstream.begin(), upstream.end());
  std::vector<double> dpre;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const DenseLayer& l = net.layers[li];
    const LayerCache& c = cache[li];
    if (c.input.size() != l.cols || c.pre.size() != l.rows || c.post.size() != l.rows) {
      throw ShapeError("backward: cache entry " + std::to_string(li) + " does not match layer");
    }
    dpre.resize(l.rows);
    switch (l.activation) {
      case Activation::identity:
        dpre = grad;
        break;
      case Activation::relu:
        for (std::size_t r = 0; r < l.rows; ++r) dpre[r] = c.pre[r] > 0.0 ? grad[r] : 0.0;
        break;
      case Activation::sigmoid:
        for (std::size_t r = 0; r < l.rows; ++r) dpre[r] = grad[r] * c.post[r] * (1.0 - c.post[r]);
        break;
      case Activation::softmax: {
        double dot = 0.0;
        for (std::size_t r = 0; r < l.rows; ++r) dot += grad[r] * c.post[r];
        for (std::size_t r = 0; r < l.rows; ++r) dpre[r] = c.post[r] * (grad[r] - dot);
        break;
      }
    }
    LayerGrad& g = acc.layers[li];
    std::vector<double> dinput(l.cols, 0.0);
    for (std::size_t r = 0; r < l.rows; ++r) {
      const double d = dpre[r];
      g.bias[r] += d;
      if (d == 0.0) continue;
      double* grow = g.weights.data() + r * l.cols;
      const double* wrow = l.weights.data() + r * l.cols;
      for (std::size_t col = 0; col < l.cols; ++col) {
        grow[col] += d * c.input[col];
        dinput[col] += d * wrow[col];
      }
    }
    grad = std::move(dinput);
  }
  return grad;
}

struct BackwardResult {
  GradientSet grads;
  std::vector<double> input_grad;
};

inline BackwardResult backward(const NetParams& net, const ForwardCache& cache,
                               std::span<const double> upstream) {
  BackwardResult res{GradientSet::zeros(net), {}};
  res.input_grad = backward_into(net, cache, upstream, res.grads);
  return res;
}

// ---------------------------------------------------------------------------
// Optimizers

/// lr(epoch) = initial * decay^floor(epoch / period); period 0 disables decay.
struct LrSchedule {
  double initial = 1e-4;
  double decay = 1.0;
  std::size_t period = 0;

  double at(std::size_t epoch) const {
    if (period == 0 || decay == 1.0) return initial;
    const double k = static_cast<double>(epoch / period);
    // Dividing by (1/decay)^k keeps decimal schedules such as 1e-4 -> 1e-6 exact.
    return initial / std::pow(1.0 / decay, k);
  }
};

struct SgdMomentum {
  double momentum = 0.9;
  double weight_decay = 0.0;
};

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerConfig {
  std::variant<SgdMomentum, Adam> kind = Adam{};
  LrSchedule schedule;

  void validate() const {
    if (!(schedule.initial > 0.0)) throw ValidationError("learning rate must be positive");
    if (!(schedule.decay > 0.0)) throw ValidationError("learning-rate decay must be positive");
    if (const auto* s = std::get_if<SgdMomentum>(&kind)) {
      if (s->momentum < 0.0 || s->momentum >= 1.0) throw ValidationError("momentum must lie in [0, 1)");
      if (s->weight_decay < 0.0) throw ValidationError("weight decay must be non-negative");
    } else {
      const auto& a = std::get<Adam>(kind);
      if (a.beta1 < 0.0 || a.beta1 >= 1.0 || a.beta2 < 0.0 || a.beta2 >= 1.0 || !(a.eps > 0.0)) {
        throw ValidationError("invalid Adam hyper-parameters");
      }
    }
  }
};

/// Moment buffers for one network.
class OptimizerState {
 public:
  OptimizerState(OptimizerConfig cfg, const NetParams& net)
      : cfg_(std::move(cfg)), first_(GradientSet::zeros(net)), second_(GradientSet::zeros(net)) {
    cfg_.validate();
  }

  const OptimizerConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return steps_; }

  /// In-place update of `params`.
  void apply(NetParams& params, const GradientSet& grads, std::size_t epoch) {
    if (!grads.matches(params) || !first_.matches(params)) {
      throw ShapeError("optimizer_step: gradient/parameter shapes do not match");
    }
    ++steps_;
    const double lr = cfg_.schedule.at(epoch);
    if (const auto* sgd = std::get_if<SgdMomentum>(&cfg_.kind)) {
      for (std::size_t li = 0; li < params.layers.size(); ++li) {
        sgd_update(params.layers[li].weights, grads.layers[li].weights, first_.layers[li].weights, *sgd, lr);
        sgd_update(params.layers[li].bias, grads.layers[li].bias, first_.layers[li].bias, *sgd, lr);
      }
    } else {
      const Adam& adam = std::get<Adam>(cfg_.kind);
      const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(steps_));
      const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(steps_));
      for (std::size_t li = 0; li < params.layers.size(); ++li) {
        adam_update(params.layers[li].weights, grads.layers[li].weights, first_.layers[li].weights,
                    second_.layers[li].weights, adam, lr, c1, c2);
        adam_update(params.layers[li].bias, grads.layers[li].bias, first_.layers[li].bias,
                    second_.layers[li].bias, adam, lr, c1, c2);
      }
    }
  }

 private:
  static void sgd_update(std::vector<double>& w, const std::vector<double>& g, std::vector<double>& v,
                         const SgdMomentum& cfg, double lr) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * w[i];
      w[i] -= lr * v[i];
    }
  }

  static void adam_update(std::vector<double>& w, const std::vector<double>& g, std::vector<double>& m,
                          std::vector<double>& v, const Adam& cfg, double lr, double c1, double c2) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }

  OptimizerConfig cfg_;
  GradientSet first_;
  GradientSet second_;
  std::uint64_t steps_ = 0;
};

inline NetParams optimizer_step(OptimizerState& opt, const NetParams& params, const GradientSet& grads,
                                std::size_t epoch) {
  NetParams next = params;
  opt.apply(next, grads, epoch);
  return next;
}

// ---------------------------------------------------------------------------
// Checkpoints: "FHAI1", u32 layer count, then per layer u32 rows, u32 cols,
// u8 activation, rows*cols f64 weights (row-major), rows f64 biases. All
// integers and doubles little-endian.

inline constexpr std::array<char, 5> kCheckpointMagic{'F', 'H', 'A', 'I', '1'};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw SchemaError(std::string("checkpoint truncated while reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace detail

inline void save_checkpoint(const NetParams& net, std::ostream& out) {
  net.validate();
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.rows));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.cols));
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(l.activation));
    for (double w : l.weights) detail::put_le<double>(out, w);
    for (double b : l.bias) detail::put_le<double>(out, b);
  }
}

inline NetParams load_checkpoint(std::istream& in) {
  std::array<char, 5> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw SchemaError("checkpoint: bad magic, expected FHAI1");
  }
  const auto count = detail::get_le<std::uint32_t>(in, "layer count");
  if (count == 0 || count > 1024) throw SchemaError("checkpoint: implausible layer count");
  NetParams net;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto rows = detail::get_le<std::uint32_t>(in, "rows");
    const auto cols = detail::get_le<std::uint32_t>(in, "cols");
    const auto tag = detail::get_le<std::uint8_t>(in, "activation");
    if (tag > static_cast<std::uint8_t>(Activation::softmax)) {
      throw SchemaError("checkpoint: unknown activation tag " + std::to_string(tag));
    }
    if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) throw SchemaError("checkpoint: layer too large");
    DenseLayer l(rows, cols, static_cast<Activation>(tag));
    for (double& w : l.weights) w = detail::get_le<double>(in, "weights");
    for (double& b : l.bias) b = detail::get_le<double>(in, "biases");
    net.layers.push_back(std::move(l));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw SchemaError("checkpoint: trailing bytes");
  try {
    net.validate();
  } catch (const ShapeError& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
  return net;
}

inline void save_checkpoint(const NetParams& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  save_checkpoint(net, out);
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline NetParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(path + ": checkpoint not found");
  try {
    return load_checkpoint(in);
  } catch (const SchemaError& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

}  // namespace fairhai::nn

#endif  // FAIRHAI_NETWORK_HPP_
