#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "dcnn/adam.hpp"
#include "dcnn/errors.hpp"
#include "dcnn/ops.hpp"
#include "dcnn/rng.hpp"
#include "dcnn/tensor.hpp"

namespace dcnn {

enum class LayerKind { dilated_conv, strided_conv, dense };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  ConvParams conv;            // conv kinds only
  std::int64_t units = 0;     // dense only
  bool relu = false;

  bool operator==(const LayerSpec&) const = default;
};

inline LayerSpec dilated_layer(std::int64_t filter_rows, std::int64_t filter_cols,
                               std::int64_t filters, std::int64_t dilation_rows,
                               std::int64_t dilation_cols) {
  LayerSpec spec;
  spec.kind = LayerKind::dilated_conv;
  spec.conv.filter_rows = filter_rows;
  spec.conv.filter_cols = filter_cols;
  spec.conv.out_channels = filters;
  spec.conv.dilation_rows = dilation_rows;
  spec.conv.dilation_cols = dilation_cols;
  spec.conv.stride_rows = 1;
  spec.conv.stride_cols = 1;
  spec.conv.padding = Padding::same;
  spec.relu = true;
  return spec;
}

inline LayerSpec strided_layer(std::int64_t filter_cols, std::int64_t filters,
                               std::int64_t stride_cols) {
  LayerSpec spec;
  spec.kind = LayerKind::strided_conv;
  spec.conv.filter_rows = 1;
  spec.conv.filter_cols = filter_cols;
  spec.conv.out_channels = filters;
  spec.conv.stride_rows = 1;
  spec.conv.stride_cols = stride_cols;
  spec.conv.padding = Padding::valid;
  spec.relu = true;
  return spec;
}

inline LayerSpec dense_layer(std::int64_t units, bool relu) {
  LayerSpec spec;
  spec.kind = LayerKind::dense;
  spec.units = units;
  spec.relu = relu;
  return spec;
}

struct NetworkConfig {
  Shape4 input_shape;  // batch extent is a placeholder
  std::vector<LayerSpec> layers;
  std::int64_t num_classes = 0;

  bool operator==(const NetworkConfig&) const = default;
};

inline bool is_conv(const LayerSpec& spec) { return spec.kind != LayerKind::dense; }

inline void validate_network(const NetworkConfig& cfg) {
  if (cfg.layers.empty()) throw ConfigError("network has no layers");
  if (cfg.num_classes < 1) throw ConfigError("num_classes must be >= 1");
  const LayerSpec& last = cfg.layers.back();
  if (last.kind != LayerKind::dense || last.units != cfg.num_classes || last.relu)
    throw ConfigError("final layer must be a dense layer with units == num_classes and no activation");
  bool seen_dense = false;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& spec = cfg.layers[i];
    if (is_conv(spec)) {
      if (seen_dense)
        throw ConfigError("layer " + std::to_string(i) + ": convolution after a dense layer");
      if (spec.kind == LayerKind::dilated_conv &&
          (spec.conv.stride_rows != 1 || spec.conv.stride_cols != 1))
        throw ConfigError("layer " + std::to_string(i) + ": dilated layers use stride (1,1)");
      if (spec.kind == LayerKind::strided_conv &&
          (spec.conv.filter_rows != 1 || spec.conv.dilation_rows != 1 ||
           spec.conv.dilation_cols != 1))
        throw ConfigError("layer " + std::to_string(i) +
                          ": strided layers use filter_rows == 1 and dilation (1,1)");
    } else {
      seen_dense = true;
      if (spec.units < 1) throw ConfigError("layer " + std::to_string(i) + ": units must be >= 1");
    }
  }
}

/// The three stacks published for WISDM; names: v1_individual, v1_split, v2.
inline NetworkConfig preset(const std::string& name) {
  NetworkConfig cfg;
  cfg.num_classes = 6;
  if (name == "v1_individual") {
    cfg.input_shape = Shape4{1, 1, 3, 200};
    cfg.layers = {dilated_layer(3, 20, 32, 1, 2), strided_layer(4, 32, 4),
                  dilated_layer(3, 3, 32, 1, 2),  strided_layer(4, 32, 4),
                  dense_layer(1024, true),        dense_layer(6, false)};
  } else if (name == "v1_split") {
    cfg.input_shape = Shape4{1, 1, 3, 100};
    cfg.layers = {dilated_layer(3, 10, 32, 1, 2), strided_layer(4, 32, 4),
                  dilated_layer(3, 3, 32, 1, 2),  strided_layer(2, 32, 2),
                  dense_layer(1024, true),        dense_layer(6, false)};
  } else if (name == "v2") {
    cfg.input_shape = Shape4{1, 1, 3, 200};
    cfg.layers = {dilated_layer(3, 10, 32, 1, 2), strided_layer(2, 32, 2),
                  dilated_layer(3, 3, 32, 1, 2),  strided_layer(2, 32, 2),
                  dilated_layer(3, 3, 64, 1, 1),  strided_layer(2, 64, 2),
                  dense_layer(512, true),         dense_layer(6, false)};
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected v1_individual, v1_split or v2)");
  }
  return cfg;
}

struct ShapeTable {
  std::vector<Extents> per_layer;  // output shape of each layer, batch extent 1
  std::int64_t flatten = 0;        // dense input width after the conv stack
};

/// Propagates shapes through the stack; throws naming the first infeasible layer.
inline ShapeTable shape_check(const NetworkConfig& cfg) {
  validate_network(cfg);
  ShapeTable table;
  Shape4 cur = cfg.input_shape;
  cur.batch = 1;
  std::int64_t width = 0;  // dense stage width once flattened
  bool flat = false;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& spec = cfg.layers[i];
    try {
      if (is_conv(spec)) {
        const ConvParams& p = spec.conv;
        auto row = detail::plan_axis(cur.rows, p.filter_rows, p.dilation_rows, p.stride_rows,
                                     p.padding, "row");
        auto col = detail::plan_axis(cur.cols, p.filter_cols, p.dilation_cols, p.stride_cols,
                                     p.padding, "col");
        cur = Shape4{1, p.out_channels, row.out, col.out};
        table.per_layer.push_back(cur.extents());
      } else {
        if (!flat) {
          width = cur.channels * cur.rows * cur.cols;
          table.flatten = width;
          flat = true;
        }
        if (spec.units < 1) throw ShapeError("units must be >= 1");
        width = spec.units;
        table.per_layer.push_back({1, width});
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return table;
}

struct ModelParams {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  std::vector<AdamState> opt_weights;
  std::vector<AdamState> opt_biases;
};

/// He-style uniform init, U(-a, a) with a = sqrt(6 / fan_in); biases zero.
inline ModelParams init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  validate_network(cfg);
  const ShapeTable table = shape_check(cfg);
  ModelParams params;
  Rng rng = make_stream(seed, 0x1a17);
  Shape4 cur = cfg.input_shape;
  std::int64_t width = 0;
  bool flat = false;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& spec = cfg.layers[i];
    Tensor w, b;
    std::int64_t fan_in = 0;
    if (is_conv(spec)) {
      const ConvParams& p = spec.conv;
      fan_in = cur.channels * p.filter_rows * p.filter_cols;
      w = Tensor({p.out_channels, cur.channels, p.filter_rows, p.filter_cols});
      b = Tensor({p.out_channels});
      cur.channels = p.out_channels;
      cur.rows = table.per_layer[i][2];
      cur.cols = table.per_layer[i][3];
    } else {
      if (!flat) {
        width = cur.channels * cur.rows * cur.cols;
        flat = true;
      }
      fan_in = width;
      w = Tensor({width, spec.units});
      b = Tensor({spec.units});
      width = spec.units;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::int64_t j = 0; j < w.size(); ++j) w[j] = rng.next_double(-bound, bound);
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  params.opt_weights.resize(params.weights.size());
  params.opt_biases.resize(params.biases.size());
  return params;
}

inline std::int64_t param_count(const ModelParams& params) {
  std::int64_t n = 0;
  for (const Tensor& w : params.weights) n += w.size();
  for (const Tensor& b : params.biases) n += b.size();
  return n;
}

inline Tensor reshape(const Tensor& t, Extents shape) {
  Tensor out(std::move(shape));
  if (out.size() != t.size())
    throw ShapeError("reshape: size mismatch " + extents_to_string(t.shape()) + " -> " +
                     extents_to_string(out.shape()));
  std::copy(t.data(), t.data() + t.size(), out.data());
  return out;
}

struct ForwardCache {
  std::vector<Tensor> inputs;   // input tensor fed to each layer
  std::vector<Tensor> pre_act;  // layer output before activation
  bool valid = false;
};

/// Runs the stack on a [B,1,M,K] batch and returns [B,num_classes] logits.
/// Pass a cache to keep the intermediates backward() needs.
inline Tensor forward(const ModelParams& params, const NetworkConfig& cfg, const Tensor& batch,
                      ForwardCache* cache = nullptr) {
  validate_network(cfg);
  if (batch.rank() != 4 || batch.extent(1) != cfg.input_shape.channels ||
      batch.extent(2) != cfg.input_shape.rows || batch.extent(3) != cfg.input_shape.cols)
    throw ShapeError("forward: batch shape " + extents_to_string(batch.shape()) +
                     " does not match network input " +
                     extents_to_string(cfg.input_shape.extents()));
  if (params.weights.size() != cfg.layers.size())
    throw ShapeError("forward: parameter count does not match layer count");

  if (cache) {
    cache->inputs.clear();
    cache->pre_act.clear();
    cache->valid = false;
  }
  const std::int64_t batch_n = batch.extent(0);
  Tensor x = batch;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& spec = cfg.layers[i];
    if (!is_conv(spec) && x.rank() == 4)
      x = reshape(x, {batch_n, x.size() / batch_n});  // flatten channel-major
    Tensor z = is_conv(spec) ? conv2d_forward(x, params.weights[i], params.biases[i], spec.conv)
                             : dense_forward(x, params.weights[i], params.biases[i]);
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->pre_act.push_back(z);
    }
    x = spec.relu ? relu_forward(z) : std::move(z);
  }
  if (cache) cache->valid = true;
  return x;
}

struct ModelGradients {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
};

/// Reverse pass over the cached forward. l2_lambda adds 2*lambda*w to every
/// weight gradient (never to biases).
inline ModelGradients backward(const ModelParams& params, const NetworkConfig& cfg,
                               const ForwardCache& cache, const Tensor& d_logits,
                               double l2_lambda = 0.0) {
  if (!cache.valid || cache.inputs.size() != cfg.layers.size())
    throw StateError("backward: forward cache is missing or stale");
  ModelGradients grads;
  grads.weights.resize(cfg.layers.size());
  grads.biases.resize(cfg.layers.size());
  Tensor d = d_logits;
  for (std::size_t idx = cfg.layers.size(); idx-- > 0;) {
    const LayerSpec& spec = cfg.layers[idx];
    if (d.rank() != cache.pre_act[idx].rank())
      d = reshape(d, cache.pre_act[idx].shape());  // re-fold the flatten boundary
    if (spec.relu) d = relu_backward(cache.pre_act[idx], d);
    if (is_conv(spec)) {
      OpGradients g = conv2d_backward(cache.inputs[idx], params.weights[idx], spec.conv, d);
      grads.weights[idx] = std::move(g.d_weights);
      grads.biases[idx] = std::move(g.d_bias);
      d = std::move(g.d_input);
    } else {
      OpGradients g = dense_backward(cache.inputs[idx], params.weights[idx], d);
      grads.weights[idx] = std::move(g.d_weights);
      grads.biases[idx] = std::move(g.d_bias);
      d = std::move(g.d_input);
    }
  }
  if (l2_lambda > 0.0) {
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
      const Tensor& w = params.weights[i];
      Tensor& gw = grads.weights[i];
      for (std::int64_t j = 0; j < w.size(); ++j) gw[j] += 2.0 * l2_lambda * w[j];
    }
  }
  return grads;
}

// --- canonical config text, used for checkpoints and their digest ---

inline std::string config_text(const NetworkConfig& cfg) {
  std::ostringstream os;
  os << "dcnn-network 1\n";
  os << "input " << cfg.input_shape.channels << ' ' << cfg.input_shape.rows << ' '
     << cfg.input_shape.cols << '\n';
  os << "classes " << cfg.num_classes << '\n';
  for (const LayerSpec& spec : cfg.layers) {
    switch (spec.kind) {
      case LayerKind::dilated_conv:
      case LayerKind::strided_conv: {
        const ConvParams& p = spec.conv;
        os << (spec.kind == LayerKind::dilated_conv ? "dl" : "sl") << ' ' << p.filter_rows << ' '
           << p.filter_cols << ' ' << p.out_channels << ' ' << p.dilation_rows << ' '
           << p.dilation_cols << ' ' << p.stride_rows << ' ' << p.stride_cols << ' '
           << (p.padding == Padding::same ? "same" : "valid") << ' ' << (spec.relu ? 1 : 0)
           << '\n';
        break;
      }
      case LayerKind::dense:
        os << "fl " << spec.units << ' ' << (spec.relu ? 1 : 0) << '\n';
        break;
    }
  }
  return os.str();
}

inline NetworkConfig parse_config_text(const std::string& text) {
  std::istringstream is(text);
  std::string word;
  std::int64_t version = 0;
  if (!(is >> word >> version) || word != "dcnn-network" || version != 1)
    throw FormatError("bad network description header");
  NetworkConfig cfg;
  cfg.input_shape.batch = 1;
  while (is >> word) {
    if (word == "input") {
      if (!(is >> cfg.input_shape.channels >> cfg.input_shape.rows >> cfg.input_shape.cols))
        throw FormatError("bad input line in network description");
    } else if (word == "classes") {
      if (!(is >> cfg.num_classes)) throw FormatError("bad classes line");
    } else if (word == "dl" || word == "sl") {
      LayerSpec spec;
      spec.kind = word == "dl" ? LayerKind::dilated_conv : LayerKind::strided_conv;
      ConvParams& p = spec.conv;
      std::string pad;
      int relu = 0;
      if (!(is >> p.filter_rows >> p.filter_cols >> p.out_channels >> p.dilation_rows >>
            p.dilation_cols >> p.stride_rows >> p.stride_cols >> pad >> relu))
        throw FormatError("bad conv layer line");
      if (pad != "same" && pad != "valid") throw FormatError("bad padding '" + pad + "'");
      p.padding = pad == "same" ? Padding::same : Padding::valid;
      spec.relu = relu != 0;
      cfg.layers.push_back(spec);
    } else if (word == "fl") {
      LayerSpec spec;
      spec.kind = LayerKind::dense;
      int relu = 0;
      if (!(is >> spec.units >> relu)) throw FormatError("bad dense layer line");
      spec.relu = relu != 0;
      cfg.layers.push_back(spec);
    } else {
      throw FormatError("unknown token '" + word + "' in network description");
    }
  }
  validate_network(cfg);
  return cfg;
}

// FNV-1a, 64-bit
inline std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t config_digest(const NetworkConfig& cfg) { return fnv1a64(config_text(cfg)); }

}  // namespace dcnn
