#pragma once

#include <cmath>
#include <cstdint>

#include "dcnn/errors.hpp"
#include "dcnn/tensor.hpp"

namespace dcnn {

struct AdamState {
  Tensor m;  // first moment
  Tensor v;  // second moment
  std::int64_t t = 0;

  bool initialized() const { return t > 0 || m.rank() > 0; }
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t batch_size = 256;
  double l2_lambda = 0.0;
  std::int64_t epochs = 50;
  std::uint64_t seed = 1;

  void validate() const {
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw ConfigError("beta1/beta2 must lie in [0,1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (l2_lambda < 0.0) throw ConfigError("l2_lambda must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
  }
};

/// One Adam update, in place. State tensors are created lazily on first use.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
                      const TrainConfig& cfg) {
  if (!param.same_shape(grad))
    throw ShapeError("adam_step: grad shape " + extents_to_string(grad.shape()) +
                     " != param shape " + extents_to_string(param.shape()));
  if (!state.initialized()) {
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
    state.t = 0;
  } else if (!state.m.same_shape(param) || !state.v.same_shape(param)) {
    throw ShapeError("adam_step: state shape does not match parameter");
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::int64_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

}  // namespace dcnn
