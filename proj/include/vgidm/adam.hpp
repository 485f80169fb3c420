#pragma once

#include <cmath>
#include <map>
#include <string>

#include "vgidm/autodiff.hpp"

namespace vgidm {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter moments plus the shared step counter.
struct AdamState {
  AdamConfig config;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

/// One bias-corrected Adam update on raw value/gradient tensors.
inline void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, const AdamConfig& c, long step) {
  if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v)) {
    throw ShapeError("adam: param " + param.describe() + ", grad " + grad.describe() + ", m " + m.describe() +
                     ", v " + v.describe() + " disagree");
  }
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

/// Applies one Adam step to every parameter using its accumulated gradient.
inline void adam_step(ParamSet& params, AdamState& state) {
  ++state.step;
  for (auto& [name, p] : params) {
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      mit = state.m.emplace(name, Tensor::zeros_like(p.value)).first;
      state.v.emplace(name, Tensor::zeros_like(p.value));
    }
    adam_update(p.value, p.grad, mit->second, state.v.at(name), state.config, state.step);
  }
}

}  // namespace vgidm
