#include "calav/optimizer.hpp"

#include <cmath>

namespace calav {

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 std::uint64_t t, const AdamHyper& h) {
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * grads[k];
    v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * grads[k] * grads[k];
    params[k] -= h.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + h.eps);
  }
}

AdamState init_adam(const Model& model) { return {zeros_like(model), zeros_like(model), {}}; }

void optimizer_step(Model& model, Model& grads, AdamState& state, ParamGroup group, const AdamHyper& h) {
  const std::uint64_t t = ++state.steps[static_cast<int>(group)];
  auto p = parameters(model), g = parameters(grads), m = parameters(state.m), v = parameters(state.v);
  for (std::size_t b = 0; b < p.size(); ++b) {
    if (p[b].group != group) continue;
    const auto n = static_cast<std::size_t>(p[b].size());
    adam_update({p[b].data, n}, {g[b].data, n}, {m[b].data, n}, {v[b].data, n}, t, h);
  }
}

}  // namespace calav
