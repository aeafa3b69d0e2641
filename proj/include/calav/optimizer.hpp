#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "calav/model.hpp"

namespace calav {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Single-array Adam update with bias correction; `t` is the 1-based step.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 std::uint64_t t, const AdamHyper& h);

/// Moments for every parameter block and one step counter per group.
struct AdamState {
  Model m;
  Model v;
  std::array<std::uint64_t, kGroupCount> steps{};
};

AdamState init_adam(const Model& model);

/// Updates every block of `group` from `grads` and advances its counter.
void optimizer_step(Model& model, Model& grads, AdamState& state, ParamGroup group, const AdamHyper& h);

}  // namespace calav
