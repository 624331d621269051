#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "voxel_grid.hpp"

namespace evuav {

inline constexpr double kProbEpsilon = 1e-7;

struct STCConfig {
  int k = 3;          // spatial box extent (x and y), odd
  int tau = 5;        // temporal box extent
  double gamma = 2.0;
  bool include_center = false;  // count the voxel itself as its own support
  bool detach_weights = true;   // treat w_stc as a constant when differentiating

  void check() const;
};

double clamp_prob(double p);

// -log p for y = 1, -log(1 - p) for y = 0, on the clamped probability.
double bce_loss(double p, std::uint8_t y);

// Mean loss over voxels plus dL/dp per voxel. The gradient is evaluated at the
// clamped probability and is not zeroed where the clamp saturates.
struct LossResult {
  double value = 0.0;
  std::vector<double> grad;
};

LossResult bce_loss_mean(std::span<const double> conf, std::span<const std::uint8_t> targets);

// w = sigmoid(sum of confidences of active voxels in the k x k x tau box around
// each voxel). Aligned with grid rows.
std::vector<double> stc_weights(const SparseGrid& grid, std::span<const double> conf, const STCConfig& cfg);

// Per-voxel STC term: -w^gamma log p (y = 1), -(1 - w)^gamma log(1 - p) (y = 0).
double stc_loss(double p, std::uint8_t y, double w, double gamma);

// Mean STC loss over the grid's active voxels. With detach_weights the
// gradient flows through p only; otherwise it also flows through each
// neighbor's contribution to w.
LossResult stc_loss_mean(const SparseGrid& grid, std::span<const double> conf, std::span<const std::uint8_t> targets,
                         const STCConfig& cfg);

}  // namespace evuav
