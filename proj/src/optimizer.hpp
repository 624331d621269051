#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sparse_ops.hpp"

namespace evuav {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moment buffers are created lazily on the first step and
// keyed by position in the parameter list.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One update with the gradients currently in `params`, which are zeroed
  // afterwards. Throws a runtime error if any value becomes non-finite.
  void step(std::span<LayerParams> params, double lr);

  std::int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Linear interpolation from lr_start at epoch 0 to lr_end at epoch epochs-1.
double linear_lr(double lr_start, double lr_end, int epoch, int epochs);

}  // namespace evuav
