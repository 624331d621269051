#include "optimizer.hpp"

#include <cmath>

#include "error.hpp"

namespace evuav {

void Adam::step(std::span<LayerParams> params, double lr) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  require(m_.size() == params.size(), "Adam::step: parameter list changed between steps");
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    LayerParams& p = params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grads[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      p.values[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      if (!std::isfinite(p.values[i])) {
        fail(ErrorKind::Runtime, "Adam: parameter " + p.name + "[" + std::to_string(i) + "] became non-finite");
      }
    }
    p.zero_grad();
  }
}

double linear_lr(double lr_start, double lr_end, int epoch, int epochs) {
  if (epochs <= 1) return lr_start;
  return lr_start + (lr_end - lr_start) * static_cast<double>(epoch) / static_cast<double>(epochs - 1);
}

}  // namespace evuav
