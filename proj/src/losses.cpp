#include "losses.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace evuav {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

BoxExtent stc_box(const STCConfig& cfg) { return {{cfg.k, cfg.k, cfg.tau}, 1}; }

int center_tap(const BoxExtent& box) {
  const int cx = (box.k[0] - 1) / 2, cy = (box.k[1] - 1) / 2, ct = (box.k[2] - 1) / 2;
  return (cx * box.k[1] + cy) * box.k[2] + ct;
}


}  // namespace

void STCConfig::check() const {
  require(k >= 1 && k % 2 == 1, "STCConfig: k must be odd and >= 1");
  require(tau >= 1, "STCConfig: tau must be >= 1");
  require(gamma >= 0.0, "STCConfig: gamma must be >= 0");
}

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

double bce_loss(double p, std::uint8_t y) {
  const double q = clamp_prob(p);
  return y ? -std::log(q) : -std::log(1.0 - q);
}

LossResult bce_loss_mean(std::span<const double> conf, std::span<const std::uint8_t> targets) {
  require(conf.size() == targets.size(), "bce_loss_mean: conf and targets differ in length");
  LossResult r;
  r.grad.assign(conf.size(), 0.0);
  if (conf.empty()) return r;
  const double inv_n = 1.0 / static_cast<double>(conf.size());
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const double q = clamp_prob(conf[i]);
    r.value += bce_loss(conf[i], targets[i]);
    r.grad[i] = (targets[i] ? -1.0 / q : 1.0 / (1.0 - q)) * inv_n;
  }
  r.value *= inv_n;
  return r;
}

std::vector<double> stc_weights(const SparseGrid& grid, std::span<const double> conf, const STCConfig& cfg) {
  cfg.check();
  require(conf.size() == grid.size(), "stc_weights: one confidence per active voxel expected");
  const BoxExtent box = stc_box(cfg);
  const NeighborTable& nb = grid.active->neighbors(box);
  const int taps = box.taps();
  const int center = center_tap(box);
  std::vector<double> w(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double sum = 0.0;
    for (int t = 0; t < taps; ++t) {
      const auto j = nb.at(i, t);
      if (j < 0 || (t == center && !cfg.include_center)) continue;
      sum += conf[j];
    }
    w[i] = sigmoid(sum);
  }
  return w;
}

double stc_loss(double p, std::uint8_t y, double w, double gamma) {
  const double q = clamp_prob(p);
  return y ? -std::pow(w, gamma) * std::log(q) : -std::pow(1.0 - w, gamma) * std::log(1.0 - q);
}

LossResult stc_loss_mean(const SparseGrid& grid, std::span<const double> conf, std::span<const std::uint8_t> targets,
                         const STCConfig& cfg) {
  require(conf.size() == targets.size() && conf.size() == grid.size(),
          "stc_loss_mean: conf, targets and grid must align");
  const std::vector<double> w = stc_weights(grid, conf, cfg);
  LossResult r;
  r.grad.assign(conf.size(), 0.0);
  if (conf.empty()) return r;
  const double inv_n = 1.0 / static_cast<double>(conf.size());
  const double g = cfg.gamma;
  // dL/dw per voxel, only needed without stop-gradient.
  std::vector<double> d_w(conf.size(), 0.0);
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const double q = clamp_prob(conf[i]);
    r.value += stc_loss(conf[i], targets[i], w[i], g);
    if (targets[i]) {
      r.grad[i] = -std::pow(w[i], g) / q * inv_n;
      if (g != 0.0) d_w[i] = -g * std::pow(w[i], g - 1.0) * std::log(q) * inv_n;
    } else {
      r.grad[i] = std::pow(1.0 - w[i], g) / (1.0 - q) * inv_n;
      if (g != 0.0) d_w[i] = g * std::pow(1.0 - w[i], g - 1.0) * std::log(1.0 - q) * inv_n;
    }
  }
  r.value *= inv_n;

  if (!cfg.detach_weights) {
    // w_i = sigmoid(sum_j p_j) over i's box: scatter dL/dw_i to every j in it.
    const BoxExtent box = stc_box(cfg);
    const NeighborTable& nb = grid.active->neighbors(box);
    const int taps = box.taps();
    const int center = center_tap(box);
    for (std::size_t i = 0; i < conf.size(); ++i) {
      const double ds = d_w[i] * w[i] * (1.0 - w[i]);
      for (int t = 0; t < taps; ++t) {
        const auto j = nb.at(i, t);
        if (j < 0 || (t == center && !cfg.include_center)) continue;
        r.grad[j] += ds;
      }
    }
  }
  return r;
}

}  // namespace evuav
