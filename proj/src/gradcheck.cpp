#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include "error.hpp"

namespace evuav {

SparseGrid random_grid(GridDims dims, std::size_t n, int channels, std::uint64_t seed, VoxelSize voxel_size) {
  require(n <= static_cast<std::size_t>(dims.volume()), "random_grid: more voxels than the grid holds");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> cell(0, dims.volume() - 1);
  std::set<std::int64_t> picked;
  while (picked.size() < n) picked.insert(cell(rng));
  std::vector<VoxelKey> keys;
  for (const auto c : picked) {
    keys.push_back({static_cast<std::int32_t>(c % dims.nx), static_cast<std::int32_t>((c / dims.nx) % dims.ny),
                    static_cast<std::int32_t>(c / (dims.nx * dims.ny))});
  }
  // linear index order is (it, iy, ix), which is what the set iterated in
  SparseGrid g;
  g.voxel_size = voxel_size;
  g.active = std::make_shared<const ActiveSet>(dims, std::move(keys));
  g.features = Features(n, channels);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : g.features.data) v = u(rng);
  return g;
}

double relative_error(double analytic, double numeric, double floor) {
  const double den = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / den;
}

SparseGrid gradcheck_input(std::size_t voxels_per_cluster, std::uint64_t seed, VoxelSize voxel_size) {
  require(voxels_per_cluster <= 64, "gradcheck_input: a 4x4x4 blob holds at most 64 voxels");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int32_t> c(0, 3);
  std::set<std::tuple<std::int32_t, std::int32_t, std::int32_t>> cells;  // (t, y, x)
  for (const std::int32_t ox : {0, 70, 140}) {
    const std::size_t want = cells.size() + voxels_per_cluster;
    while (cells.size() < want) cells.insert({c(rng), c(rng), ox + c(rng)});
  }
  std::vector<VoxelKey> keys;
  for (const auto& [t, y, x] : cells) keys.push_back({x, y, t});
  SparseGrid g;
  g.voxel_size = voxel_size;
  g.active = std::make_shared<const ActiveSet>(GridDims{160, 8, 8}, std::move(keys));
  g.features = Features(g.active->size(), 2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : g.features.data) v = u(rng);
  return g;
}

std::vector<LayerCheck> gradcheck_model(const ModelConfig& model, const GradcheckConfig& cfg) {
  require(cfg.step > 0.0 && cfg.floor > 0.0, "gradcheck: step and floor must be positive");
  SegNet net(model);
  net.init(cfg.seed);
  std::mt19937_64 rng(cfg.seed ^ 0x9badc0deull);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& p : net.params()) {
    const bool bias = p.name.ends_with("bias");
    for (double& v : p.values) v = bias ? 0.1 * u(rng) : cfg.gain * v;
  }
  for (auto* name : {"head.weight", "head.bias"}) {
    for (double& v : net.param(name).values) v = u(rng);
  }
  const SparseGrid input = gradcheck_input(cfg.voxels_per_cluster, cfg.seed + 1, model.voxel_size);
  std::vector<double> r(input.size());
  for (double& v : r) v = u(rng);

  SegNetPass pass;
  net.forward(input, &pass);
  const std::uint64_t base_sig = pass.decision_signature();
  net.zero_grad();
  net.backward(pass, r);

  // Loss at the current parameters; flags a change of relu / max-pool branch.
  bool kinked = false;
  auto loss = [&] {
    SegNetPass p;
    const auto conf = net.forward(input, &p);
    kinked |= p.decision_signature() != base_sig;
    double s = 0.0;
    for (std::size_t i = 0; i < conf.size(); ++i) s += r[i] * conf[i];
    return s;
  };

  std::vector<LayerCheck> out;
  const double h = cfg.step;
  for (auto& p : net.params()) {
    LayerCheck lc;
    lc.name = p.name;
    const std::vector<double> grads = p.grads;
    // entries with a nonzero analytic gradient first; many dilated taps see
    // no neighbor on the small input and are zero on both sides
    std::vector<std::size_t> live, dead;
    for (std::size_t i = 0; i < p.size(); ++i) (grads[i] != 0.0 ? live : dead).push_back(i);
    std::shuffle(live.begin(), live.end(), rng);
    std::shuffle(dead.begin(), dead.end(), rng);
    live.insert(live.end(), dead.begin(), dead.end());
    const int want = std::min<int>(cfg.samples_per_layer, static_cast<int>(p.size()));
    for (std::size_t i : live) {
      if (lc.checked >= want) break;
      const double keep = p.values[i];
      kinked = false;
      double f[4];
      const double offs[4] = {h, -h, 2 * h, -2 * h};
      for (int k = 0; k < 4; ++k) {
        p.values[i] = keep + offs[k];
        f[k] = loss();
      }
      p.values[i] = keep;
      if (kinked) {
        ++lc.skipped;
        continue;
      }
      const double numeric = (8.0 * (f[0] - f[1]) - (f[2] - f[3])) / (12.0 * h);
      lc.max_rel_error = std::max(lc.max_rel_error, relative_error(grads[i], numeric, cfg.floor));
      ++lc.checked;
    }
    out.push_back(lc);
  }
  net.zero_grad();
  return out;
}

}  // namespace evuav
