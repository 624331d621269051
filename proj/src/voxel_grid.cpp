#include "voxel_grid.hpp"

#include <algorithm>

#include "error.hpp"

namespace evuav {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

namespace {
inline std::uint64_t mix(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  return x;
}
}  // namespace

ActiveSet::ActiveSet(GridDims dims, std::vector<VoxelKey> keys) : dims_(dims), keys_(std::move(keys)) {
  std::size_t cap = 16;
  while (cap < keys_.size() * 2) cap <<= 1;
  mask_ = cap - 1;
  slot_keys_.assign(cap, kEmpty);
  slot_rows_.assign(cap, -1);
  std::uint64_t prev = 0;
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    require(in_bounds(keys_[i]), "ActiveSet: key outside grid dims");
    const auto lin = linear(keys_[i]);
    require(i == 0 || lin > prev, "ActiveSet: keys must be unique and sorted by (it, iy, ix)");
    prev = lin;
    auto h = mix(lin) & mask_;
    while (slot_keys_[h] != kEmpty) h = (h + 1) & mask_;
    slot_keys_[h] = lin;
    slot_rows_[h] = static_cast<std::int32_t>(i);
  }
}

std::int32_t ActiveSet::find(const VoxelKey& k) const {
  if (!in_bounds(k)) return -1;
  const auto lin = linear(k);
  for (auto h = mix(lin) & mask_;; h = (h + 1) & mask_) {
    if (slot_keys_[h] == lin) return slot_rows_[h];
    if (slot_keys_[h] == kEmpty) return -1;
  }
}

const NeighborTable& ActiveSet::neighbors(const BoxExtent& extent) const {
  std::lock_guard lock(table_mutex_);
  auto& slot = tables_[extent];
  if (slot) return *slot;
  auto table = std::make_unique<NeighborTable>();
  table->extent = extent;
  table->sites = keys_.size();
  const int taps = extent.taps();
  table->rows.assign(keys_.size() * taps, -1);
  const int lo_x = -((extent.k[0] - 1) / 2);
  const int lo_y = -((extent.k[1] - 1) / 2);
  const int lo_t = -((extent.k[2] - 1) / 2);
  const int d = extent.dilation;
  for (std::size_t s = 0; s < keys_.size(); ++s) {
    const VoxelKey& c = keys_[s];
    std::int32_t* out = table->rows.data() + s * taps;
    int tap = 0;
    for (int ox = 0; ox < extent.k[0]; ++ox) {
      for (int oy = 0; oy < extent.k[1]; ++oy) {
        for (int ot = 0; ot < extent.k[2]; ++ot, ++tap) {
          const VoxelKey n{c.ix + d * (lo_x + ox), c.iy + d * (lo_y + oy), c.it + d * (lo_t + ot)};
          out[tap] = find(n);
        }
      }
    }
  }
  slot = std::move(table);
  return *slot;
}

const ActiveSet::Coarsening& ActiveSet::coarsen(const std::array<int, 3>& stride) const {
  for (int v : stride) require(v >= 1, "coarsen: stride components must be >= 1");
  std::lock_guard lock(table_mutex_);
  auto& slot = coarse_[stride];
  if (slot) return *slot;
  const GridDims pd{(dims_.nx + stride[0] - 1) / stride[0], (dims_.ny + stride[1] - 1) / stride[1],
                    (dims_.nt + stride[2] - 1) / stride[2]};
  auto parent_key = [&](const VoxelKey& k) { return VoxelKey{k.ix / stride[0], k.iy / stride[1], k.it / stride[2]}; };
  auto linear_of = [&](const VoxelKey& k) { return (static_cast<std::uint64_t>(k.it) * pd.ny + k.iy) * pd.nx + k.ix; };
  std::vector<std::pair<std::uint64_t, std::uint32_t>> order(keys_.size());
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    order[i] = {linear_of(parent_key(keys_[i])), static_cast<std::uint32_t>(i)};
  }
  std::sort(order.begin(), order.end());

  auto c = std::make_unique<Coarsening>();
  c->parent_of_child.assign(keys_.size(), -1);
  std::vector<VoxelKey> pkeys;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == 0 || order[i].first != order[i - 1].first) pkeys.push_back(parent_key(keys_[order[i].second]));
    c->parent_of_child[order[i].second] = static_cast<std::int32_t>(pkeys.size() - 1);
  }
  c->parent = std::make_shared<const ActiveSet>(pd, std::move(pkeys));
  slot = std::move(c);
  return *slot;
}

SparseGrid voxelize(const EventStream& stream, const VoxelSize& size, std::optional<TimeAxis> axis) {
  require(size.x > 0 && size.y > 0 && size.t > 0, "voxelize: voxel size must be positive");
  require(!stream.empty() || axis.has_value(), "voxelize: empty stream needs an explicit time axis");
  require(stream.width > 0 && stream.height > 0, "voxelize: sensor dimensions must be positive");

  SparseGrid grid;
  grid.voxel_size = size;
  GridDims dims{ceil_div(stream.width, size.x), ceil_div(stream.height, size.y), 0};
  if (axis) {
    require(axis->nt > 0, "voxelize: time axis needs nt > 0");
    grid.t_base = axis->t_base;
    dims.nt = axis->nt;
  } else {
    grid.t_base = stream.events.front().t;
    dims.nt = static_cast<std::int64_t>((stream.events.back().t - grid.t_base) / size.t) + 1;
  }

  // (linear index, event index) for every event inside the grid.
  std::vector<std::pair<std::uint64_t, std::uint32_t>> cells;
  cells.reserve(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const Event& e = stream.events[i];
    if (e.t < grid.t_base) continue;
    const auto it = static_cast<std::int64_t>((e.t - grid.t_base) / size.t);
    if (it >= dims.nt) continue;
    const std::uint64_t lin = (static_cast<std::uint64_t>(it) * dims.ny + e.y / size.y) * dims.nx + e.x / size.x;
    cells.emplace_back(lin, static_cast<std::uint32_t>(i));
  }
  std::sort(cells.begin(), cells.end());

  std::vector<VoxelKey> keys;
  auto prov = std::make_shared<Provenance>();
  prov->voxel_of_event.assign(stream.size(), -1);
  prov->members.reserve(cells.size());
  std::vector<double> feats;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto [lin, ev] = cells[i];
    if (i == 0 || lin != cells[i - 1].first) {
      const auto ix = static_cast<std::int32_t>(lin % dims.nx);
      const auto iy = static_cast<std::int32_t>((lin / dims.nx) % dims.ny);
      const auto it = static_cast<std::int32_t>(lin / (dims.nx * dims.ny));
      keys.push_back({ix, iy, it});
      prov->member_offsets.push_back(static_cast<std::uint32_t>(prov->members.size()));
      feats.push_back(0.0);
      feats.push_back(0.0);
    }
    const std::size_t row = keys.size() - 1;
    prov->voxel_of_event[ev] = static_cast<std::int32_t>(row);
    prov->members.push_back(ev);
    feats[2 * row] += 1.0;
    feats[2 * row + 1] += stream.events[ev].pol;
  }
  prov->member_offsets.push_back(static_cast<std::uint32_t>(prov->members.size()));

  grid.features.rows = keys.size();
  grid.features.cols = 2;
  grid.features.data = std::move(feats);
  grid.active = std::make_shared<const ActiveSet>(dims, std::move(keys));
  grid.provenance = std::move(prov);
  return grid;
}

VoxelTargets lift_labels(const SparseGrid& grid, const EventStream& stream) {
  require(stream.has_labels(), "lift_labels: stream has no labels");
  require(grid.provenance != nullptr, "lift_labels: grid carries no provenance");
  require(grid.provenance->voxel_of_event.size() == stream.size(), "lift_labels: grid built from another stream");
  VoxelTargets t;
  t.labels.assign(grid.size(), 0);
  const auto& lab = *stream.labels;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto v = grid.provenance->voxel_of_event[i];
    if (v >= 0 && lab[i]) t.labels[v] = 1;
  }
  return t;
}

std::vector<double> scatter_predictions(const SparseGrid& grid, std::span<const double> voxel_conf,
                                        const EventStream& stream) {
  require(grid.provenance != nullptr, "scatter_predictions: grid carries no provenance");
  require(grid.provenance->voxel_of_event.size() == stream.size(),
          "scatter_predictions: grid built from another stream");
  require(voxel_conf.size() == grid.size(), "scatter_predictions: one confidence per active voxel expected");
  std::vector<double> out(stream.size(), 0.0);
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto v = grid.provenance->voxel_of_event[i];
    if (v >= 0) out[i] = voxel_conf[v];
  }
  return out;
}

std::vector<double> scatter_predictions(const SparseGrid& grid, const std::map<VoxelKey, double>& voxel_conf,
                                        const EventStream& stream) {
  std::vector<double> dense(grid.size(), 0.0);
  for (const auto& [key, conf] : voxel_conf) {
    const auto row = grid.active->find(key);
    require(row >= 0, "scatter_predictions: confidence given for an inactive voxel");
    dense[row] = conf;
  }
  return scatter_predictions(grid, dense, stream);
}

}  // namespace evuav
