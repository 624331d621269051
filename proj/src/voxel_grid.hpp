#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "event_core.hpp"

namespace evuav {

struct VoxelKey {
  std::int32_t ix = 0;
  std::int32_t iy = 0;
  std::int32_t it = 0;

  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

// Voxel edge lengths: pixels along x and y, microseconds along t.
struct VoxelSize {
  std::int64_t x = 1;
  std::int64_t y = 1;
  std::int64_t t = 1000;

  friend bool operator==(const VoxelSize&, const VoxelSize&) = default;
};

struct GridDims {
  std::int64_t nx = 0;
  std::int64_t ny = 0;
  std::int64_t nt = 0;

  friend bool operator==(const GridDims&, const GridDims&) = default;
  std::int64_t volume() const { return nx * ny * nt; }
};

// Box of integer offsets around a site. Along an axis of extent k the offsets
// run from -((k-1)/2) to k-1-((k-1)/2), each scaled by the dilation.
struct BoxExtent {
  std::array<int, 3> k{3, 3, 3};
  int dilation = 1;

  int taps() const { return k[0] * k[1] * k[2]; }
  auto operator<=>(const BoxExtent&) const = default;
};

// Row indices of each site's neighbors, laid out [site][tap]; -1 marks an
// inactive or out-of-bounds neighbor.
struct NeighborTable {
  BoxExtent extent;
  std::size_t sites = 0;
  std::vector<std::int32_t> rows;

  std::int32_t at(std::size_t site, int tap) const { return rows[site * extent.taps() + tap]; }
};

// The set of active voxels at one resolution, sorted by (it, iy, ix). Every
// feature map computed at that resolution shares the same ActiveSet, which is
// how the submanifold ops keep the active set fixed.
class ActiveSet {
 public:
  ActiveSet(GridDims dims, std::vector<VoxelKey> keys);

  const GridDims& dims() const { return dims_; }
  std::size_t size() const { return keys_.size(); }
  std::span<const VoxelKey> keys() const { return keys_; }
  const VoxelKey& key(std::size_t row) const { return keys_[row]; }

  bool in_bounds(const VoxelKey& k) const {
    return k.ix >= 0 && k.iy >= 0 && k.it >= 0 && k.ix < dims_.nx && k.iy < dims_.ny && k.it < dims_.nt;
  }
  // Row of `k`, or -1 if it is not active.
  std::int32_t find(const VoxelKey& k) const;

  // Memoized per extent for the lifetime of this ActiveSet.
  const NeighborTable& neighbors(const BoxExtent& extent) const;

  // Active set of floor(key / stride) plus the parent row of every voxel.
  // Memoized per stride, so repeated passes over one grid share the coarse
  // sets and their neighbor tables.
  struct Coarsening {
    std::shared_ptr<const ActiveSet> parent;
    std::vector<std::int32_t> parent_of_child;
  };
  const Coarsening& coarsen(const std::array<int, 3>& stride) const;

 private:
  std::uint64_t linear(const VoxelKey& k) const {
    return (static_cast<std::uint64_t>(k.it) * dims_.ny + k.iy) * dims_.nx + k.ix;
  }

  GridDims dims_;
  std::vector<VoxelKey> keys_;
  // open addressing, linear probing; empty slots hold kEmpty
  static constexpr std::uint64_t kEmpty = ~std::uint64_t{0};
  std::vector<std::uint64_t> slot_keys_;
  std::vector<std::int32_t> slot_rows_;
  std::uint64_t mask_ = 0;
  mutable std::mutex table_mutex_;
  mutable std::map<BoxExtent, std::unique_ptr<NeighborTable>> tables_;
  mutable std::map<std::array<int, 3>, std::unique_ptr<Coarsening>> coarse_;
};

// Dense row-major feature matrix: one row per active voxel.
struct Features {
  std::size_t rows = 0;
  int cols = 0;
  std::vector<double> data;

  Features() = default;
  Features(std::size_t r, int c) : rows(r), cols(c), data(r * static_cast<std::size_t>(c), 0.0) {}

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double& at(std::size_t i, int c) { return data[i * cols + c]; }
  double at(std::size_t i, int c) const { return data[i * cols + c]; }

  friend bool operator==(const Features&, const Features&) = default;
};

// Event -> voxel bookkeeping kept from voxelization.
struct Provenance {
  std::vector<std::int32_t> voxel_of_event;  // -1 for events that fell outside the grid
  std::vector<std::uint32_t> member_offsets;  // CSR over voxels, size = voxels + 1
  std::vector<std::uint32_t> members;         // event indices grouped by voxel

  std::span<const std::uint32_t> events_in(std::size_t voxel) const {
    return {members.data() + member_offsets[voxel], members.data() + member_offsets[voxel + 1]};
  }
};

struct SparseGrid {
  VoxelSize voxel_size;
  std::uint64_t t_base = 0;
  std::shared_ptr<const ActiveSet> active;
  Features features;
  std::shared_ptr<const Provenance> provenance;

  std::size_t size() const { return active ? active->size() : 0; }
  int channels() const { return features.cols; }
  const GridDims& dims() const { return active->dims(); }

  // Same geometry, new features.
  SparseGrid with_features(Features f) const {
    SparseGrid g{voxel_size, t_base, active, std::move(f), provenance};
    return g;
  }
};

// Optional fixed time axis for voxelization; events outside it are dropped.
struct TimeAxis {
  std::uint64_t t_base = 0;
  std::int64_t nt = 0;
};

// Builds the 2-channel [event count, polarity sum] grid. Without `axis`, t_base
// is the first event's timestamp and nt spans the last event.
SparseGrid voxelize(const EventStream& stream, const VoxelSize& size, std::optional<TimeAxis> axis = {});

// Per active voxel: 1 iff any member event is labeled 1.
struct VoxelTargets {
  std::vector<std::uint8_t> labels;
};

VoxelTargets lift_labels(const SparseGrid& grid, const EventStream& stream);

// Broadcasts per-voxel confidences (aligned with grid rows) to member events.
std::vector<double> scatter_predictions(const SparseGrid& grid, std::span<const double> voxel_conf,
                                        const EventStream& stream);
// Same, for a partial map; events whose voxel is absent receive 0.
std::vector<double> scatter_predictions(const SparseGrid& grid, const std::map<VoxelKey, double>& voxel_conf,
                                        const EventStream& stream);

}  // namespace evuav
