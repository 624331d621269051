#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "segnet.hpp"

namespace evuav {

// `n` distinct random voxels in `dims` (sorted), features uniform in [-1, 1].
SparseGrid random_grid(GridDims dims, std::size_t n, int channels, std::uint64_t seed,
                       VoxelSize voxel_size = {1, 1, 1000});

// Three 4x4x4 blobs of `voxels_per_cluster` voxels each, spaced along x so
// that they land in different attention patches at every stage.
SparseGrid gradcheck_input(std::size_t voxels_per_cluster, std::uint64_t seed, VoxelSize voxel_size = {1, 1, 1000});

struct GradcheckConfig {
  std::uint64_t seed = 0;
  std::size_t voxels_per_cluster = 16;
  int samples_per_layer = 8;
  // Fourth-order central difference:
  //   (8 (f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h
  double step = 1e-3;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  double tolerance = 1e-5;
  // Default init shrinks activations layer by layer on a sparse input, leaving
  // deep gradients below finite-difference resolution; weights are scaled by
  // this gain and biases drawn nonzero for the check.
  double gain = 3.0;
};

struct LayerCheck {
  std::string name;
  int checked = 0;
  int skipped = 0;  // samples whose +-step straddled a relu or max-pool switch
  double max_rel_error = 0.0;
};

// Finite differences on sampled entries of every parameter tensor, against
// the loss sum_i r_i conf_i with fixed random r. The head is re-drawn with
// nonzero values so that every layer receives gradient.
std::vector<LayerCheck> gradcheck_model(const ModelConfig& model, const GradcheckConfig& cfg);

double relative_error(double analytic, double numeric, double floor);

}  // namespace evuav
