#pragma once

#include <array>
#include <string>
#include <vector>

#include "voxel_grid.hpp"

namespace evuav {

// A named parameter block with its gradient accumulator.
struct LayerParams {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grads;

  LayerParams() = default;
  LayerParams(std::string n, std::vector<int> s);

  std::size_t size() const { return values.size(); }
  void zero_grad();
};

std::size_t shape_size(const std::vector<int>& shape);

// Submanifold convolution kernel. Weights are laid out
// [groups, out/groups, in/groups, kx, ky, kt].
struct KernelSpec {
  std::array<int, 3> size{3, 3, 3};
  int dilation = 1;
  int in_channels = 1;
  int out_channels = 1;
  int groups = 1;

  void check() const;
  std::vector<int> param_shape() const;
  int taps() const { return size[0] * size[1] * size[2]; }
  BoxExtent extent() const { return {size, dilation}; }
};

namespace ops {

// Output is defined only at the input's active sites; inactive neighbors
// contribute zero.
SparseGrid submanifold_conv(const SparseGrid& in, const KernelSpec& spec, const LayerParams& weight);
// Accumulates into weight.grads and returns the input cotangent.
Features conv_backward(const SparseGrid& in, const KernelSpec& spec, LayerParams& weight, const Features& cot_out);

Features relu(const Features& x);
// `out` is the forward output of relu.
Features relu_backward(const Features& out, const Features& cot_out);

// Row-wise y = W x (+ b), W shaped [out, in].
Features linear(const Features& x, const LayerParams& weight, const LayerParams* bias = nullptr);
Features linear_backward(const Features& x, LayerParams& weight, LayerParams* bias, const Features& cot_out);

// Features restricted to channels [begin, begin + count).
Features slice_channels(const Features& x, int begin, int count);
// Writes `part` into channels [begin, begin + part.cols) of `dst`.
void place_channels(Features& dst, const Features& part, int begin);

struct Downsampled {
  SparseGrid grid;                         // parent resolution
  std::vector<std::int32_t> parent_of_child;
  Features pooled;                         // max-pooled child features per parent
  std::vector<std::int32_t> argmax;        // [parent][channel] -> child row
};

// Parent key = floor(child key / stride); parent feature = W * maxpool(children).
Downsampled strided_downsample(const SparseGrid& child, std::array<int, 3> stride, const LayerParams& weight);
Features downsample_backward(const SparseGrid& child, const Downsampled& fwd, LayerParams& weight,
                             const Features& cot_parent);

// Parent row of every child voxel; the stride is recovered from the two
// grids' voxel sizes.
std::vector<std::int32_t> parent_rows(const SparseGrid& parent, const SparseGrid& child_template);

// Each child active voxel receives W * (its parent's feature).
SparseGrid upsample_to(const SparseGrid& parent, const SparseGrid& child_template, const LayerParams& weight);
Features upsample_backward(const SparseGrid& parent, const SparseGrid& child_template, LayerParams& weight,
                           const Features& cot_child);

// Single-head attention weights, each [C, C].
struct AttentionParams {
  LayerParams* query = nullptr;
  LayerParams* key = nullptr;
  LayerParams* value = nullptr;
  LayerParams* out = nullptr;
};

struct AttentionCache {
  Features q, k, v, heads;
  std::vector<double> attn;  // n x n row-stochastic
};

// tokens + out_proj(softmax(Q K^T / sqrt(C)) V).
Features token_self_attention(const Features& tokens, const AttentionParams& p, AttentionCache* cache = nullptr);
Features attention_backward(const Features& tokens, const AttentionParams& p, const AttentionCache& cache,
                            const Features& cot_out);

}  // namespace ops
}  // namespace evuav
