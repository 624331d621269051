#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "config.hpp"
#include "sparse_ops.hpp"

namespace evuav {

// One GDSCA module: grouped dilated conv -> sparse squeeze-excitation ->
// patch attention.
struct GDSCAConfig {
  int branches = 4;
  std::vector<int> dilation_rates{1, 2, 3, 4};
  int channels = 16;
  int se_reduction = 4;
  std::array<int, 3> patch_size{8, 8, 64};
  bool use_patch_attention = true;

  void check() const;
  int se_hidden() const { return std::max(1, channels / se_reduction); }
};

struct ModelConfig {
  VoxelSize voxel_size{1, 1, 1000};
  int encoder_stages = 3;
  std::vector<int> stage_channels{16, 32, 64};
  std::array<int, 3> stride{2, 2, 4};
  int branches = 4;
  std::vector<int> dilation_rates{1, 2, 3, 4};
  int se_reduction = 4;
  // Patch extent in voxels at the deepest stage; shallower stages use the
  // same physical extent, i.e. this times the accumulated stride.
  std::array<int, 3> patch_size{8, 8, 64};
  bool use_gdsc = true;  // false: one plain 3x3x3 conv per module
  bool use_patch_attention = true;

  void check() const;
  GDSCAConfig stage(int s) const;

  static ModelConfig from_config(const KeyValueConfig& kv);
  void to_config(KeyValueConfig& kv) const;
};

// Keys understood by ModelConfig::from_config.
const std::vector<std::string>& model_config_keys();

// --- blocks --------------------------------------------------------------

// Channels are split into `branches` equal groups; group b goes through a
// 3x3x3 submanifold conv with dilation dilation_rates[b].
SparseGrid gdsc_block(const SparseGrid& in, const GDSCAConfig& cfg, std::span<LayerParams* const> branch_weights);
Features gdsc_backward(const SparseGrid& in, const GDSCAConfig& cfg, std::span<LayerParams* const> branch_weights,
                       const Features& cot_out);

struct SeParams {
  LayerParams* fc1_w = nullptr;  // [C/r, C]
  LayerParams* fc1_b = nullptr;
  LayerParams* fc2_w = nullptr;  // [C, C/r]
  LayerParams* fc2_b = nullptr;
};

struct SeCache {
  std::vector<double> squeeze, hidden, scale;
};

// Channel reweighting from the mean over active voxels only.
SparseGrid sp_se(const SparseGrid& in, const SeParams& p, SeCache* cache = nullptr);
Features sp_se_backward(const SparseGrid& in, const SeParams& p, const SeCache& cache, const Features& cot_out);

struct PatchCache {
  std::vector<std::int32_t> token_of_voxel;
  std::vector<double> inv_count;  // 1 / members per token
  Features tokens;
  ops::AttentionCache attn;
};

// Bins active voxels by floor(key / patch), mean-pools each bin into a token,
// runs token self-attention, and adds each voxel's attended token back to it.
SparseGrid patch_attention(const SparseGrid& in, const std::array<int, 3>& patch, const ops::AttentionParams& p,
                           PatchCache* cache = nullptr);
Features patch_attention_backward(const SparseGrid& in, const ops::AttentionParams& p, const PatchCache& cache,
                                  const Features& cot_out);

// --- network -------------------------------------------------------------

struct GdscaPass {
  SparseGrid in;
  SparseGrid act;  // relu(gdsc(in))
  SeCache se;
  SparseGrid se_out;
  PatchCache pa;
  SparseGrid out;
};

// Intermediates kept by SegNet::forward for the backward pass.
struct SegNetPass {
  SparseGrid input;
  SparseGrid stem_act;
  std::vector<GdscaPass> enc, dec;  // indexed by level
  std::vector<ops::Downsampled> down;
  std::vector<SparseGrid> down_act;
  std::vector<SparseGrid> dec_parent;  // grid upsampled into level s
  std::vector<double> logits;
  std::vector<double> conf;

  // Hash of every piecewise-linear branch taken (relu signs, max-pool winners).
  std::uint64_t decision_signature() const;
};

class SegNet {
 public:
  explicit SegNet(ModelConfig cfg);

  // Centered uniform init scaled by 1/sqrt(fan_in); head zeroed.
  void init(std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<LayerParams>& params() { return params_; }
  const std::vector<LayerParams>& params() const { return params_; }
  std::size_t parameter_count() const;
  LayerParams& param(const std::string& name);
  void zero_grad();

  // Confidence per active voxel of `input`, in grid row order.
  std::vector<double> forward(const SparseGrid& input, SegNetPass* pass = nullptr) const;
  // Accumulates parameter gradients; returns the input-feature cotangent.
  Features backward(SegNetPass& pass, std::span<const double> d_conf);

 private:
  struct GdscaLayers {
    std::vector<std::size_t> branches;
    std::size_t se_fc1_w, se_fc1_b, se_fc2_w, se_fc2_b;
    std::size_t q, k, v, o;
  };

  std::size_t add(const std::string& name, std::vector<int> shape);
  GdscaLayers add_gdsca(const std::string& prefix, const GDSCAConfig& g);
  SparseGrid run_gdsca(const GdscaLayers& l, const GDSCAConfig& g, const SparseGrid& in, GdscaPass& pass) const;
  Features back_gdsca(const GdscaLayers& l, const GDSCAConfig& g, GdscaPass& pass, const Features& cot);
  std::vector<LayerParams*> branch_ptrs(const GdscaLayers& l) const;
  SeParams se_ptrs(const GdscaLayers& l) const;
  ops::AttentionParams attn_ptrs(const GdscaLayers& l) const;

  ModelConfig cfg_;
  // mutable so const forward can hand out the non-const pointers the op
  // structs carry; forward only reads through them.
  mutable std::vector<LayerParams> params_;
  std::size_t stem_ = 0, head_w_ = 0, head_b_ = 0;
  std::vector<GdscaLayers> enc_, dec_;
  std::vector<std::size_t> down_, up_;
};

// Binary weights file plus a key=value model config written to `path + ".cfg"`.
void save_checkpoint(const SegNet& net, const std::string& path);
SegNet load_checkpoint(const std::string& path);

}  // namespace evuav
