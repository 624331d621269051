#include "segnet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "binary_io.hpp"
#include "error.hpp"

namespace evuav {

namespace {

constexpr double kLogitClamp = 30.0;  // keeps sigmoid strictly inside (0, 1)

std::array<int, 3> to_triplet(const std::vector<std::int64_t>& v, const char* key) {
  if (v.size() != 3) fail(ErrorKind::Validation, std::string(key) + ": expected three comma-separated integers");
  return {static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2])};
}

std::vector<int> to_ints(const std::vector<std::int64_t>& v) { return {v.begin(), v.end()}; }

std::vector<std::int64_t> to_i64(std::span<const int> v) { return {v.begin(), v.end()}; }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Features add_features(const Features& a, const Features& b) {
  Features c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

void accumulate(Features& into, const Features& add) {
  for (std::size_t i = 0; i < into.data.size(); ++i) into.data[i] += add.data[i];
}

}  // namespace

void GDSCAConfig::check() const {
  require(branches >= 1, "GDSCAConfig: branches must be >= 1");
  require(static_cast<int>(dilation_rates.size()) == branches, "GDSCAConfig: need one dilation rate per branch");
  for (int d : dilation_rates) require(d >= 1, "GDSCAConfig: dilation rates must be >= 1");
  require(channels >= 1 && channels % branches == 0,
          "GDSCAConfig: channels (" + std::to_string(channels) + ") must be divisible by branches (" +
              std::to_string(branches) + ")");
  require(se_reduction >= 1, "GDSCAConfig: se_reduction must be >= 1");
  for (int p : patch_size) require(p >= 1, "GDSCAConfig: patch extents must be >= 1");
}

void ModelConfig::check() const {
  require(voxel_size.x > 0 && voxel_size.y > 0 && voxel_size.t > 0, "ModelConfig: voxel size must be positive");
  require(encoder_stages >= 1, "ModelConfig: need at least one encoder stage");
  require(static_cast<int>(stage_channels.size()) == encoder_stages, "ModelConfig: one channel width per stage");
  for (int s : stride) require(s >= 1, "ModelConfig: stride components must be >= 1");
  for (int s = 0; s < encoder_stages; ++s) stage(s).check();
}

GDSCAConfig ModelConfig::stage(int s) const {
  GDSCAConfig g;
  g.branches = use_gdsc ? branches : 1;
  g.dilation_rates = use_gdsc ? dilation_rates : std::vector<int>{1};
  g.channels = stage_channels.at(s);
  g.se_reduction = se_reduction;
  g.use_patch_attention = use_patch_attention;
  for (int a = 0; a < 3; ++a) {
    std::int64_t p = patch_size[a];
    for (int k = s + 1; k < encoder_stages; ++k) p *= stride[a];
    g.patch_size[a] = static_cast<int>(p);
  }
  return g;
}

const std::vector<std::string>& model_config_keys() {
  static const std::vector<std::string> keys = {
      "model.voxel_size", "model.stages",     "model.channels",   "model.stride",
      "model.branches",   "model.dilations",  "model.se_reduction", "model.patch_size",
      "model.gdsc",       "model.patch_attention"};
  return keys;
}

ModelConfig ModelConfig::from_config(const KeyValueConfig& kv) {
  ModelConfig m;
  const auto vs = kv.get_int_list("model.voxel_size", {m.voxel_size.x, m.voxel_size.y, m.voxel_size.t});
  if (vs.size() != 3) fail(ErrorKind::Validation, "model.voxel_size: expected x,y,t_us");
  m.voxel_size = {vs[0], vs[1], vs[2]};
  m.encoder_stages = static_cast<int>(kv.get_int("model.stages", m.encoder_stages));
  m.stage_channels = to_ints(kv.get_int_list("model.channels", to_i64(m.stage_channels)));
  m.stride = to_triplet(kv.get_int_list("model.stride", to_i64(m.stride)), "model.stride");
  m.branches = static_cast<int>(kv.get_int("model.branches", m.branches));
  m.dilation_rates = to_ints(kv.get_int_list("model.dilations", to_i64(m.dilation_rates)));
  m.se_reduction = static_cast<int>(kv.get_int("model.se_reduction", m.se_reduction));
  m.patch_size = to_triplet(kv.get_int_list("model.patch_size", to_i64(m.patch_size)), "model.patch_size");
  m.use_gdsc = kv.get_bool("model.gdsc", m.use_gdsc);
  m.use_patch_attention = kv.get_bool("model.patch_attention", m.use_patch_attention);
  return m;
}

void ModelConfig::to_config(KeyValueConfig& kv) const {
  kv.set("model.voxel_size", format_int_list({voxel_size.x, voxel_size.y, voxel_size.t}));
  kv.set("model.stages", std::to_string(encoder_stages));
  kv.set("model.channels", format_int_list(to_i64(stage_channels)));
  kv.set("model.stride", format_int_list(to_i64(stride)));
  kv.set("model.branches", std::to_string(branches));
  kv.set("model.dilations", format_int_list(to_i64(dilation_rates)));
  kv.set("model.se_reduction", std::to_string(se_reduction));
  kv.set("model.patch_size", format_int_list(to_i64(patch_size)));
  kv.set("model.gdsc", use_gdsc ? "true" : "false");
  kv.set("model.patch_attention", use_patch_attention ? "true" : "false");
}

// --- blocks --------------------------------------------------------------

namespace {

KernelSpec branch_spec(const GDSCAConfig& cfg, int b) {
  KernelSpec k;
  k.dilation = cfg.dilation_rates[b];
  k.in_channels = k.out_channels = cfg.channels / cfg.branches;
  return k;
}

}  // namespace

SparseGrid gdsc_block(const SparseGrid& in, const GDSCAConfig& cfg, std::span<LayerParams* const> branch_weights) {
  cfg.check();
  require(in.channels() == cfg.channels, "gdsc_block: input has " + std::to_string(in.channels()) +
                                             " channels, block expects " + std::to_string(cfg.channels));
  require(static_cast<int>(branch_weights.size()) == cfg.branches, "gdsc_block: one weight per branch expected");
  const int width = cfg.channels / cfg.branches;
  Features out(in.size(), cfg.channels);
  for (int b = 0; b < cfg.branches; ++b) {
    const SparseGrid part = in.with_features(ops::slice_channels(in.features, b * width, width));
    const SparseGrid conv = ops::submanifold_conv(part, branch_spec(cfg, b), *branch_weights[b]);
    ops::place_channels(out, conv.features, b * width);
  }
  return in.with_features(std::move(out));
}

Features gdsc_backward(const SparseGrid& in, const GDSCAConfig& cfg, std::span<LayerParams* const> branch_weights,
                       const Features& cot_out) {
  const int width = cfg.channels / cfg.branches;
  Features cot_in(in.size(), cfg.channels);
  for (int b = 0; b < cfg.branches; ++b) {
    const SparseGrid part = in.with_features(ops::slice_channels(in.features, b * width, width));
    const Features g = ops::conv_backward(part, branch_spec(cfg, b), *branch_weights[b],
                                          ops::slice_channels(cot_out, b * width, width));
    ops::place_channels(cot_in, g, b * width);
  }
  return cot_in;
}

SparseGrid sp_se(const SparseGrid& in, const SeParams& p, SeCache* cache) {
  const int C = in.channels();
  require(p.fc1_w->shape.size() == 2 && p.fc1_w->shape[1] == C, "sp_se: excitation width mismatch");
  if (in.size() == 0) {
    if (cache) *cache = SeCache{};
    return in;
  }
  Features squeeze(1, C);
  for (std::size_t i = 0; i < in.size(); ++i) {
    for (int c = 0; c < C; ++c) squeeze.data[c] += in.features.at(i, c);
  }
  for (double& v : squeeze.data) v /= static_cast<double>(in.size());
  const Features hidden = ops::relu(ops::linear(squeeze, *p.fc1_w, p.fc1_b));
  Features scale = ops::linear(hidden, *p.fc2_w, p.fc2_b);
  for (double& v : scale.data) v = sigmoid(v);

  Features out = in.features;
  for (std::size_t i = 0; i < out.rows; ++i) {
    double* r = out.row(i);
    for (int c = 0; c < C; ++c) r[c] *= scale.data[c];
  }
  if (cache) *cache = SeCache{squeeze.data, hidden.data, scale.data};
  return in.with_features(std::move(out));
}

Features sp_se_backward(const SparseGrid& in, const SeParams& p, const SeCache& cache, const Features& cot_out) {
  const int C = in.channels();
  if (in.size() == 0) return cot_out;
  Features d_logit(1, C);
  for (std::size_t i = 0; i < in.size(); ++i) {
    for (int c = 0; c < C; ++c) d_logit.data[c] += cot_out.at(i, c) * in.features.at(i, c);
  }
  for (int c = 0; c < C; ++c) d_logit.data[c] *= cache.scale[c] * (1.0 - cache.scale[c]);

  Features hidden(1, static_cast<int>(cache.hidden.size()));
  hidden.data = cache.hidden;
  Features d_hidden = ops::linear_backward(hidden, *p.fc2_w, p.fc2_b, d_logit);
  d_hidden = ops::relu_backward(hidden, d_hidden);
  Features squeeze(1, C);
  squeeze.data = cache.squeeze;
  const Features d_squeeze = ops::linear_backward(squeeze, *p.fc1_w, p.fc1_b, d_hidden);

  Features cot_in(in.size(), C);
  const double inv_n = 1.0 / static_cast<double>(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    for (int c = 0; c < C; ++c) cot_in.at(i, c) = cot_out.at(i, c) * cache.scale[c] + d_squeeze.data[c] * inv_n;
  }
  return cot_in;
}

SparseGrid patch_attention(const SparseGrid& in, const std::array<int, 3>& patch, const ops::AttentionParams& p,
                           PatchCache* cache) {
  for (int e : patch) require(e >= 1, "patch_attention: patch extents must be >= 1");
  PatchCache local;
  PatchCache& pc = cache ? *cache : local;
  const auto keys = in.active->keys();
  const GridDims& d = in.dims();
  const std::uint64_t px = (d.nx + patch[0] - 1) / patch[0];
  const std::uint64_t py = (d.ny + patch[1] - 1) / patch[1];
  std::vector<std::pair<std::uint64_t, std::uint32_t>> order(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::uint64_t tx = keys[i].ix / patch[0], ty = keys[i].iy / patch[1], tt = keys[i].it / patch[2];
    order[i] = {(tt * py + ty) * px + tx, static_cast<std::uint32_t>(i)};
  }
  std::sort(order.begin(), order.end());
  pc.token_of_voxel.assign(keys.size(), -1);
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == 0 || order[i].first != order[i - 1].first) counts.push_back(0);
    pc.token_of_voxel[order[i].second] = static_cast<std::int32_t>(counts.size() - 1);
    ++counts.back();
  }

  const int C = in.channels();
  pc.tokens = Features(counts.size(), C);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    double* t = pc.tokens.row(pc.token_of_voxel[i]);
    const double* x = in.features.row(i);
    for (int c = 0; c < C; ++c) t[c] += x[c];
  }
  pc.inv_count.resize(counts.size());
  for (std::size_t t = 0; t < counts.size(); ++t) {
    pc.inv_count[t] = 1.0 / static_cast<double>(counts[t]);
    for (int c = 0; c < C; ++c) pc.tokens.at(t, c) *= pc.inv_count[t];
  }
  const Features attended = ops::token_self_attention(pc.tokens, p, &pc.attn);
  Features out = in.features;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const double* a = attended.row(pc.token_of_voxel[i]);
    double* r = out.row(i);
    for (int c = 0; c < C; ++c) r[c] += a[c];
  }
  return in.with_features(std::move(out));
}

Features patch_attention_backward(const SparseGrid& in, const ops::AttentionParams& p, const PatchCache& pc,
                                  const Features& cot_out) {
  const int C = in.channels();
  Features d_attended(pc.tokens.rows, C);
  for (std::size_t i = 0; i < in.size(); ++i) {
    double* d = d_attended.row(pc.token_of_voxel[i]);
    const double* g = cot_out.row(i);
    for (int c = 0; c < C; ++c) d[c] += g[c];
  }
  const Features d_tokens = ops::attention_backward(pc.tokens, p, pc.attn, d_attended);
  Features cot_in = cot_out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto t = pc.token_of_voxel[i];
    const double* d = d_tokens.row(t);
    double* r = cot_in.row(i);
    for (int c = 0; c < C; ++c) r[c] += d[c] * pc.inv_count[t];
  }
  return cot_in;
}

// --- network -------------------------------------------------------------

std::uint64_t SegNetPass::decision_signature() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  auto signs = [&](const Features& f) {
    for (double v : f.data) mix(v > 0.0);
  };
  signs(stem_act.features);
  for (const auto* passes : {&enc, &dec}) {
    for (const GdscaPass& g : *passes) {
      signs(g.act.features);
      for (double v : g.se.hidden) mix(v > 0.0);
    }
  }
  for (const auto& d : down) {
    for (auto a : d.argmax) mix(static_cast<std::uint64_t>(a));
  }
  for (const auto& a : down_act) signs(a.features);
  for (double z : logits) mix(std::abs(z) >= kLogitClamp);
  return h;
}

SegNet::SegNet(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.check();
  const int S = cfg_.encoder_stages;
  const auto& ch = cfg_.stage_channels;
  KernelSpec stem;
  stem.in_channels = 2;
  stem.out_channels = ch[0];
  stem_ = add("stem.weight", stem.param_shape());
  for (int s = 0; s < S; ++s) {
    enc_.push_back(add_gdsca("enc" + std::to_string(s), cfg_.stage(s)));
    const int next = s + 1 < S ? ch[s + 1] : ch[s];
    down_.push_back(add("down" + std::to_string(s) + ".weight", {next, ch[s]}));
  }
  for (int s = 0; s < S; ++s) {
    const int parent = s + 1 < S ? ch[s + 1] : ch[s];
    up_.push_back(add("up" + std::to_string(s) + ".weight", {ch[s], parent}));
    dec_.push_back(add_gdsca("dec" + std::to_string(s), cfg_.stage(s)));
  }
  head_w_ = add("head.weight", {1, ch[0]});
  head_b_ = add("head.bias", {1});
}

std::size_t SegNet::add(const std::string& name, std::vector<int> shape) {
  params_.emplace_back(name, std::move(shape));
  return params_.size() - 1;
}

SegNet::GdscaLayers SegNet::add_gdsca(const std::string& prefix, const GDSCAConfig& g) {
  GdscaLayers l{};
  for (int b = 0; b < g.branches; ++b) {
    l.branches.push_back(add(prefix + ".gdsc" + std::to_string(b) + ".weight", branch_spec(g, b).param_shape()));
  }
  const int C = g.channels, H = g.se_hidden();
  l.se_fc1_w = add(prefix + ".se.fc1.weight", {H, C});
  l.se_fc1_b = add(prefix + ".se.fc1.bias", {H});
  l.se_fc2_w = add(prefix + ".se.fc2.weight", {C, H});
  l.se_fc2_b = add(prefix + ".se.fc2.bias", {C});
  if (g.use_patch_attention) {
    l.q = add(prefix + ".pa.query", {C, C});
    l.k = add(prefix + ".pa.key", {C, C});
    l.v = add(prefix + ".pa.value", {C, C});
    l.o = add(prefix + ".pa.out", {C, C});
  }
  return l;
}

void SegNet::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (LayerParams& p : params_) {
    const bool is_bias = p.name.size() > 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0;
    if (is_bias || p.name.rfind("head.", 0) == 0) {
      std::fill(p.values.begin(), p.values.end(), 0.0);
      continue;
    }
    // conv: [G, out/G, in/G, kx, ky, kt]; linear: [out, in]
    std::size_t fan_in = 1;
    for (std::size_t d = 2; d < p.shape.size(); ++d) fan_in *= p.shape[d];
    if (p.shape.size() == 2) fan_in = p.shape[1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p.values) v = dist(rng);
  }
  zero_grad();
}

std::size_t SegNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

LayerParams& SegNet::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  fail(ErrorKind::Contract, "no parameter named " + name);
}

void SegNet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<LayerParams*> SegNet::branch_ptrs(const GdscaLayers& l) const {
  std::vector<LayerParams*> out;
  for (auto i : l.branches) out.push_back(&params_[i]);
  return out;
}

SeParams SegNet::se_ptrs(const GdscaLayers& l) const {
  return {&params_[l.se_fc1_w], &params_[l.se_fc1_b], &params_[l.se_fc2_w], &params_[l.se_fc2_b]};
}

ops::AttentionParams SegNet::attn_ptrs(const GdscaLayers& l) const {
  return {&params_[l.q], &params_[l.k], &params_[l.v], &params_[l.o]};
}

SparseGrid SegNet::run_gdsca(const GdscaLayers& l, const GDSCAConfig& g, const SparseGrid& in, GdscaPass& pass) const {
  pass.in = in;
  const auto branches = branch_ptrs(l);
  pass.act = gdsc_block(in, g, branches);
  pass.act.features = ops::relu(pass.act.features);
  pass.se_out = sp_se(pass.act, se_ptrs(l), &pass.se);
  pass.out = g.use_patch_attention ? patch_attention(pass.se_out, g.patch_size, attn_ptrs(l), &pass.pa) : pass.se_out;
  return pass.out;
}

Features SegNet::back_gdsca(const GdscaLayers& l, const GDSCAConfig& g, GdscaPass& pass, const Features& cot) {
  Features d = g.use_patch_attention ? patch_attention_backward(pass.se_out, attn_ptrs(l), pass.pa, cot) : cot;
  d = sp_se_backward(pass.act, se_ptrs(l), pass.se, d);
  d = ops::relu_backward(pass.act.features, d);
  const auto branches = branch_ptrs(l);
  return gdsc_backward(pass.in, g, branches, d);
}

std::vector<double> SegNet::forward(const SparseGrid& input, SegNetPass* pass) const {
  require(input.channels() == 2, "SegNet::forward: expected the 2-channel voxelized input");
  SegNetPass local;
  SegNetPass& ps = pass ? *pass : local;
  const int S = cfg_.encoder_stages;
  ps.input = input;
  ps.enc.assign(S, {});
  ps.dec.assign(S, {});
  ps.down.assign(S, {});
  ps.down_act.assign(S, {});
  ps.dec_parent.assign(S, {});

  KernelSpec stem;
  stem.in_channels = 2;
  stem.out_channels = cfg_.stage_channels[0];
  ps.stem_act = ops::submanifold_conv(input, stem, params_[stem_]);
  ps.stem_act.features = ops::relu(ps.stem_act.features);

  SparseGrid x = ps.stem_act;
  for (int s = 0; s < S; ++s) {
    const SparseGrid skip = run_gdsca(enc_[s], cfg_.stage(s), x, ps.enc[s]);
    ps.down[s] = ops::strided_downsample(skip, cfg_.stride, params_[down_[s]]);
    ps.down_act[s] = ps.down[s].grid;
    ps.down_act[s].features = ops::relu(ps.down_act[s].features);
    x = ps.down_act[s];
  }
  for (int s = S - 1; s >= 0; --s) {
    ps.dec_parent[s] = x;
    const SparseGrid& skip = ps.enc[s].out;
    SparseGrid up = ops::upsample_to(x, skip, params_[up_[s]]);
    up.features = add_features(up.features, skip.features);
    x = run_gdsca(dec_[s], cfg_.stage(s), up, ps.dec[s]);
  }

  const Features logits = ops::linear(x.features, params_[head_w_], &params_[head_b_]);
  ps.logits = logits.data;
  ps.conf.resize(ps.logits.size());
  for (std::size_t i = 0; i < ps.logits.size(); ++i) {
    ps.conf[i] = sigmoid(std::clamp(ps.logits[i], -kLogitClamp, kLogitClamp));
  }
  return ps.conf;
}

Features SegNet::backward(SegNetPass& ps, std::span<const double> d_conf) {
  require(d_conf.size() == ps.conf.size(), "SegNet::backward: one cotangent per voxel expected");
  const int S = cfg_.encoder_stages;
  Features d_logit(d_conf.size(), 1);
  for (std::size_t i = 0; i < d_conf.size(); ++i) {
    const double p = ps.conf[i];
    // the logit clamp passes gradient straight through, as the loss clamp does
    d_logit.data[i] = d_conf[i] * p * (1.0 - p);
  }
  Features d = ops::linear_backward(ps.dec[0].out.features, params_[head_w_], &params_[head_b_], d_logit);

  std::vector<Features> d_skip(S);
  for (int s = 0; s < S; ++s) {
    const Features d_in = back_gdsca(dec_[s], cfg_.stage(s), ps.dec[s], d);
    d_skip[s] = d_in;
    d = ops::upsample_backward(ps.dec_parent[s], ps.enc[s].out, params_[up_[s]], d_in);
  }
  for (int s = S - 1; s >= 0; --s) {
    d = ops::relu_backward(ps.down_act[s].features, d);
    accumulate(d_skip[s], ops::downsample_backward(ps.enc[s].out, ps.down[s], params_[down_[s]], d));
    d = back_gdsca(enc_[s], cfg_.stage(s), ps.enc[s], d_skip[s]);
  }
  d = ops::relu_backward(ps.stem_act.features, d);
  KernelSpec stem;
  stem.in_channels = 2;
  stem.out_channels = cfg_.stage_channels[0];
  return ops::conv_backward(ps.input, stem, params_[stem_], d);
}

// --- checkpoint ----------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[8] = {'E', 'V', 'U', 'A', 'V', 'C', 'K', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const SegNet& net, const std::string& path) {
  binio::Writer w;
  w.bytes(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(net.params().size()));
  for (const LayerParams& p : net.params()) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.values) w.f64(v);
  }
  w.save(path);
  KeyValueConfig kv;
  net.config().to_config(kv);
  binio::Writer cfg;
  const std::string text = kv.to_text();
  cfg.bytes(text.data(), text.size());
  cfg.save(path + ".cfg");
}

SegNet load_checkpoint(const std::string& path) {
  const ModelConfig mc = ModelConfig::from_config(KeyValueConfig::load(path + ".cfg"));
  SegNet net(mc);
  const std::string bytes = binio::read_file(path);
  binio::Reader r(bytes, path);
  if (bytes.size() < 16 || r.str(8) != std::string(kCheckpointMagic, 8)) {
    fail(ErrorKind::Parse, path + ": missing EVUAVCK1 magic");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) fail(ErrorKind::Parse, path + ": unsupported checkpoint version");
  const auto count = r.u32();
  if (count != net.params().size()) {
    fail(ErrorKind::Validation, path + ": checkpoint has " + std::to_string(count) + " layers, model config implies " +
                                    std::to_string(net.params().size()));
  }
  for (LayerParams& p : net.params()) {
    const std::string name = r.str(r.u32());
    const auto ndim = r.u32();
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    if (name != p.name || shape != p.shape) {
      fail(ErrorKind::Validation, path + ": layer '" + name + "' does not match model layer '" + p.name + "'");
    }
    for (double& v : p.values) v = r.f64();
  }
  if (r.remaining() != 0) fail(ErrorKind::Parse, path + ": trailing bytes after last layer");
  return net;
}

}  // namespace evuav
