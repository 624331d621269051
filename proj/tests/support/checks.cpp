#include "checks.hpp"

#include <algorithm>
#include <cmath>

#include "gradcheck.hpp"
#include "losses.hpp"
#include "oracles.hpp"
#include "segnet.hpp"

namespace evuav::testing {

namespace {

constexpr double kStep = 1e-4;
constexpr double kGradTol = 1e-5;

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename F>
double fd_worst(std::vector<double>& x, const std::vector<double>& analytic, F&& objective) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, rel_error(analytic[i], oracle::central_difference(x, i, kStep, objective)));
  }
  return worst;
}

Check grad_check(const std::string& name, double err) { return {name, err, kGradTol, false}; }

void conv_cases(std::uint64_t seed, std::vector<Check>& out) {
  struct Case {
    const char* name;
    KernelSpec spec;
  };
  const Case cases[] = {
      {"conv 3x3x3 d1 4->6", {{3, 3, 3}, 1, 4, 6, 1}},
      {"conv 3x3x3 d2 g2 4->6", {{3, 3, 3}, 2, 4, 6, 2}},
      {"conv 3x1x5 d1 2->2", {{3, 1, 5}, 1, 2, 2, 1}},
  };
  std::uint64_t s = seed;
  for (const auto& c : cases) {
    std::mt19937_64 rng(++s);
    SparseGrid g = random_grid({5, 5, 5}, 40, c.spec.in_channels, s);
    LayerParams w = random_params("w", c.spec.param_shape(), rng, 0.5);
    const auto r = random_vector(g.size() * c.spec.out_channels, rng);
    auto objective = [&] { return dot(r, ops::submanifold_conv(g, c.spec, w).features.data); };
    Features cot(g.size(), c.spec.out_channels);
    cot.data = r;
    w.zero_grad();
    const Features d_in = ops::conv_backward(g, c.spec, w, cot);
    out.push_back(grad_check(std::string(c.name) + " weight", fd_worst(w.values, w.grads, objective)));
    out.push_back(grad_check(std::string(c.name) + " input", fd_worst(g.features.data, d_in.data, objective)));
  }
}

void resample_cases(std::uint64_t seed, std::vector<Check>& out) {
  std::mt19937_64 rng(seed + 11);
  SparseGrid child = random_grid({6, 6, 6}, 45, 3, seed + 11);
  const std::array<int, 3> stride{2, 2, 2};
  LayerParams wd = random_params("down", {5, 3}, rng);
  {
    const auto probe = ops::strided_downsample(child, stride, wd);
    const auto r = random_vector(probe.grid.features.data.size(), rng);
    auto objective = [&] { return dot(r, ops::strided_downsample(child, stride, wd).grid.features.data); };
    Features cot(probe.grid.size(), 5);
    cot.data = r;
    wd.zero_grad();
    const Features d_in = ops::downsample_backward(child, probe, wd, cot);
    out.push_back(grad_check("downsample weight", fd_worst(wd.values, wd.grads, objective)));
    out.push_back(grad_check("downsample input", fd_worst(child.features.data, d_in.data, objective)));
  }
  {
    SparseGrid parent = ops::strided_downsample(child, stride, wd).grid;
    LayerParams wu = random_params("up", {4, 5}, rng);
    const auto r = random_vector(child.size() * 4, rng);
    auto objective = [&] { return dot(r, ops::upsample_to(parent, child, wu).features.data); };
    Features cot(child.size(), 4);
    cot.data = r;
    wu.zero_grad();
    const Features d_parent = ops::upsample_backward(parent, child, wu, cot);
    out.push_back(grad_check("upsample weight", fd_worst(wu.values, wu.grads, objective)));
    out.push_back(grad_check("upsample input", fd_worst(parent.features.data, d_parent.data, objective)));
  }
}

void attention_cases(std::uint64_t seed, std::vector<Check>& out) {
  std::mt19937_64 rng(seed + 21);
  const int C = 4;
  Features tokens(5, C);
  tokens.data = random_vector(tokens.data.size(), rng);
  LayerParams q = random_params("q", {C, C}, rng), k = random_params("k", {C, C}, rng),
              v = random_params("v", {C, C}, rng), o = random_params("o", {C, C}, rng);
  const ops::AttentionParams p{&q, &k, &v, &o};
  const auto r = random_vector(tokens.data.size(), rng);
  auto objective = [&] { return dot(r, ops::token_self_attention(tokens, p).data); };
  ops::AttentionCache cache;
  ops::token_self_attention(tokens, p, &cache);
  Features cot(tokens.rows, C);
  cot.data = r;
  for (auto* w : {&q, &k, &v, &o}) w->zero_grad();
  const Features d_tokens = ops::attention_backward(tokens, p, cache, cot);
  for (auto* w : {&q, &k, &v, &o}) {
    out.push_back(grad_check("attention " + w->name, fd_worst(w->values, w->grads, objective)));
  }
  out.push_back(grad_check("attention tokens", fd_worst(tokens.data, d_tokens.data, objective)));
}

void block_cases(std::uint64_t seed, std::vector<Check>& out) {
  std::mt19937_64 rng(seed + 31);
  {
    const int C = 8;
    SparseGrid g = random_grid({6, 6, 6}, 30, C, seed + 31);
    LayerParams w1 = random_params("fc1.weight", {2, C}, rng), b1 = random_params("fc1.bias", {2}, rng);
    LayerParams w2 = random_params("fc2.weight", {C, 2}, rng), b2 = random_params("fc2.bias", {C}, rng);
    const SeParams p{&w1, &b1, &w2, &b2};
    const auto r = random_vector(g.size() * C, rng);
    auto objective = [&] { return dot(r, sp_se(g, p).features.data); };
    SeCache cache;
    sp_se(g, p, &cache);
    Features cot(g.size(), C);
    cot.data = r;
    for (auto* w : {&w1, &b1, &w2, &b2}) w->zero_grad();
    const Features d_in = sp_se_backward(g, p, cache, cot);
    for (auto* w : {&w1, &b1, &w2, &b2}) {
      out.push_back(grad_check("sp_se " + w->name, fd_worst(w->values, w->grads, objective)));
    }
    out.push_back(grad_check("sp_se input", fd_worst(g.features.data, d_in.data, objective)));
  }
  {
    GDSCAConfig cfg;
    cfg.channels = 4;
    cfg.branches = 2;
    cfg.dilation_rates = {1, 2};
    SparseGrid g = random_grid({5, 5, 5}, 40, cfg.channels, seed + 32);
    LayerParams b0 = random_params("branch0", {1, 2, 2, 3, 3, 3}, rng, 0.5);
    LayerParams b1 = random_params("branch1", {1, 2, 2, 3, 3, 3}, rng, 0.5);
    LayerParams* ws[] = {&b0, &b1};
    const auto r = random_vector(g.size() * cfg.channels, rng);
    auto objective = [&] { return dot(r, gdsc_block(g, cfg, ws).features.data); };
    Features cot(g.size(), cfg.channels);
    cot.data = r;
    b0.zero_grad();
    b1.zero_grad();
    const Features d_in = gdsc_backward(g, cfg, ws, cot);
    out.push_back(grad_check("gdsc branch0", fd_worst(b0.values, b0.grads, objective)));
    out.push_back(grad_check("gdsc branch1", fd_worst(b1.values, b1.grads, objective)));
    out.push_back(grad_check("gdsc input", fd_worst(g.features.data, d_in.data, objective)));
  }
  {
    const int C = 4;
    SparseGrid g = random_grid({8, 8, 8}, 40, C, seed + 33);
    LayerParams q = random_params("q", {C, C}, rng, 0.5), k = random_params("k", {C, C}, rng, 0.5),
                v = random_params("v", {C, C}, rng, 0.5), o = random_params("o", {C, C}, rng, 0.5);
    const ops::AttentionParams p{&q, &k, &v, &o};
    const std::array<int, 3> patch{4, 4, 4};
    const auto r = random_vector(g.size() * C, rng);
    auto objective = [&] { return dot(r, patch_attention(g, patch, p).features.data); };
    PatchCache cache;
    patch_attention(g, patch, p, &cache);
    Features cot(g.size(), C);
    cot.data = r;
    for (auto* w : {&q, &k, &v, &o}) w->zero_grad();
    const Features d_in = patch_attention_backward(g, p, cache, cot);
    for (auto* w : {&q, &k, &v, &o}) {
      out.push_back(grad_check("patch attention " + w->name, fd_worst(w->values, w->grads, objective)));
    }
    out.push_back(grad_check("patch attention input", fd_worst(g.features.data, d_in.data, objective)));
  }
}

void loss_cases(std::uint64_t seed, std::vector<Check>& out) {
  std::mt19937_64 rng(seed + 41);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const SparseGrid g = random_grid({5, 5, 8}, 50, 1, seed + 41);
  std::vector<double> p(g.size());
  for (double& v : p) v = u(rng);
  std::vector<std::uint8_t> y(g.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (rng() & 1) ? 1 : 0;

  const auto bce = bce_loss_mean(p, y);
  out.push_back(grad_check("bce", fd_worst(p, bce.grad, [&] { return bce_loss_mean(p, y).value; })));

  STCConfig cfg;
  const auto w = stc_weights(g, p, cfg);
  const auto stc = stc_loss_mean(g, p, y, cfg);
  // weights held at their current values, as the detached gradient assumes
  auto detached = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += stc_loss(p[i], y[i], w[i], cfg.gamma);
    return s / static_cast<double>(p.size());
  };
  out.push_back(grad_check("stc detached", fd_worst(p, stc.grad, detached)));

  STCConfig live = cfg;
  live.detach_weights = false;
  const auto stc_live = stc_loss_mean(g, p, y, live);
  out.push_back(grad_check("stc through weights", fd_worst(p, stc_live.grad, [&] {
    return stc_loss_mean(g, p, y, live).value;
  })));
}

}  // namespace

LayerParams random_params(const std::string& name, std::vector<int> shape, std::mt19937_64& rng, double scale) {
  LayerParams p(name, std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : p.values) v = u(rng);
  return p;
}

double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

std::vector<Check> gradient_suite(std::uint64_t seed) {
  std::vector<Check> out;
  conv_cases(seed, out);
  resample_cases(seed, out);
  attention_cases(seed, out);
  block_cases(seed, out);
  loss_cases(seed, out);
  return out;
}

std::vector<Check> oracle_suite(std::uint64_t seed) {
  std::vector<Check> out;
  std::mt19937_64 rng(seed + 101);

  // fully active 6x6x6 grids
  for (const KernelSpec spec : {KernelSpec{{3, 3, 3}, 1, 3, 4, 1}, KernelSpec{{3, 3, 3}, 2, 4, 4, 2},
                                KernelSpec{{5, 3, 3}, 1, 2, 3, 1}}) {
    SparseGrid g = random_grid({6, 6, 6}, 216, spec.in_channels, rng());
    const LayerParams w = random_params("w", spec.param_shape(), rng);
    const Features got = ops::submanifold_conv(g, spec, w).features;
    const Features want = oracle::dense_conv(g, spec, w);
    double diff = 0.0;
    for (std::size_t i = 0; i < got.data.size(); ++i) diff = std::max(diff, std::abs(got.data[i] - want.data[i]));
    out.push_back({"dense conv k" + std::to_string(spec.size[0]) + " d" + std::to_string(spec.dilation) + " g" +
                       std::to_string(spec.groups),
                   diff, 1e-6, false});
  }
  {
    SparseGrid g = random_grid({6, 6, 6}, 20, 2, rng());
    const KernelSpec spec{{3, 3, 3}, 1, 2, 3, 1};
    const LayerParams w = random_params("w", spec.param_shape(), rng);
    const Features got = ops::submanifold_conv(g, spec, w).features;
    const Features want = oracle::dense_conv(g, spec, w);
    double diff = 0.0;
    for (std::size_t i = 0; i < got.data.size(); ++i) diff = std::max(diff, std::abs(got.data[i] - want.data[i]));
    out.push_back({"dense conv, 20 of 216 active", diff, 1e-6, false});
  }

  // G groups vs G separate convs on channel slices
  for (int G : {2, 4}) {
    const int cin = 8, cout = 4;
    SparseGrid g = random_grid({6, 6, 6}, 50, cin, rng());
    const KernelSpec spec{{3, 3, 3}, 1, cin, cout, G};
    const LayerParams w = random_params("w", spec.param_shape(), rng);
    const Features got = ops::submanifold_conv(g, spec, w).features;
    const int ig = cin / G, og = cout / G;
    const std::size_t per_group = w.size() / G;
    double diff = 0.0;
    for (int k = 0; k < G; ++k) {
      const KernelSpec one{{3, 3, 3}, 1, ig, og, 1};
      LayerParams wk("wk", one.param_shape());
      std::copy_n(w.values.begin() + k * per_group, per_group, wk.values.begin());
      const SparseGrid part = g.with_features(ops::slice_channels(g.features, k * ig, ig));
      const Features f = ops::submanifold_conv(part, one, wk).features;
      for (std::size_t i = 0; i < g.size(); ++i) {
        for (int o = 0; o < og; ++o) diff = std::max(diff, std::abs(f.at(i, o) - got.at(i, k * og + o)));
      }
    }
    out.push_back({"grouped conv G=" + std::to_string(G) + " vs slices", diff, 0.0, true});
  }

  // conf values are multiples of 1/256 so every summation order is exact
  for (const std::size_t n : {10, 25, 50, 100}) {
    for (const STCConfig& cfg : {STCConfig{}, STCConfig{5, 3, 2.0, true, true}}) {
      const SparseGrid g = random_grid({7, 7, 12}, n, 1, rng());
      std::vector<double> conf(n);
      for (double& c : conf) c = static_cast<double>(1 + rng() % 255) / 256.0;
      const auto got = stc_weights(g, conf, cfg);
      const auto want = oracle::stc_weights(g, conf, cfg);
      double diff = 0.0;
      for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(got[i] - want[i]));
      out.push_back({"stc_weights " + std::to_string(n) + " voxels k" + std::to_string(cfg.k) + " tau" +
                         std::to_string(cfg.tau) + (cfg.include_center ? " +center" : ""),
                     diff, 0.0, true});
    }
  }

  for (const std::size_t n : {1, 3, 7}) {
    const int C = 5;
    Features tokens(n, C);
    tokens.data = random_vector(tokens.data.size(), rng);
    LayerParams q = random_params("q", {C, C}, rng), k = random_params("k", {C, C}, rng),
                v = random_params("v", {C, C}, rng), o = random_params("o", {C, C}, rng);
    const ops::AttentionParams p{&q, &k, &v, &o};
    const Features got = ops::token_self_attention(tokens, p);
    const Features want = oracle::attention(tokens, p);
    double diff = 0.0;
    for (std::size_t i = 0; i < got.data.size(); ++i) diff = std::max(diff, std::abs(got.data[i] - want.data[i]));
    out.push_back({"attention " + std::to_string(n) + " tokens", diff, 1e-6, false});
  }
  return out;
}

std::vector<Check> loss_identity_suite(std::uint64_t seed) {
  std::vector<Check> out;
  std::mt19937_64 rng(seed + 201);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double gamma0 = 0.0, sym = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double p = u(rng), w = u(rng), gamma = 4.0 * u(rng);
    const std::uint8_t y = (rng() & 1) ? 1 : 0;
    gamma0 = std::max(gamma0, std::abs(stc_loss(p, y, w, 0.0) - bce_loss(p, y)));
    sym = std::max(sym, std::abs(stc_loss(p, 1, w, gamma) - stc_loss(1.0 - p, 0, 1.0 - w, gamma)));
  }
  out.push_back({"gamma=0 stc == bce, 1000 triples", gamma0, 0.0, true});
  out.push_back({"stc(p,1,w) == stc(1-p,0,1-w), 1000 triples", sym, 1e-12, false});
  out.push_back({"stc(0.5, 0, 0.5, 2) = 0.17329", std::abs(stc_loss(0.5, 0, 0.5, 2.0) - 0.17329), 1e-4, false});
  const double w3 = 1.0 / (1.0 + std::exp(-3.0));
  out.push_back({"stc(0.9, 1, sigmoid(3), 2) = 0.09561", std::abs(stc_loss(0.9, 1, w3, 2.0) - 0.09561), 1e-4, false});
  return out;
}

}  // namespace evuav::testing
