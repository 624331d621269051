#include <algorithm>
#include <random>

#include "checks.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "sparse_ops.hpp"

using namespace evuav;
using evuav::testing::random_params;

namespace {

LayerParams identity_kernel(int C) {
  KernelSpec spec{{3, 3, 3}, 1, C, C, 1};
  LayerParams w("id", spec.param_shape());
  for (int c = 0; c < C; ++c) w.values[(static_cast<std::size_t>(c) * C + c) * 27 + 13] = 1.0;
  return w;
}

LayerParams identity_matrix(int C) {
  LayerParams w("eye", {C, C});
  for (int c = 0; c < C; ++c) w.values[static_cast<std::size_t>(c) * C + c] = 1.0;
  return w;
}

SparseGrid grid_of(GridDims dims, std::vector<VoxelKey> keys, std::vector<double> features, int C) {
  SparseGrid g;
  g.active = std::make_shared<const ActiveSet>(dims, std::move(keys));
  g.features = Features(g.active->size(), C);
  g.features.data = std::move(features);
  return g;
}

}  // namespace

TEST_CASE("identity kernel passes features through, forward and back") {
  const auto g = random_grid({6, 5, 7}, 60, 3, 1);
  LayerParams w = identity_kernel(3);
  const KernelSpec spec{{3, 3, 3}, 1, 3, 3, 1};
  const auto out = ops::submanifold_conv(g, spec, w);
  CHECK(out.features == g.features);
  CHECK(out.active == g.active);

  Features cot(g.size(), 3);
  std::mt19937_64 rng(2);
  for (double& v : cot.data) v = static_cast<double>(rng() % 1000) / 7.0;
  w.zero_grad();
  CHECK(ops::conv_backward(g, spec, w, cot) == cot);
}

TEST_CASE("single voxel under an all-ones kernel keeps its value") {
  const auto g = grid_of({5, 5, 5}, {{2, 2, 2}}, {0.75}, 1);
  LayerParams w("ones", {1, 1, 1, 3, 3, 3});
  std::fill(w.values.begin(), w.values.end(), 1.0);
  const auto out = ops::submanifold_conv(g, {{3, 3, 3}, 1, 1, 1, 1}, w);
  REQUIRE(out.size() == 1);
  CHECK(out.features.at(0, 0) == 0.75);
}

TEST_CASE("conv_backward: zero cotangent and accumulation") {
  std::mt19937_64 rng(3);
  const auto g = random_grid({5, 5, 5}, 30, 2, 3);
  const KernelSpec spec{{3, 3, 3}, 1, 2, 2, 1};
  LayerParams w = random_params("w", spec.param_shape(), rng);
  w.zero_grad();
  const Features zero(g.size(), 2);
  CHECK(ops::conv_backward(g, spec, w, zero) == zero);
  for (double v : w.grads) CHECK(v == 0.0);

  Features cot(g.size(), 2);
  for (double& v : cot.data) v = static_cast<double>(rng() % 100) / 8.0;
  ops::conv_backward(g, spec, w, cot);
  const auto once = w.grads;
  ops::conv_backward(g, spec, w, cot);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(w.grads[i] == 2.0 * once[i]);
}

TEST_CASE("dilation does not matter when only the center tap is set") {
  std::mt19937_64 rng(4);
  const auto g = random_grid({8, 8, 8}, 80, 2, 4);
  LayerParams w("w", {1, 3, 2, 3, 3, 3});
  for (int o = 0; o < 3; ++o)
    for (int c = 0; c < 2; ++c) w.values[(static_cast<std::size_t>(o) * 2 + c) * 27 + 13] = static_cast<double>(rng() % 9);
  const auto d1 = ops::submanifold_conv(g, {{3, 3, 3}, 1, 2, 3, 1}, w);
  for (int d : {2, 3, 5}) CHECK(ops::submanifold_conv(g, {{3, 3, 3}, d, 2, 3, 1}, w).features == d1.features);
}

TEST_CASE("kernel spec checks") {
  CHECK_THROWS(KernelSpec{{2, 3, 3}, 1, 1, 1, 1}.check());
  CHECK_THROWS(KernelSpec{{3, 3, 3}, 1, 3, 4, 2}.check());
  CHECK_THROWS(KernelSpec{{3, 3, 3}, 0, 1, 1, 1}.check());
  const auto g = random_grid({4, 4, 4}, 5, 2, 1);
  LayerParams bad("bad", {1, 1, 1, 3, 3, 3});
  CHECK_THROWS(ops::submanifold_conv(g, {{3, 3, 3}, 1, 2, 1, 1}, bad));
}

TEST_CASE("downsample: parents by floor division") {
  const auto g = grid_of({6, 8, 4}, {{4, 6, 2}, {5, 7, 3}}, {1.0, 5.0, 3.0, 2.0}, 2);
  const auto eye = identity_matrix(2);
  const auto d = ops::strided_downsample(g, {2, 2, 2}, eye);
  REQUIRE(d.grid.size() == 1);
  CHECK(d.grid.active->key(0) == VoxelKey{2, 3, 1});
  CHECK(d.grid.dims() == GridDims{3, 4, 2});
  CHECK(d.grid.features.at(0, 0) == 3.0);
  CHECK(d.grid.features.at(0, 1) == 5.0);
  CHECK(d.grid.voxel_size == VoxelSize{2, 2, 2000});
}

TEST_CASE("downsample: unit stride with identity map is the input") {
  const auto g = random_grid({6, 6, 6}, 40, 3, 5);
  const auto d = ops::strided_downsample(g, {1, 1, 1}, identity_matrix(3));
  CHECK(d.grid.features == g.features);
  CHECK(std::equal(d.grid.active->keys().begin(), d.grid.active->keys().end(), g.active->keys().begin(),
                   g.active->keys().end()));
}

TEST_CASE("downsample: single child gives W x") {
  std::mt19937_64 rng(6);
  const auto g = grid_of({4, 4, 4}, {{3, 1, 2}}, {0.5, -1.0}, 2);
  const auto w = random_params("w", {3, 2}, rng);
  const auto d = ops::strided_downsample(g, {2, 2, 2}, w);
  for (int o = 0; o < 3; ++o) CHECK(d.grid.features.at(0, o) == doctest::Approx(0.5 * w.values[o * 2] - w.values[o * 2 + 1]));
}

TEST_CASE("upsample: children receive their parent") {
  const auto child = grid_of({4, 4, 4}, {{0, 0, 0}, {1, 1, 1}, {3, 3, 3}}, {1, 2, 3}, 1);
  const auto eye = identity_matrix(1);
  const auto parent = ops::strided_downsample(child, {2, 2, 2}, eye).grid;
  REQUIRE(parent.size() == 2);
  const auto up = ops::upsample_to(parent, child, eye);
  CHECK(up.active == child.active);
  CHECK(up.features.data == std::vector<double>{2, 2, 3});
}

TEST_CASE("upsample: parent rows match a hand lookup") {
  std::mt19937_64 rng(7);
  const auto child = random_grid({9, 7, 11}, 120, 2, 7);
  const std::array<int, 3> stride{2, 3, 4};
  const auto parent = ops::strided_downsample(child, stride, random_params("w", {2, 2}, rng)).grid;
  const auto rows = ops::parent_rows(parent, child);
  for (std::size_t i = 0; i < child.size(); ++i) {
    const auto& k = child.active->key(i);
    const VoxelKey want{k.ix / 2, k.iy / 3, k.it / 4};
    const auto pk = parent.active->keys();
    const auto it = std::find(pk.begin(), pk.end(), want);
    REQUIRE(it != pk.end());
    CHECK(rows[i] == it - pk.begin());
  }
  const auto up = ops::upsample_to(parent, child, random_params("u", {3, 2}, rng));
  CHECK(up.active == child.active);
}

TEST_CASE("attention: one token") {
  std::mt19937_64 rng(8);
  const int C = 3;
  LayerParams q = random_params("q", {C, C}, rng), k = random_params("k", {C, C}, rng),
              v = random_params("v", {C, C}, rng), o = random_params("o", {C, C}, rng);
  Features t(1, C);
  t.data = {0.3, -0.2, 0.9};
  const auto y = ops::token_self_attention(t, {&q, &k, &v, &o});
  for (int i = 0; i < C; ++i) {
    double want = t.data[i];
    for (int j = 0; j < C; ++j) {
      double vj = 0.0;
      for (int c = 0; c < C; ++c) vj += v.values[j * C + c] * t.data[c];
      want += o.values[i * C + j] * vj;
    }
    CHECK(y.data[i] == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(ops::token_self_attention(Features(0, C), {&q, &k, &v, &o}).rows == 0);
}

TEST_CASE("attention: permuting tokens permutes the output") {
  std::mt19937_64 rng(9);
  const int C = 4;
  LayerParams q = random_params("q", {C, C}, rng), k = random_params("k", {C, C}, rng),
              v = random_params("v", {C, C}, rng), o = random_params("o", {C, C}, rng);
  const ops::AttentionParams p{&q, &k, &v, &o};
  Features t(5, C);
  for (double& x : t.data) x = static_cast<double>(rng() % 200) / 100.0 - 1.0;
  const std::vector<int> perm{3, 0, 4, 1, 2};
  Features tp(5, C);
  for (int i = 0; i < 5; ++i) std::copy_n(t.row(perm[i]), C, tp.row(i));
  const auto y = ops::token_self_attention(t, p), yp = ops::token_self_attention(tp, p);
  for (int i = 0; i < 5; ++i)
    for (int c = 0; c < C; ++c) CHECK(yp.at(i, c) == doctest::Approx(y.at(perm[i], c)).epsilon(1e-12));
}

TEST_CASE("finite-difference checks of every backward") {
  for (const auto& c : evuav::testing::gradient_suite(1)) {
    INFO(c.name << " error " << c.error);
    CHECK(c.passed());
  }
}

TEST_CASE("brute-force oracles") {
  for (const auto& c : evuav::testing::oracle_suite(1)) {
    INFO(c.name << " error " << c.error);
    CHECK(c.passed());
  }
}
