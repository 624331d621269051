#include <cmath>
#include <random>

#include "checks.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "losses.hpp"

using namespace evuav;

namespace {

SparseGrid line_grid(std::vector<VoxelKey> keys) {
  SparseGrid g;
  g.active = std::make_shared<const ActiveSet>(GridDims{10, 10, 10}, std::move(keys));
  g.features = Features(g.active->size(), 1);
  return g;
}

}  // namespace

TEST_CASE("bce values") {
  CHECK(bce_loss(1.0 - kProbEpsilon, 1) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(bce_loss(std::exp(-1.0), 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bce_loss(0.5, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(0.5, 1) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(bce_loss(0.0, 1) == doctest::Approx(-std::log(kProbEpsilon)));
  CHECK(std::isfinite(bce_loss(1.0, 0)));
}

TEST_CASE("bce mean and gradient") {
  const std::vector<double> p{0.2, 0.7, 0.9};
  const std::vector<std::uint8_t> y{0, 1, 0};
  const auto r = bce_loss_mean(p, y);
  CHECK(r.value == doctest::Approx((-std::log(0.8) - std::log(0.7) - std::log(0.1)) / 3.0));
  CHECK(r.grad[0] == doctest::Approx(1.0 / 0.8 / 3.0));
  CHECK(r.grad[1] == doctest::Approx(-1.0 / 0.7 / 3.0));
}

TEST_CASE("stc weights: isolated voxel and three certain neighbors") {
  const auto g = line_grid({{5, 5, 0}, {4, 4, 5}, {5, 4, 5}, {5, 5, 5}, {6, 6, 6}});
  const std::vector<double> conf{0.9, 1.0, 1.0, 0.3, 1.0};
  const auto w = stc_weights(g, conf, STCConfig{});
  CHECK(w[0] == 0.5);
  // (5,5,5) sees (4,4,5), (5,4,5) and (6,6,6)
  CHECK(w[3] == doctest::Approx(0.95257).epsilon(1e-5));
  CHECK(w[3] == 1.0 / (1.0 + std::exp(-3.0)));
}

TEST_CASE("stc weights: center toggle and range") {
  const auto g = random_grid({8, 8, 8}, 60, 1, 4);
  std::mt19937_64 rng(4);
  std::vector<double> conf(g.size());
  for (double& c : conf) c = static_cast<double>(rng() % 1000) / 1000.0;
  STCConfig with = STCConfig{};
  with.include_center = true;
  const auto a = stc_weights(g, conf, STCConfig{}), b = stc_weights(g, conf, with);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(a[i] >= 0.5);
    CHECK(a[i] < 1.0);
    CHECK(b[i] >= a[i]);
  }
}

TEST_CASE("stc values") {
  CHECK(stc_loss(0.5, 0, 0.5, 2.0) == doctest::Approx(0.17329).epsilon(1e-4));
  CHECK(stc_loss(0.9, 1, 0.95257, 2.0) == doctest::Approx(0.09561).epsilon(1e-4));
}

TEST_CASE("stc is monotone in w") {
  for (double p : {0.1, 0.5, 0.8}) {
    double prev_pos = -1.0, prev_neg = 1e9;
    for (double w = 0.5; w < 1.0; w += 0.05) {
      CHECK(stc_loss(p, 1, w, 2.0) > prev_pos);
      CHECK(stc_loss(p, 0, w, 2.0) < prev_neg);
      prev_pos = stc_loss(p, 1, w, 2.0);
      prev_neg = stc_loss(p, 0, w, 2.0);
    }
  }
}

TEST_CASE("identities on random triples") {
  for (const auto& c : evuav::testing::loss_identity_suite(3)) {
    INFO(c.name << " error " << c.error);
    CHECK(c.passed());
  }
}

TEST_CASE("stc mean gradient with weights held fixed, 1e-6") {
  const auto g = random_grid({6, 6, 10}, 50, 1, 5);
  std::mt19937_64 rng(5);
  std::vector<double> p(g.size());
  for (double& v : p) v = 0.05 + 0.9 * static_cast<double>(rng() % 1000) / 1000.0;
  std::vector<std::uint8_t> y(g.size());
  for (auto& v : y) v = rng() % 3 == 0;
  const STCConfig cfg;
  const auto w = stc_weights(g, p, cfg);
  const auto r = stc_loss_mean(g, p, y, cfg);
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto f = [&](double pi) {
      double s = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) s += stc_loss(j == i ? pi : p[j], y[j], w[j], cfg.gamma);
      return s / static_cast<double>(p.size());
    };
    const double h = 1e-5;
    const double num = (f(p[i] + h) - f(p[i] - h)) / (2 * h);
    CHECK(evuav::testing::rel_error(r.grad[i], num, 1e-12) < 1e-6);
  }
}

TEST_CASE("stc with gamma 0 matches bce over a grid") {
  const auto g = random_grid({6, 6, 10}, 40, 1, 6);
  std::vector<double> p(g.size(), 0.3);
  std::vector<std::uint8_t> y(g.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 2;
  STCConfig cfg;
  cfg.gamma = 0.0;
  const auto a = stc_loss_mean(g, p, y, cfg), b = bce_loss_mean(p, y);
  CHECK(a.value == b.value);
  CHECK(a.grad == b.grad);
}

TEST_CASE("stc config checks") {
  CHECK_THROWS(STCConfig{2, 5, 2.0}.check());
  CHECK_THROWS(STCConfig{3, 0, 2.0}.check());
  CHECK_THROWS(STCConfig{3, 5, -1.0}.check());
}
