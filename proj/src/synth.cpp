#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "error.hpp"

namespace evuav {

void TrajectorySpec::check() const {
  require(radius >= 0.0, "TrajectorySpec: radius must be >= 0");
  require(event_rate >= 0.0, "TrajectorySpec: event_rate must be >= 0");
  require(std::isfinite(x0) && std::isfinite(y0) && std::isfinite(vx) && std::isfinite(vy) &&
              std::isfinite(amp_x) && std::isfinite(amp_y) && std::isfinite(freq_hz) && std::isfinite(phase),
          "TrajectorySpec: non-finite path parameter");
}

void SceneSpec::check() const {
  if (width <= 0 || height <= 0 || width > 65535 || height > 65535) {
    fail(ErrorKind::Validation, "scene: sensor must be between 1x1 and 65535x65535 px");
  }
  if (duration_us == 0) fail(ErrorKind::Validation, "scene: duration must be > 0");
  if (!(noise_rate >= 0.0)) fail(ErrorKind::Validation, "scene: noise_rate must be >= 0");
  if (edge_count < 0 || !(edge_rate >= 0.0)) fail(ErrorKind::Validation, "scene: edge settings must be >= 0");
  for (const auto& t : targets) t.check();
}

const std::vector<std::string>& scene_config_keys() {
  static const std::vector<std::string> keys = {
      "scene.width",     "scene.height",     "scene.duration_us", "scene.background",    "scene.edge_count",
      "scene.edge_speed", "scene.edge_rate", "scene.noise_rate",  "scene.targets",       "scene.target_rate",
      "scene.target_radius", "scene.target_speed"};
  return keys;
}

KeyValueConfig scene_config_defaults() {
  KeyValueConfig d;
  d.set("scene.width", "346");
  d.set("scene.height", "260");
  d.set("scene.duration_us", "8000000");
  d.set("scene.background", "drifting");
  d.set("scene.edge_count", "4");
  d.set("scene.edge_speed", "5");
  d.set("scene.edge_rate", "20");
  d.set("scene.noise_rate", "0.1");
  d.set("scene.targets", "1");
  d.set("scene.target_rate", "0.002");
  d.set("scene.target_radius", "2");
  d.set("scene.target_speed", "20");
  return d;
}

SceneSpec SceneSpec::from_config(const KeyValueConfig& user) {
  KeyValueConfig kv = scene_config_defaults();
  kv.merge(user);
  SceneSpec s;
  s.width = static_cast<int>(kv.get_int("scene.width", 0));
  s.height = static_cast<int>(kv.get_int("scene.height", 0));
  s.duration_us = kv.get_u64("scene.duration_us", 0);
  const std::string bg = kv.get_string("scene.background", "");
  if (bg == "none") s.background = Background::None;
  else if (bg == "static") s.background = Background::StaticEdges;
  else if (bg == "drifting") s.background = Background::DriftingEdges;
  else fail(ErrorKind::Validation, "scene.background must be none, static or drifting, got '" + bg + "'");
  s.edge_count = static_cast<int>(kv.get_int("scene.edge_count", 0));
  s.edge_speed = kv.get_double("scene.edge_speed", 0.0);
  s.edge_rate = kv.get_double("scene.edge_rate", 0.0);
  s.noise_rate = kv.get_double("scene.noise_rate", 0.0);
  s.seed = kv.get_u64("seed", 0);
  const auto n = kv.get_int("scene.targets", 0);
  if (n < 0) fail(ErrorKind::Validation, "scene.targets must be >= 0");
  const double rate = kv.get_double("scene.target_rate", 0.0);
  const double radius = kv.get_double("scene.target_radius", 0.0);
  const double speed = kv.get_double("scene.target_speed", 0.0);
  if (!(rate >= 0.0) || !(radius >= 0.0)) fail(ErrorKind::Validation, "scene: target rate and radius must be >= 0");
  s.check();
  s.targets = random_targets(static_cast<int>(n), s.width, s.height, speed, radius, rate, s.seed ^ 0x7a3c5e1full);
  return s;
}

std::vector<TrajectorySpec> random_targets(int count, int width, int height, double speed, double radius,
                                           double event_rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TrajectorySpec> out;
  for (int i = 0; i < count; ++i) {
    TrajectorySpec t;
    t.x0 = width * (0.2 + 0.6 * u(rng));
    t.y0 = height * (0.2 + 0.6 * u(rng));
    const double heading = 2.0 * std::numbers::pi * u(rng);
    t.vx = speed * std::cos(heading);
    t.vy = speed * std::sin(heading);
    t.amp_x = 10.0 * u(rng);
    t.amp_y = 10.0 * u(rng);
    t.freq_hz = 0.1 + 0.4 * u(rng);
    t.phase = 2.0 * std::numbers::pi * u(rng);
    t.radius = radius;
    t.event_rate = event_rate;
    out.push_back(t);
  }
  return out;
}

namespace {

struct Sample {
  Event e;
  std::uint8_t label;
};

// Poisson arrival times in [0, duration) for a process of `rate` events/us.
template <class Fn>
void poisson_arrivals(std::mt19937_64& rng, double rate, std::uint64_t duration_us, Fn&& emit) {
  if (rate <= 0.0) return;
  std::exponential_distribution<double> gap(rate);
  const double end = static_cast<double>(duration_us);
  for (double t = gap(rng); t < end; t += gap(rng)) emit(static_cast<std::uint64_t>(t));
}

bool in_bounds(double x, double y, int w, int h) {
  return x >= 0.0 && y >= 0.0 && x < static_cast<double>(w) && y < static_cast<double>(h);
}

Event make_event(std::uint64_t t, double x, double y, int pol) {
  return {t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), static_cast<std::int8_t>(pol)};
}

void add_target(const SceneSpec& spec, const TrajectorySpec& tr, std::mt19937_64& rng, std::vector<Sample>& out) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double w = 2.0 * std::numbers::pi * tr.freq_hz;
  const double maxx = std::nextafter(static_cast<double>(spec.width), 0.0);
  const double maxy = std::nextafter(static_cast<double>(spec.height), 0.0);
  poisson_arrivals(rng, tr.event_rate, spec.duration_us, [&](std::uint64_t t) {
    const double s = static_cast<double>(t) * 1e-6;
    const double cx = tr.x0 + tr.vx * s + tr.amp_x * std::sin(w * s + tr.phase);
    const double cy = tr.y0 + tr.vy * s + tr.amp_y * std::sin(w * s + tr.phase + std::numbers::pi / 2);
    const double dxds = tr.vx + tr.amp_x * w * std::cos(w * s + tr.phase);
    const double r = tr.radius * std::sqrt(u(rng));
    const double a = 2.0 * std::numbers::pi * u(rng);
    const double x = std::clamp(cx + r * std::cos(a), 0.0, maxx);
    const double y = std::clamp(cy + r * std::sin(a), 0.0, maxy);
    out.push_back({make_event(t, x, y, dxds < 0.0 ? -1 : 1), 1});
  });
}

void add_edges(const SceneSpec& spec, std::mt19937_64& rng, std::vector<Sample>& out) {
  if (spec.background == Background::None) return;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < spec.edge_count; ++i) {
    const double cx = spec.width * u(rng), cy = spec.height * u(rng);
    const double theta = std::numbers::pi * u(rng);
    const double len = 20.0 + 60.0 * u(rng);
    const double dir = u(rng) < 0.5 ? -1.0 : 1.0;
    const double ux = std::cos(theta), uy = std::sin(theta);
    const double nx = -uy * dir, ny = ux * dir;
    const bool drifting = spec.background == Background::DriftingEdges;
    const double rate = spec.edge_rate * len * 1e-6;
    poisson_arrivals(rng, rate, spec.duration_us, [&](std::uint64_t t) {
      const double along = len * (u(rng) - 0.5);
      const double shift = (drifting ? spec.edge_speed * static_cast<double>(t) * 1e-6 : 0.0) + (u(rng) - 0.5);
      const double x = cx + ux * along + nx * shift, y = cy + uy * along + ny * shift;
      const int pol = drifting ? 1 : (u(rng) < 0.5 ? -1 : 1);
      if (in_bounds(x, y, spec.width, spec.height)) out.push_back({make_event(t, x, y, pol), 0});
    });
  }
}

void add_noise(const SceneSpec& spec, std::mt19937_64& rng, std::vector<Sample>& out) {
  const double rate = spec.noise_rate * spec.width * spec.height * 1e-6;
  std::uniform_int_distribution<int> ux(0, spec.width - 1), uy(0, spec.height - 1), up(0, 1);
  poisson_arrivals(rng, rate, spec.duration_us, [&](std::uint64_t t) {
    const int x = ux(rng), y = uy(rng);
    out.push_back({make_event(t, x, y, up(rng) ? 1 : -1), 0});
  });
}

}  // namespace

EventStream generate(const SceneSpec& spec) {
  spec.check();
  // One generator per source so adding a target does not reshuffle the noise.
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < spec.targets.size(); ++i) {
    std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ull + 1 + i);
    add_target(spec, spec.targets[i], rng, samples);
  }
  std::mt19937_64 edge_rng(spec.seed ^ 0xed6e5eedull);
  add_edges(spec, edge_rng, samples);
  std::mt19937_64 noise_rng(spec.seed ^ 0x4015e5eedull);
  add_noise(spec, noise_rng, samples);

  std::stable_sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.e.t < b.e.t; });
  EventStream s;
  s.width = spec.width;
  s.height = spec.height;
  s.events.reserve(samples.size());
  std::vector<std::uint8_t> labels;
  labels.reserve(samples.size());
  for (const auto& smp : samples) {
    s.events.push_back(smp.e);
    labels.push_back(smp.label);
  }
  s.labels = std::move(labels);
  return s;
}

CurveStats curve_stats(const EventStream& stream, double us_per_px) {
  require(stream.has_labels(), "curve_stats: stream has no labels");
  require(us_per_px > 0.0, "curve_stats: us_per_px must be positive");
  CurveStats cs;
  const auto& ev = stream.events;
  const auto& lab = *stream.labels;
  double sum_t = 0.0, sum_o = 0.0;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    (lab[i] ? cs.target_events : cs.other_events)++;
    double best = std::numeric_limits<double>::infinity();
    auto visit = [&](std::size_t j) {
      const double dt = (static_cast<double>(ev[j].t) - static_cast<double>(ev[i].t)) / us_per_px;
      if (dt * dt >= best) return false;
      const double dx = static_cast<double>(ev[j].x) - ev[i].x, dy = static_cast<double>(ev[j].y) - ev[i].y;
      best = std::min(best, dx * dx + dy * dy + dt * dt);
      return true;
    };
    for (std::size_t j = i + 1; j < ev.size() && visit(j); ++j) {
    }
    for (std::size_t j = i; j-- > 0 && visit(j);) {
    }
    if (!std::isfinite(best)) continue;
    (lab[i] ? sum_t : sum_o) += std::sqrt(best);
  }
  if (ev.size() >= 2) {
    if (cs.target_events) cs.target_mean_nn = sum_t / static_cast<double>(cs.target_events);
    if (cs.other_events) cs.other_mean_nn = sum_o / static_cast<double>(cs.other_events);
  }
  return cs;
}

}  // namespace evuav
