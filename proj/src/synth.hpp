#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "config.hpp"
#include "event_core.hpp"

namespace evuav {

// Target path: linear drift plus a sinusoidal wobble, in pixels and seconds.
//   x(s) = x0 + vx s + amp_x sin(2 pi freq s + phase)
//   y(s) = y0 + vy s + amp_y sin(2 pi freq s + phase + pi/2)
// Positions leaving the sensor are clipped to its border.
struct TrajectorySpec {
  double x0 = 100.0, y0 = 100.0;
  double vx = 10.0, vy = 0.0;  // px/s
  double amp_x = 0.0, amp_y = 0.0;
  double freq_hz = 0.0;
  double phase = 0.0;
  double radius = 2.0;        // px, events jitter uniformly inside the disc
  double event_rate = 0.002;  // events/us

  void check() const;
};

enum class Background { None, StaticEdges, DriftingEdges };

struct SceneSpec {
  int width = 346, height = 260;
  std::uint64_t duration_us = 8'000'000;
  std::vector<TrajectorySpec> targets;
  Background background = Background::None;
  int edge_count = 0;
  double edge_speed = 5.0;      // px/s, drifting edges only
  double edge_rate = 2.0;       // events per px of edge length per second
  double noise_rate = 0.0;      // events/px/s
  std::uint64_t seed = 0;

  void check() const;

  // Keys: scene.width, scene.height, scene.duration_us, scene.background
  // (none|static|drifting), scene.edge_count, scene.edge_speed, scene.edge_rate,
  // scene.noise_rate, scene.targets (count of random targets), scene.target_rate,
  // scene.target_radius, scene.target_speed; plus `seed`.
  static SceneSpec from_config(const KeyValueConfig& kv);
};

const std::vector<std::string>& scene_config_keys();
KeyValueConfig scene_config_defaults();

// Places `count` targets with random start, heading and wobble, all of the
// given rate, radius and speed. Deterministic in `seed`.
std::vector<TrajectorySpec> random_targets(int count, int width, int height, double speed, double radius,
                                           double event_rate, std::uint64_t seed);

// Labeled stream: target events 1, background and noise 0, time sorted.
EventStream generate(const SceneSpec& spec);

struct CurveStats {
  std::size_t target_events = 0, other_events = 0;
  std::optional<double> target_mean_nn;  // absent when the class is empty or has no neighbor
  std::optional<double> other_mean_nn;
};

// Mean distance from each event to its nearest other event (any class), in
// the metric sqrt(dx^2 + dy^2 + (dt / us_per_px)^2), grouped by the label of
// the query event.
CurveStats curve_stats(const EventStream& stream, double us_per_px = 1000.0);

}  // namespace evuav
