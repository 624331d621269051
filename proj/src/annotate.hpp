#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "event_core.hpp"

namespace evuav {

// Event counts of one accumulation window, row-major (y * width + x).
struct Frame {
  std::int64_t index = 0;  // covers [index * dt, (index + 1) * dt)
  int width = 0, height = 0;
  std::vector<std::uint32_t> counts;

  std::uint32_t at(int x, int y) const { return counts[static_cast<std::size_t>(y) * width + x]; }
};

// One frame per window from the first event's window through the last
// event's window, empty windows included. An empty stream yields no frames.
std::vector<Frame> accumulate_frames(const EventStream& stream, std::uint64_t delta_t_us);

// 8-bit binary PGM, counts scaled so the frame maximum maps to 255.
void write_pgm(const Frame& frame, const std::string& path);

// Half-open pixel box on one frame.
struct FrameBox {
  std::int64_t frame = 0;
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  friend bool operator==(const FrameBox&, const FrameBox&) = default;
};

struct SpaceTimeBox {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  std::uint64_t t_start = 0, t_end = 0;
};

SpaceTimeBox extrude(const FrameBox& box, std::uint64_t delta_t_us);

struct BoxFile {
  std::uint64_t delta_t_us = 50'000;
  std::vector<FrameBox> boxes;
};

// "delta_t_us <v>" header, then "frame x_min y_min x_max y_max" per line.
BoxFile read_boxes(const std::string& path);
BoxFile parse_boxes(const std::string& text, const std::string& origin = "<boxes>");
void write_boxes(const BoxFile& file, const std::string& path);

// 1 iff the event lies inside any extruded box. Boxes must be non-empty and
// within the sensor.
std::vector<std::uint8_t> boxes_to_event_labels(const EventStream& stream, std::span<const FrameBox> boxes,
                                                std::uint64_t delta_t_us);

// Tight boxes around the labeled events: per frame, one box per 8-connected
// pixel component of label-1 events, grown by `margin` px and clipped to the
// sensor.
std::vector<FrameBox> boxes_from_labels(const EventStream& stream, std::uint64_t delta_t_us, int margin = 0);

}  // namespace evuav
