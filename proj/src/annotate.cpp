#include "annotate.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "error.hpp"

namespace evuav {

std::vector<Frame> accumulate_frames(const EventStream& stream, std::uint64_t delta_t_us) {
  require(delta_t_us > 0, "accumulate_frames: delta_t must be > 0");
  std::vector<Frame> frames;
  if (stream.empty()) return frames;
  const auto first = static_cast<std::int64_t>(stream.events.front().t / delta_t_us);
  const auto last = static_cast<std::int64_t>(stream.events.back().t / delta_t_us);
  const std::size_t cells = static_cast<std::size_t>(stream.width) * static_cast<std::size_t>(stream.height);
  frames.resize(static_cast<std::size_t>(last - first + 1));
  for (std::size_t f = 0; f < frames.size(); ++f) {
    frames[f].index = first + static_cast<std::int64_t>(f);
    frames[f].width = stream.width;
    frames[f].height = stream.height;
    frames[f].counts.assign(cells, 0);
  }
  for (const Event& e : stream.events) {
    Frame& fr = frames[static_cast<std::size_t>(static_cast<std::int64_t>(e.t / delta_t_us) - first)];
    ++fr.counts[static_cast<std::size_t>(e.y) * fr.width + e.x];
  }
  return frames;
}

void write_pgm(const Frame& frame, const std::string& path) {
  const std::uint32_t peak = frame.counts.empty() ? 0 : *std::max_element(frame.counts.begin(), frame.counts.end());
  binio::Writer w;
  const std::string header = "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
  w.bytes(header.data(), header.size());
  for (const auto c : frame.counts) {
    w.u8(peak ? static_cast<std::uint8_t>((static_cast<std::uint64_t>(c) * 255 + peak / 2) / peak) : 0);
  }
  w.save(path);
}

SpaceTimeBox extrude(const FrameBox& b, std::uint64_t delta_t_us) {
  const auto t0 = static_cast<std::uint64_t>(b.frame) * delta_t_us;
  return {b.x_min, b.y_min, b.x_max, b.y_max, t0, t0 + delta_t_us};
}

BoxFile parse_boxes(const std::string& text, const std::string& origin) {
  BoxFile f;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool header = false;
  auto bad = [&](const std::string& what) { fail(ErrorKind::Parse, origin + ":" + std::to_string(line_no) + ": " + what); };
  while (std::getline(in, line)) {
    ++line_no;
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream ls(line);
    if (!header) {
      std::string key;
      long long dt = 0;
      if (!(ls >> key >> dt) || key != "delta_t_us") bad("expected 'delta_t_us <value>' header");
      if (dt <= 0) bad("delta_t_us must be positive");
      f.delta_t_us = static_cast<std::uint64_t>(dt);
      header = true;
      continue;
    }
    FrameBox b;
    long long frame = 0;
    if (!(ls >> frame >> b.x_min >> b.y_min >> b.x_max >> b.y_max)) bad("expected 'frame x_min y_min x_max y_max'");
    std::string rest;
    if (ls >> rest) bad("trailing text '" + rest + "'");
    b.frame = frame;
    f.boxes.push_back(b);
  }
  if (!header) fail(ErrorKind::Parse, origin + ": missing 'delta_t_us' header");
  return f;
}

BoxFile read_boxes(const std::string& path) { return parse_boxes(binio::read_file(path), path); }

void write_boxes(const BoxFile& file, const std::string& path) {
  std::string text = "delta_t_us " + std::to_string(file.delta_t_us) + "\n";
  for (const auto& b : file.boxes) {
    text += std::to_string(b.frame) + " " + std::to_string(b.x_min) + " " + std::to_string(b.y_min) + " " +
            std::to_string(b.x_max) + " " + std::to_string(b.y_max) + "\n";
  }
  binio::Writer w;
  w.bytes(text.data(), text.size());
  w.save(path);
}

std::vector<std::uint8_t> boxes_to_event_labels(const EventStream& stream, std::span<const FrameBox> boxes,
                                                std::uint64_t delta_t_us) {
  require(delta_t_us > 0, "boxes_to_event_labels: delta_t must be > 0");
  std::map<std::int64_t, std::vector<FrameBox>> by_frame;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const FrameBox& b = boxes[i];
    if (b.frame < 0 || b.x_min < 0 || b.y_min < 0 || b.x_min >= b.x_max || b.y_min >= b.y_max ||
        b.x_max > stream.width || b.y_max > stream.height) {
      fail(ErrorKind::Validation, "box " + std::to_string(i) + " (frame " + std::to_string(b.frame) + ", " +
                                      std::to_string(b.x_min) + " " + std::to_string(b.y_min) + " " +
                                      std::to_string(b.x_max) + " " + std::to_string(b.y_max) +
                                      ") is empty or outside the " + std::to_string(stream.width) + "x" +
                                      std::to_string(stream.height) + " sensor");
    }
    by_frame[b.frame].push_back(b);
  }
  std::vector<std::uint8_t> labels(stream.size(), 0);
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const Event& e = stream.events[i];
    const auto it = by_frame.find(static_cast<std::int64_t>(e.t / delta_t_us));
    if (it == by_frame.end()) continue;
    for (const FrameBox& b : it->second) {
      if (e.x >= b.x_min && e.x < b.x_max && e.y >= b.y_min && e.y < b.y_max) {
        labels[i] = 1;
        break;
      }
    }
  }
  return labels;
}

std::vector<FrameBox> boxes_from_labels(const EventStream& stream, std::uint64_t delta_t_us, int margin) {
  require(stream.has_labels(), "boxes_from_labels: stream has no labels");
  require(delta_t_us > 0 && margin >= 0, "boxes_from_labels: need delta_t > 0 and margin >= 0");
  std::map<std::int64_t, std::vector<std::pair<int, int>>> pixels;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    if (!(*stream.labels)[i]) continue;
    const Event& e = stream.events[i];
    pixels[static_cast<std::int64_t>(e.t / delta_t_us)].emplace_back(e.x, e.y);
  }
  std::vector<FrameBox> out;
  for (auto& [frame, px] : pixels) {
    std::sort(px.begin(), px.end());
    px.erase(std::unique(px.begin(), px.end()), px.end());
    std::vector<char> seen(px.size(), 0);
    for (std::size_t s = 0; s < px.size(); ++s) {
      if (seen[s]) continue;
      seen[s] = 1;
      FrameBox b{frame, px[s].first, px[s].second, px[s].first + 1, px[s].second + 1};
      std::vector<std::size_t> stack{s};
      while (!stack.empty()) {
        const auto [x, y] = px[stack.back()];
        stack.pop_back();
        b.x_min = std::min(b.x_min, x);
        b.y_min = std::min(b.y_min, y);
        b.x_max = std::max(b.x_max, x + 1);
        b.y_max = std::max(b.y_max, y + 1);
        for (int dx = -1; dx <= 1; ++dx) {
          for (int dy = -1; dy <= 1; ++dy) {
            const auto it = std::lower_bound(px.begin(), px.end(), std::pair{x + dx, y + dy});
            if (it == px.end() || *it != std::pair{x + dx, y + dy}) continue;
            const auto k = static_cast<std::size_t>(it - px.begin());
            if (!seen[k]) {
              seen[k] = 1;
              stack.push_back(k);
            }
          }
        }
      }
      b.x_min = std::max(0, b.x_min - margin);
      b.y_min = std::max(0, b.y_min - margin);
      b.x_max = std::min(stream.width, b.x_max + margin);
      b.y_max = std::min(stream.height, b.y_max + margin);
      out.push_back(b);
    }
  }
  return out;
}

}  // namespace evuav
