#include "event_core.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "error.hpp"

namespace evuav {

namespace {

constexpr std::array<char, 8> kEventMagic = {'E', 'V', 'U', 'A', 'V', 'E', 'V', '1'};
constexpr std::array<char, 8> kLabelMagic = {'E', 'V', 'U', 'A', 'V', 'L', 'B', '1'};

[[noreturn]] void parse_error(const std::string& path, std::size_t line, const std::string& what) {
  fail(ErrorKind::Parse, path + ":" + std::to_string(line) + ": " + what);
}

// Splits on runs of spaces/tabs.
std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t b = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > b) out.push_back(line.substr(b, i - b));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

void check_bounds(const EventStream& s, const Event& e, const std::string& where) {
  if (e.x >= s.width || e.y >= s.height) {
    fail(ErrorKind::Validation, where + ": event (" + std::to_string(e.x) + ", " + std::to_string(e.y) +
                                    ") outside sensor " + std::to_string(s.width) + "x" +
                                    std::to_string(s.height));
  }
}

LoadResult load_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  LoadResult result;
  EventStream& s = result.stream;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = fields(line);
    if (f.empty()) continue;
    if (!have_header) {
      if (f.size() != 2 || !parse_number(f[0], s.width) || !parse_number(f[1], s.height) || s.width <= 0 ||
          s.height <= 0 || s.width > 65535 || s.height > 65535) {
        parse_error(path, line_no, "expected header '<width> <height>'");
      }
      have_header = true;
      continue;
    }
    Event e;
    int x = 0, y = 0, pol = 0;
    if (f.size() != 4 || !parse_number(f[0], e.t) || !parse_number(f[1], x) || !parse_number(f[2], y) ||
        !parse_number(f[3], pol)) {
      parse_error(path, line_no, "expected '<t_us> <x> <y> <pol>'");
    }
    if (pol != -1 && pol != 0 && pol != 1) parse_error(path, line_no, "polarity must be -1, 0 or 1");
    if (x < 0 || y < 0 || x > 65535 || y > 65535) {
      fail(ErrorKind::Validation, path + ":" + std::to_string(line_no) + ": coordinate out of range");
    }
    e.x = static_cast<std::uint16_t>(x);
    e.y = static_cast<std::uint16_t>(y);
    e.pol = pol > 0 ? 1 : -1;
    check_bounds(s, e, path + ":" + std::to_string(line_no));
    s.events.push_back(e);
  }
  if (!have_header) parse_error(path, line_no + 1, "missing header '<width> <height>'");
  return result;
}

constexpr std::size_t kRecordBytes = 8 + 2 + 2 + 1;

LoadResult load_binary(const std::string& path) {
  const std::string bytes = binio::read_file(path);
  binio::Reader r(bytes, path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kEventMagic.data(), 8) != 0) {
    fail(ErrorKind::Parse, path + ": missing EVUAVEV1 magic");
  }
  r.skip(8);
  LoadResult result;
  EventStream& s = result.stream;
  s.width = r.u16();
  s.height = r.u16();
  if (s.width == 0 || s.height == 0) fail(ErrorKind::Parse, path + ": zero sensor dimension");
  const std::size_t body = bytes.size() - 12;
  if (body % kRecordBytes != 0) {
    fail(ErrorKind::Parse, path + ": record " + std::to_string(body / kRecordBytes) + " truncated");
  }
  const std::size_t n = body / kRecordBytes;
  s.events.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Event& e = s.events[i];
    e.t = r.u64();
    e.x = r.u16();
    e.y = r.u16();
    const auto pol = r.i8();
    if (pol != 1 && pol != -1) fail(ErrorKind::Parse, path + ": record " + std::to_string(i) + ": bad polarity");
    e.pol = pol;
    check_bounds(s, e, path + ": record " + std::to_string(i));
  }
  return result;
}

}  // namespace

void validate(const EventStream& s) {
  if (s.width <= 0 || s.height <= 0) fail(ErrorKind::Validation, "sensor dimensions must be positive");
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const Event& e = s.events[i];
    check_bounds(s, e, "event " + std::to_string(i));
    if (e.pol != 1 && e.pol != -1) fail(ErrorKind::Validation, "event " + std::to_string(i) + ": bad polarity");
    if (i > 0 && e.t < s.events[i - 1].t) {
      fail(ErrorKind::Validation, "event " + std::to_string(i) + ": timestamps not sorted");
    }
  }
  if (s.labels) {
    if (s.labels->size() != s.events.size()) {
      fail(ErrorKind::Validation, "label count " + std::to_string(s.labels->size()) + " != event count " +
                                      std::to_string(s.events.size()));
    }
    for (auto l : *s.labels) {
      if (l > 1) fail(ErrorKind::Validation, "labels must be 0 or 1");
    }
  }
}

std::size_t sort_by_time(EventStream& s) {
  std::size_t descents = 0;
  for (std::size_t i = 1; i < s.events.size(); ++i) descents += s.events[i].t < s.events[i - 1].t;
  if (descents == 0) return 0;
  std::vector<std::size_t> order(s.events.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s.events[a].t < s.events[b].t; });
  std::vector<Event> events(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) events[i] = s.events[order[i]];
  s.events = std::move(events);
  if (s.labels && s.labels->size() == order.size()) {
    std::vector<std::uint8_t> labels(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) labels[i] = (*s.labels)[order[i]];
    s.labels = std::move(labels);
  }
  return descents;
}

EventFormat detect_format(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::array<char, 8> head{};
  in.read(head.data(), head.size());
  return (in.gcount() == 8 && head == kEventMagic) ? EventFormat::Binary : EventFormat::Text;
}

LoadResult load_events(const std::string& path, EventFormat format) {
  LoadResult result = format == EventFormat::Text ? load_text(path) : load_binary(path);
  result.sort_warnings = sort_by_time(result.stream);
  return result;
}

LoadResult load_events(const std::string& path) { return load_events(path, detect_format(path)); }

void write_events(const EventStream& s, const std::string& path, EventFormat format) {
  if (format == EventFormat::Text) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path);
    out << s.width << ' ' << s.height << '\n';
    for (const Event& e : s.events) {
      out << e.t << ' ' << e.x << ' ' << e.y << ' ' << static_cast<int>(e.pol) << '\n';
    }
    if (!out) fail(ErrorKind::Io, "write failed for " + path);
    return;
  }
  binio::Writer w;
  w.bytes(kEventMagic.data(), kEventMagic.size());
  w.u16(static_cast<std::uint16_t>(s.width));
  w.u16(static_cast<std::uint16_t>(s.height));
  for (const Event& e : s.events) {
    w.u64(e.t);
    w.u16(e.x);
    w.u16(e.y);
    w.i8(e.pol);
  }
  w.save(path);
}

std::vector<std::uint8_t> load_labels(const std::string& path) {
  const std::string bytes = binio::read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kLabelMagic.data(), 8) != 0) {
    fail(ErrorKind::Parse, path + ": missing EVUAVLB1 magic");
  }
  binio::Reader r(bytes, path);
  r.skip(8);
  const std::uint64_t count = r.u64();
  if (bytes.size() - 16 != count) {
    fail(ErrorKind::Parse, path + ": header says " + std::to_string(count) + " labels, file holds " +
                               std::to_string(bytes.size() - 16));
  }
  std::vector<std::uint8_t> labels(bytes.begin() + 16, bytes.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) fail(ErrorKind::Parse, path + ": label " + std::to_string(i) + " is not 0/1");
  }
  return labels;
}

void write_labels(std::span<const std::uint8_t> labels, const std::string& path) {
  binio::Writer w;
  w.bytes(kLabelMagic.data(), kLabelMagic.size());
  w.u64(labels.size());
  w.bytes(reinterpret_cast<const char*>(labels.data()), labels.size());
  w.save(path);
}

void attach_labels(EventStream& stream, const std::string& path) {
  auto labels = load_labels(path);
  if (labels.size() != stream.size()) {
    fail(ErrorKind::Validation, path + ": " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(stream.size()) + " events");
  }
  stream.labels = std::move(labels);
}

EventStream slice_window(const EventStream& s, std::uint64_t t0, std::uint64_t t1) {
  require(t0 < t1, "slice_window: t0 must be < t1");
  const auto by_t = [](const Event& e, std::uint64_t t) { return e.t < t; };
  const auto b = std::lower_bound(s.events.begin(), s.events.end(), t0, by_t);
  const auto e = std::lower_bound(b, s.events.end(), t1, by_t);
  EventStream out;
  out.width = s.width;
  out.height = s.height;
  out.events.assign(b, e);
  if (s.labels) {
    const auto off = b - s.events.begin();
    out.labels.emplace(s.labels->begin() + off, s.labels->begin() + (e - s.events.begin()));
  }
  return out;
}

}  // namespace evuav
