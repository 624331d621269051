#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evuav {

// One camera event. Timestamps are integer microseconds.
struct Event {
  std::uint64_t t = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t pol = 1;  // -1 or +1

  friend bool operator==(const Event&, const Event&) = default;
};

// Time-ordered events plus sensor geometry. `labels`, when present, holds one
// 0/1 entry per event, 1 marking an event produced by a target.
struct EventStream {
  std::vector<Event> events;
  int width = 0;
  int height = 0;
  std::optional<std::vector<std::uint8_t>> labels;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
  bool has_labels() const { return labels.has_value(); }

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

enum class EventFormat { Text, Binary };

struct LoadResult {
  EventStream stream;
  std::size_t sort_warnings = 0;  // adjacent pairs found out of time order
};

// Throws a validation error if any event or the label vector breaks the
// stream invariants.
void validate(const EventStream& stream);

// Stable-sorts by timestamp (labels move with their events); returns the
// number of adjacent out-of-order pairs seen before sorting.
std::size_t sort_by_time(EventStream& stream);

LoadResult load_events(const std::string& path, EventFormat format);
// Picks the format from the file's leading magic bytes.
LoadResult load_events(const std::string& path);
EventFormat detect_format(const std::string& path);
void write_events(const EventStream& stream, const std::string& path, EventFormat format);

// Label sidecar: "EVUAVLB1", u64 count, then one byte per event.
std::vector<std::uint8_t> load_labels(const std::string& path);
void write_labels(std::span<const std::uint8_t> labels, const std::string& path);
// Loads labels and attaches them, checking the count against the stream.
void attach_labels(EventStream& stream, const std::string& path);

// Events with t0 <= t < t1, labels sliced alongside. Timestamps are kept absolute.
EventStream slice_window(const EventStream& stream, std::uint64_t t0, std::uint64_t t1);

}  // namespace evuav
