#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace evuav {

// Flat key=value configuration. Lines starting with '#' and blank lines are
// ignored; later assignments override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text, std::string_view origin = "<config>");
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  // Parses a single "key=value" override.
  void apply_override(std::string_view assignment);
  void merge(const KeyValueConfig& other);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::int64_t> get_int_list(const std::string& key, const std::vector<std::int64_t>& fallback) const;

  // Throws a validation error naming the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

std::vector<std::int64_t> parse_int_list(std::string_view text);
std::string format_int_list(const std::vector<std::int64_t>& values);
std::string format_double(double v);

}  // namespace evuav
