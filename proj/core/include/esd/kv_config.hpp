#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace esd {

/// Flat "key = value" file. '#' comments run to the end of the line (values
/// therefore cannot contain '#'), blank lines are ignored, keys are
/// case-sensitive and the last assignment wins. Section headers "[name]" prefix the following keys as
/// "name.key".
class KvConfig {
 public:
  static KvConfig parse(std::string_view text);
  static KvConfig load(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;
  std::string get_or(std::string_view key, std::string_view fallback) const;
  long long get_int(std::string_view key, long long fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;

  void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }
  const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace esd
