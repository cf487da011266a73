#include "esd/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "esd/error.hpp"
#include "esd/text.hpp"

namespace esd {

KvConfig KvConfig::parse(std::string_view text) {
  KvConfig cfg;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    std::string line = text::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("config line " + std::to_string(line_no) + ": unterminated section");
      section = text::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = text::trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    cfg.values_[key] = text::trim(line.substr(eq + 1));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool KvConfig::has(std::string_view key) const { return values_.find(key) != values_.end(); }

std::optional<std::string> KvConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KvConfig::get_or(std::string_view key, std::string_view fallback) const {
  auto v = get(key);
  return v ? *v : std::string(fallback);
}

long long KvConfig::get_int(std::string_view key, long long fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw ParseError("config key '" + std::string(key) + "': not an integer: " + *v);
  }
  return out;
}

double KvConfig::get_double(std::string_view key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ParseError("config key '" + std::string(key) + "': not a number: " + *v);
  }
}

bool KvConfig::get_bool(std::string_view key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const std::string s = text::to_lower(*v);
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw ParseError("config key '" + std::string(key) + "': not a boolean: " + *v);
}

}  // namespace esd
