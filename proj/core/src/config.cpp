#include "sgsasr/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sgsasr/errors.hpp"

namespace sgsasr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  return parts;
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
  }
}

long long to_integer(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  if (trim(text).empty()) return out;
  for (const auto& p : split(text, ',')) out.push_back(static_cast<int>(to_integer("list", p)));
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (const auto& p : split(text, ',')) out.push_back(to_double("list", p));
  return out;
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    cfg.values_[full] = trim(line.substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like section.key=value, got '" + assignment + "'");
  }
  values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

void Config::set(const std::string& key, double value) { values_[key] = format_double(value); }

void Config::set(const std::string& key, const std::vector<int>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + std::to_string(values[i]);
  values_[key] = s;
}

void Config::set(const std::string& key, const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + format_double(values[i]);
  values_[key] = s;
}

std::optional<std::string> Config::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = find(key);
  return v ? to_double(key, *v) : fallback;
}

int Config::get_int(const std::string& key, int fallback) const {
  auto v = find(key);
  return v ? static_cast<int>(to_integer(key, *v)) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto* end = v->data() + v->size();
  auto [ptr, ec] = std::from_chars(v->data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + *v + "'");
  }
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<int> Config::get_int_list(const std::string& key, std::vector<int> fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  try {
    return parse_int_list(*v);
  } catch (const ConfigError&) {
    throw ConfigError("config key '" + key + "': expected a comma-separated integer list");
  }
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            std::vector<double> fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  try {
    return parse_double_list(*v);
  } catch (const ConfigError&) {
    throw ConfigError("config key '" + key + "': expected a comma-separated number list");
  }
}

std::string Config::to_text() const {
  std::ostringstream out;
  // Unsectioned keys must precede every header or they would be read back into a section.
  bool any_plain = false;
  for (const auto& [key, value] : values_) {
    if (key.find('.') != std::string::npos) continue;
    out << key << " = " << value << "\n";
    any_plain = true;
  }
  std::string current = any_plain ? "" : "\x01";
  for (const auto& [key, value] : values_) {
    if (key.find('.') == std::string::npos) continue;
    const auto dot = key.rfind('.');
    const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    if (section != current) {
      if (current != "\x01") out << "\n";
      if (!section.empty()) out << "[" << section << "]\n";
      current = section;
    }
    out << name << " = " << value << "\n";
  }
  return out.str();
}

void Config::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << to_text();
}

Config Config::section(const std::string& name) const {
  Config out;
  const std::string prefix = name + ".";
  for (const auto& [k, v] : values_) {
    if (k.rfind(prefix, 0) == 0) out.values_[k] = v;
  }
  return out;
}

}  // namespace sgsasr
