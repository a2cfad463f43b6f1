#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sgsasr {

/// Flat `section.key -> value` configuration.
///
/// Text form is sectioned key=value:
///
///     # comment
///     [encoder]
///     base_width = 32
///     enc_blocks = 2,2,4,8
///
/// Later sources override earlier ones: defaults < file < `--set` overrides.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::filesystem::path& path);

  /// Applies `section.key=value`.
  void apply_override(const std::string& assignment);
  void merge(const Config& other);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value);
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }
  void set(const std::string& key, const std::vector<int>& values);
  void set(const std::string& key, const std::vector<double>& values);

  [[nodiscard]] bool contains(const std::string& key) const { return values_.contains(key); }
  [[nodiscard]] std::optional<std::string> find(const std::string& key) const;

  [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] double get_double(const std::string& key, double fallback) const;
  [[nodiscard]] int get_int(const std::string& key, int fallback) const;
  [[nodiscard]] std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;
  [[nodiscard]] std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;
  [[nodiscard]] std::vector<double> get_double_list(const std::string& key,
                                                    std::vector<double> fallback) const;

  /// Sectioned text; keys sorted, so the output is canonical.
  [[nodiscard]] std::string to_text() const;
  void save(const std::filesystem::path& path) const;

  /// Restriction to keys under `section.`.
  [[nodiscard]] Config section(const std::string& name) const;

  [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }

  friend bool operator==(const Config&, const Config&) = default;

 private:
  std::map<std::string, std::string> values_;
};

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

std::vector<int> parse_int_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

}  // namespace sgsasr
