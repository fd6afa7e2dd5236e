#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ivcate {

// Flat key=value settings. Keys use snake_case; values are kept as text and
// converted on access so that the resolved form round-trips exactly.
class RunConfig {
 public:
  RunConfig() = default;

  // Lines of "key = value"; '#' starts a comment; blank lines ignored.
  static RunConfig parse(std::istream& in);
  // Either a flat file or a JSON report with a "config" object.
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig from_json(const nlohmann::json& j);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set_default(const std::string& key, const std::string& value);
  void erase(const std::string& key) { values_.erase(key); }

  std::string get(const std::string& key) const;  // argument error when absent
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::optional<std::string> find(const std::string& key) const;

  int get_int(const std::string& key) const;
  long long get_long(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key, char sep = ',') const;

  // Entries of other replace entries here.
  void merge(const RunConfig& other);

  const std::map<std::string, std::string>& values() const { return values_; }
  nlohmann::json to_json() const;
  void write(std::ostream& out) const;

 private:
  std::map<std::string, std::string> values_;
};

std::vector<std::string> split(const std::string& text, char sep);
std::string trim(const std::string& text);

}  // namespace ivcate
