#include "ivcate/config.hpp"

#include "ivcate/error.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ivcate {

std::string trim(const std::string& text) {
  const auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = text.find_last_not_of(" \t\r\n");
  return text.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::string cur;
  std::istringstream ss(text);
  while (std::getline(ss, cur, sep)) out.push_back(trim(cur));
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

RunConfig RunConfig::parse(std::istream& in) {
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::parse, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) fail(ErrorKind::parse, "config line " + std::to_string(lineno) + ": empty key");
    c.values_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::parse, "config JSON must be an object");
  RunConfig c;
  for (const auto& [k, v] : j.items()) {
    c.values_[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::argument, "cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string head = trim(text);
  if (!head.empty() && head.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::parse, "config file '" + path.string() + "': " + e.what());
    }
    if (!j.contains("config")) fail(ErrorKind::parse, "JSON config file has no \"config\" object");
    return from_json(j["config"]);
  }
  std::istringstream ss(text);
  return parse(ss);
}

void RunConfig::set_default(const std::string& key, const std::string& value) {
  if (!has(key)) values_[key] = value;
}

std::optional<std::string> RunConfig::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string RunConfig::get(const std::string& key) const {
  const auto v = find(key);
  if (!v) fail(ErrorKind::argument, "missing setting '" + key + "'");
  return *v;
}

std::string RunConfig::get_or(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* b = text.data();
  const char* e = b + text.size();
  const auto [ptr, ec] = std::from_chars(b, e, value);
  if (ec != std::errc() || ptr != e || text.empty()) {
    fail(ErrorKind::argument, "setting '" + key + "': invalid number '" + text + "'");
  }
  return value;
}

}  // namespace

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
long long RunConfig::get_long(const std::string& key) const { return parse_number<long long>(key, get(key)); }
std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }
double RunConfig::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::argument, "setting '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key, char sep) const {
  const auto v = find(key);
  return v ? split(*v, sep) : std::vector<std::string>{};
}

void RunConfig::merge(const RunConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

void RunConfig::write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
}

}  // namespace ivcate
