#include "swinvrnn/key_value.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

std::string unquote(std::string v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

}  // namespace

KeyValueText KeyValueText::parse(const std::string& text) {
  KeyValueText kv;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = trim(std::string_view(s).substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(std::string_view(s).substr(0, eq));
    std::string value = unquote(trim(std::string_view(s).substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    kv.set(section.empty() ? key : section + "." + key, std::move(value));
  }
  return kv;
}

KeyValueText KeyValueText::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void KeyValueText::set(const std::string& key, std::string value) {
  for (auto& [k, v] : items_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  items_.emplace_back(key, std::move(value));
}

void KeyValueText::set(const std::string& key, double value) { set(key, format_number(value)); }
void KeyValueText::set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }
void KeyValueText::set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

bool KeyValueText::contains(const std::string& key) const { return find(key).has_value(); }

std::optional<std::string> KeyValueText::find(const std::string& key) const {
  for (const auto& [k, v] : items_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const std::string& KeyValueText::at(const std::string& key) const {
  for (const auto& [k, v] : items_) {
    if (k == key) return v;
  }
  throw ConfigError("missing key '" + key + "'");
}

double KeyValueText::get_double(const std::string& key) const {
  const auto& v = at(key);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  }
  return out;
}

std::int64_t KeyValueText::get_int(const std::string& key) const {
  const auto& v = at(key);
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
  }
  return out;
}

bool KeyValueText::get_bool(const std::string& key) const {
  const auto& v = at(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<double> KeyValueText::get_doubles(const std::string& key) const {
  std::vector<double> out;
  std::string v = at(key);
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  for (const auto& item : split_list(v)) {
    const auto s = trim(item);
    if (s.empty()) continue;
    double d = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw ConfigError("key '" + key + "': '" + s + "' is not a number");
    }
    out.push_back(d);
  }
  return out;
}

void KeyValueText::merge(const KeyValueText& other) {
  for (const auto& [k, v] : other.items_) set(k, v);
}

std::string KeyValueText::str() const {
  std::string out;
  for (const auto& [k, v] : items_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

void KeyValueText::write(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << str();
    if (!out) throw IoError("short write to " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(trim(std::string_view(text).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join_numbers(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_number(values[i]);
  }
  return out;
}

}  // namespace swinvrnn
