#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace swinvrnn {

// Ordered `key = value` text used for manifests and run configuration.
// Parsing accepts `[section]` headers (prefixing following keys with
// `section.`), `#` comments, and double-quoted values. Serialization writes
// flat dotted keys, one per line, in insertion order.
class KeyValueText {
 public:
  using Item = std::pair<std::string, std::string>;

  static KeyValueText parse(const std::string& text);
  static KeyValueText read(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set(const std::string& key, bool value);

  bool contains(const std::string& key) const;
  std::optional<std::string> find(const std::string& key) const;
  // Throws ConfigError naming the key when missing or malformed.
  const std::string& at(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  const std::vector<Item>& items() const { return items_; }
  void merge(const KeyValueText& other);

  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<Item> items_;
};

// Shortest round-trip decimal text for a double.
std::string format_number(double value);
std::vector<std::string> split_list(const std::string& text, char sep = ',');
std::string join_numbers(const std::vector<double>& values);

}  // namespace swinvrnn
