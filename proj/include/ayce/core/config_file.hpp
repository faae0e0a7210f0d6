#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace ayce {

/// A value in the sectioned key/value config format (a TOML subset:
/// [section] headers, `key = value`, numbers, strings, booleans and
/// possibly nested arrays, `#` comments).
struct ConfigValue {
  using Array = std::vector<ConfigValue>;
  std::variant<double, std::string, bool, Array> value;

  bool is_number() const { return std::holds_alternative<double>(value); }
  bool is_string() const { return std::holds_alternative<std::string>(value); }
  bool is_bool() const { return std::holds_alternative<bool>(value); }
  bool is_array() const { return std::holds_alternative<Array>(value); }

  double number() const;
  const std::string& string() const;
  bool boolean() const;
  const Array& array() const;

  std::string to_text() const;
};

class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  const ConfigValue& get(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, ConfigValue v);

  const std::map<std::string, std::map<std::string, ConfigValue>>& sections() const { return sections_; }

  /// Canonical text form; parse(to_text()) reproduces the same values.
  std::string to_text() const;

 private:
  std::map<std::string, std::map<std::string, ConfigValue>> sections_;
};

}  // namespace ayce
