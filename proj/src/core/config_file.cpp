#include "ayce/core/config_file.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ayce/core/errors.hpp"

namespace ayce {

double ConfigValue::number() const {
  if (!is_number()) throw ConfigError("expected a number, got " + to_text());
  return std::get<double>(value);
}

const std::string& ConfigValue::string() const {
  if (!is_string()) throw ConfigError("expected a string, got " + to_text());
  return std::get<std::string>(value);
}

bool ConfigValue::boolean() const {
  if (!is_bool()) throw ConfigError("expected a boolean, got " + to_text());
  return std::get<bool>(value);
}

const ConfigValue::Array& ConfigValue::array() const {
  if (!is_array()) throw ConfigError("expected an array, got " + to_text());
  return std::get<Array>(value);
}

std::string ConfigValue::to_text() const {
  if (is_number()) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, std::get<double>(value));
    return std::string(buf, p);
  }
  if (is_bool()) return std::get<bool>(value) ? "true" : "false";
  if (is_string()) return "\"" + std::get<std::string>(value) + "\"";
  std::string s = "[";
  const auto& a = std::get<Array>(value);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) s += ", ";
    s += a[i].to_text();
  }
  return s + "]";
}

namespace {

class Parser {
 public:
  Parser(std::string_view text, int line) : s_(text), line_(line) {}

  ConfigValue value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return ConfigValue{string_lit()};
    if (c == '[') return ConfigValue{array()};
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return ConfigValue{true};
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return ConfigValue{false};
    }
    return ConfigValue{number()};
  }

  void finish() {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] != '#') fail("trailing characters");
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  std::string string_lit() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
      out += s_[pos_++];
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  ConfigValue::Array array() {
    ++pos_;
    ConfigValue::Array out;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    while (true) {
      out.push_back(value());
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']'");
    }
  }

  double number() {
    std::size_t end = pos_;
    while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '.' ||
                               s_[end] == '-' || s_[end] == '+' || s_[end] == '_'))
      ++end;
    std::string tok(s_.substr(pos_, end - pos_));
    std::erase(tok, '_');
    double v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size() || tok.empty()) fail("bad value '" + tok + "'");
    pos_ = end;
    return v;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_;
};

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": bad section");
      section = trim(std::string_view(line).substr(1, close - 1));
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    Parser p(std::string_view(line).substr(eq + 1), line_no);
    ConfigValue v = p.value();
    p.finish();
    cfg.sections_[section][key] = std::move(v);
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

const ConfigValue& ConfigFile::get(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  if (it == sections_.end() || !it->second.count(key))
    throw ConfigError("missing config key [" + section + "] " + key);
  return it->second.at(key);
}

void ConfigFile::set(const std::string& section, const std::string& key, ConfigValue v) {
  sections_[section][key] = std::move(v);
}

std::string ConfigFile::to_text() const {
  std::string out;
  for (const auto& [name, kv] : sections_) {
    if (!out.empty()) out += "\n";
    out += "[" + name + "]\n";
    for (const auto& [k, v] : kv) out += k + " = " + v.to_text() + "\n";
  }
  return out;
}

}  // namespace ayce
