#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qlbayes::config {

// Flat INI: [section] headers, key = value pairs, '#' or ';' comments.
// Values stay strings until a typed getter is called, so "2000,8000" can be
// read as either a string or a number list.
struct Value {
  std::string raw;
  int line = 0;
};

class Config {
 public:
  // Throws config_error with the offending line number on malformed input.
  static Config parse(const std::string& text);
  static Config load(const std::string& path);  // model_error if unreadable

  bool has(const std::string& section, const std::string& key) const;
  std::vector<std::string> keys(const std::string& section) const;
  std::vector<std::string> sections() const;

  // Typed getters throw config_error (with the value's line) on bad
  // conversions; the *_or variants fall back when the key is absent.
  std::string get_string(const std::string& section, const std::string& key) const;
  double get_number(const std::string& section, const std::string& key) const;
  long get_integer(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key) const;
  std::vector<double> get_number_list(const std::string& section,
                                      const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& section,
                                           const std::string& key) const;

  std::string get_string_or(const std::string& section, const std::string& key,
                            std::string fallback) const;
  double get_number_or(const std::string& section, const std::string& key,
                       double fallback) const;
  long get_integer_or(const std::string& section, const std::string& key,
                      long fallback) const;
  bool get_bool_or(const std::string& section, const std::string& key,
                   bool fallback) const;

  int line_of(const std::string& section, const std::string& key) const;

 private:
  const Value* find(const std::string& section, const std::string& key) const;
  const Value& require(const std::string& section, const std::string& key) const;

  // section -> key -> value; insertion order kept separately for listings.
  std::map<std::string, std::map<std::string, Value>> data_;
  std::vector<std::string> section_order_;
  std::map<std::string, std::vector<std::string>> key_order_;
};

}  // namespace qlbayes::config
