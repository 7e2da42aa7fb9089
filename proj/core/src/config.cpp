#include "qlbayes/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "qlbayes/errors.hpp"

namespace qlbayes::config {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

double parse_number(const std::string& raw, int line) {
  const std::string_view s = trim(raw);
  double v;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw config_error("expected a number, got \"" + std::string(s) + "\"", line);
  return v;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#' || s.front() == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3)
        throw config_error("malformed section header", lineno);
      section = std::string(trim(s.substr(1, s.size() - 2)));
      if (section.empty()) throw config_error("empty section name", lineno);
      if (!cfg.data_.count(section)) {
        cfg.data_[section];
        cfg.section_order_.push_back(section);
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw config_error("expected key = value", lineno);
    const std::string key(trim(s.substr(0, eq)));
    const std::string value(trim(s.substr(eq + 1)));
    if (key.empty()) throw config_error("empty key", lineno);
    if (section.empty())
      throw config_error("key \"" + key + "\" appears before any [section]", lineno);
    auto& sec = cfg.data_[section];
    if (sec.count(key))
      throw config_error("duplicate key \"" + key + "\" in [" + section + "]", lineno);
    sec[key] = Value{value, lineno};
    cfg.key_order_[section].push_back(key);
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw model_error("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool Config::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::vector<std::string> Config::keys(const std::string& section) const {
  auto it = key_order_.find(section);
  return it == key_order_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<std::string> Config::sections() const { return section_order_; }

const Value* Config::find(const std::string& section, const std::string& key) const {
  auto sit = data_.find(section);
  if (sit == data_.end()) return nullptr;
  auto kit = sit->second.find(key);
  return kit == sit->second.end() ? nullptr : &kit->second;
}

const Value& Config::require(const std::string& section, const std::string& key) const {
  const Value* v = find(section, key);
  if (!v)
    throw config_error("missing key \"" + key + "\" in section [" + section + "]", 0);
  return *v;
}

std::string Config::get_string(const std::string& section, const std::string& key) const {
  return require(section, key).raw;
}

double Config::get_number(const std::string& section, const std::string& key) const {
  const Value& v = require(section, key);
  return parse_number(v.raw, v.line);
}

long Config::get_integer(const std::string& section, const std::string& key) const {
  const Value& v = require(section, key);
  const double d = parse_number(v.raw, v.line);
  const long l = static_cast<long>(d);
  if (static_cast<double>(l) != d)
    throw config_error("expected an integer, got \"" + v.raw + "\"", v.line);
  return l;
}

bool Config::get_bool(const std::string& section, const std::string& key) const {
  const Value& v = require(section, key);
  const std::string s(trim(v.raw));
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw config_error("expected a boolean, got \"" + v.raw + "\"", v.line);
}

std::vector<double> Config::get_number_list(const std::string& section,
                                            const std::string& key) const {
  const Value& v = require(section, key);
  std::vector<double> out;
  std::size_t pos = 0;
  const std::string& s = v.raw;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    const std::string tok =
        s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    out.push_back(parse_number(tok, v.line));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<std::string> Config::get_string_list(const std::string& section,
                                                 const std::string& key) const {
  const Value& v = require(section, key);
  std::vector<std::string> out;
  std::size_t pos = 0;
  const std::string& s = v.raw;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    const std::string tok =
        s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    out.push_back(std::string(trim(tok)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string Config::get_string_or(const std::string& section, const std::string& key,
                                  std::string fallback) const {
  const Value* v = find(section, key);
  return v ? v->raw : std::move(fallback);
}

double Config::get_number_or(const std::string& section, const std::string& key,
                             double fallback) const {
  const Value* v = find(section, key);
  return v ? parse_number(v->raw, v->line) : fallback;
}

long Config::get_integer_or(const std::string& section, const std::string& key,
                            long fallback) const {
  return find(section, key) ? get_integer(section, key) : fallback;
}

bool Config::get_bool_or(const std::string& section, const std::string& key,
                         bool fallback) const {
  return find(section, key) ? get_bool(section, key) : fallback;
}

int Config::line_of(const std::string& section, const std::string& key) const {
  return require(section, key).line;
}

}  // namespace qlbayes::config
