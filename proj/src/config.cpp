#include "losscost/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "losscost/error.hpp"

namespace losscost {

namespace pt = boost::property_tree;

const std::string* Config::Section::find(const std::string& key) const {
  for (const auto& [k, v] : entries) {
    if (k == key) return &v;
  }
  return nullptr;
}

Config Config::parse(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  Config config;
  Section root{"", {}};
  for (const auto& [key, child] : tree) {
    if (child.empty()) {
      root.entries.emplace_back(key, child.data());
      continue;
    }
    Section section{key, {}};
    for (const auto& [k, v] : child) section.entries.emplace_back(k, v.data());
    config.sections_.push_back(std::move(section));
  }
  if (!root.entries.empty()) config.sections_.insert(config.sections_.begin(), std::move(root));
  return config;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string Config::to_string() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& section : sections_) {
    if (!first) out << '\n';
    first = false;
    if (!section.name.empty()) out << '[' << section.name << "]\n";
    for (const auto& [k, v] : section.entries) out << k << " = " << v << '\n';
  }
  return out.str();
}

const Config::Section* Config::section(const std::string& name) const {
  for (const auto& s : sections_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

bool Config::has(const std::string& section_name, const std::string& key) const {
  const auto* s = section(section_name);
  return s != nullptr && s->find(key) != nullptr;
}

void Config::set(const std::string& section_name, const std::string& key,
                 const std::string& value) {
  auto it = std::find_if(sections_.begin(), sections_.end(),
                         [&](const Section& s) { return s.name == section_name; });
  if (it == sections_.end()) {
    sections_.push_back(Section{section_name, {}});
    it = std::prev(sections_.end());
  }
  for (auto& [k, v] : it->entries) {
    if (k == key) {
      v = value;
      return;
    }
  }
  it->entries.emplace_back(key, value);
}

std::string Config::get_string(const std::string& section_name, const std::string& key,
                               const std::string& fallback) const {
  const auto* s = section(section_name);
  if (s == nullptr) return fallback;
  const auto* v = s->find(key);
  return v == nullptr ? fallback : *v;
}

std::string Config::require_string(const std::string& section_name,
                                   const std::string& key) const {
  const auto* s = section(section_name);
  const std::string* v = s == nullptr ? nullptr : s->find(key);
  if (v == nullptr) {
    throw Error(ErrorCode::InvalidConfig, "missing key '" + key + "' in [" + section_name + "]");
  }
  return *v;
}

double Config::get_double(const std::string& section_name, const std::string& key,
                          double fallback) const {
  if (!has(section_name, key)) return fallback;
  return parse_double(require_string(section_name, key), section_name + "." + key);
}

std::int64_t Config::get_int(const std::string& section_name, const std::string& key,
                             std::int64_t fallback) const {
  if (!has(section_name, key)) return fallback;
  return parse_int(require_string(section_name, key), section_name + "." + key);
}

bool Config::get_bool(const std::string& section_name, const std::string& key,
                      bool fallback) const {
  if (!has(section_name, key)) return fallback;
  const auto v = require_string(section_name, key);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw Error(ErrorCode::InvalidConfig, "not a boolean: " + section_name + "." + key + " = " + v);
}

std::vector<std::string> Config::get_list(const std::string& section_name,
                                          const std::string& key) const {
  if (!has(section_name, key)) return {};
  return split_list(require_string(section_name, key));
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

double parse_double(const std::string& text, const std::string& context) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::TypeMismatch, "not a number in " + context + ": '" + text + "'");
  }
  return value;
}

std::int64_t parse_int(const std::string& text, const std::string& context) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::TypeMismatch, "not an integer in " + context + ": '" + text + "'");
  }
  return value;
}

}  // namespace losscost
