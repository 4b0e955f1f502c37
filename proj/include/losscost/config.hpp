#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace losscost {

// Flat key-value text with [section] headers. Sections and keys keep file order.
class Config {
 public:
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;

    const std::string* find(const std::string& key) const;
  };

  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  std::string to_string() const;

  const std::vector<Section>& sections() const { return sections_; }
  const Section* section(const std::string& name) const;
  bool has(const std::string& section, const std::string& key) const;

  /// Inserts or overwrites, creating the section on demand.
  void set(const std::string& section, const std::string& key, const std::string& value);

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  std::string require_string(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

 private:
  std::vector<Section> sections_;
};

std::vector<std::string> split_list(const std::string& text, char sep = ',');
double parse_double(const std::string& text, const std::string& context);
std::int64_t parse_int(const std::string& text, const std::string& context);

}  // namespace losscost
