#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "losscost/config.hpp"

namespace losscost::cli {

inline constexpr const char* kVersion = "losscost 0.1.0";

struct RunContext {
  std::string command;
  Config config;
  std::filesystem::path config_dir;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  bool per_coverage = false;
};

/// Files written by a command; removed again unless the command completes.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet();

  std::filesystem::path add(const std::string& name);
  void write(const std::string& name, const std::string& content);
  void commit() { committed_ = true; }
  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> files_;
  bool committed_ = false;
};

int cmd_simulate(RunContext& ctx);
int cmd_fit(RunContext& ctx);
int cmd_tune(RunContext& ctx);
int cmd_compare(RunContext& ctx);
int cmd_explain(RunContext& ctx);
int cmd_decompose(RunContext& ctx);

int dispatch(RunContext& ctx);

}  // namespace losscost::cli
