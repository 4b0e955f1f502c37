#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <iostream>

#include "commands.hpp"
#include "losscost/error.hpp"

namespace {

int exit_code(const losscost::Error& e) {
  switch (e.code()) {
    case losscost::ErrorCode::NotConverged: return 3;
    case losscost::ErrorCode::InvalidConfig: return 1;
    default: return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loss-cost modelling toolkit: simulate, fit, tune, compare, explain, decompose"};
  app.set_version_flag("--version", losscost::cli::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::int64_t seed = -1;
  std::string out_dir = "out";
  bool per_coverage = false;

  for (const char* name : {"simulate", "fit", "tune", "compare", "explain", "decompose"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "Settings file with [section] headers");
    sub->add_option("--seed", seed, "Run seed (overrides [run] seed)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_flag("--per-coverage", per_coverage, "Fit one model per coverage group");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  losscost::cli::RunContext ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  try {
    if (!config_path.empty()) {
      ctx.config = losscost::Config::load(config_path);
      ctx.config_dir = std::filesystem::absolute(config_path).parent_path();
    } else {
      ctx.config_dir = std::filesystem::current_path();
    }
    const std::int64_t stored = ctx.config.get_int("run", "seed", 0);
    ctx.seed = static_cast<std::uint64_t>(seed >= 0 ? seed : stored);
    ctx.per_coverage = per_coverage || ctx.config.get_bool("run", "per_coverage", false);
    ctx.out = out_dir;
    return losscost::cli::dispatch(ctx);
  } catch (const losscost::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
}
