#include "commands.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "losscost/error.hpp"
#include "losscost/evaluate.hpp"
#include "losscost/explain.hpp"
#include "losscost/io.hpp"
#include "losscost/pipeline.hpp"
#include "losscost/report.hpp"
#include "losscost/synth.hpp"
#include "losscost/table.hpp"
#include "losscost/variance.hpp"

namespace losscost::cli {

namespace fs = std::filesystem;

OutputSet::~OutputSet() {
  if (committed_) return;
  std::error_code ec;
  for (const auto& f : files_) fs::remove(f, ec);
}

fs::path OutputSet::add(const std::string& name) {
  fs::create_directories(dir_);
  const fs::path p = dir_ / name;
  files_.push_back(p);
  return p;
}

void OutputSet::write(const std::string& name, const std::string& content) {
  const auto p = add(name);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + p.string());
}

namespace {

// Resolves a path setting against the config file's directory and pins the
// absolute form into the config, so the manifest replays from anywhere.
fs::path resolve_path(RunContext& ctx, const std::string& section, const std::string& key, const fs::path& fallback = {}) {
  fs::path p = ctx.config.has(section, key) ? fs::path(ctx.config.require_string(section, key)) : fallback;
  if (p.empty()) return p;
  if (p.is_relative()) p = ctx.config_dir / p;
  p = fs::weakly_canonical(p);
  ctx.config.set(section, key, p.string());
  return p;
}

std::string manifest(const RunContext& ctx) {
  Config m = ctx.config;
  m.set("run", "command", ctx.command);
  m.set("run", "seed", std::to_string(ctx.seed));
  m.set("run", "per_coverage", ctx.per_coverage ? "true" : "false");
  m.set("run", "version", kVersion);
  return m.to_string();
}

ReportMeta base_meta(const RunContext& ctx) {
  return {{"command", ctx.command}, {"version", kVersion}, {"seed", std::to_string(ctx.seed)}};
}

struct Dataset {
  PortfolioTable table;
  Schema schema;
  fs::path path;
};

Dataset load_data(RunContext& ctx) {
  Dataset d;
  d.path = resolve_path(ctx, "data", "path");
  if (d.path.empty()) throw Error(ErrorCode::InvalidConfig, "[data] path is required");
  const fs::path schema_path = resolve_path(ctx, "data", "schema", d.path.parent_path() / "schema.ini");
  d.schema = Schema::from_config(Config::load(schema_path));
  d.table = load_table(d.path, d.schema);
  return d;
}

void apply_glm_preset(ElasticNetConfig& c, const std::string& preset) {
  if (preset == "BG") c = {0.0249, 0.0860, 1.0, 1.1341, c.max_iter, c.tol};
  else if (preset == "BP") c = {0.1016, 0.2228, 1.0, 1.0004, c.max_iter, c.tol};
  else if (preset == "LIAB") c = {1.2602, 0.3844, 0.1, 1.3357, c.max_iter, c.tol};
  else throw Error(ErrorCode::InvalidConfig, "unknown [glm] preset " + preset);
}

void apply_gbdt_preset(GbdtConfig& c, const std::string& preset) {
  struct Row {
    double ff, lr;
    int depth;
    std::size_t mcs, leaves;
    double ra, rl, sub;
    std::size_t sfb, trees;
  };
  Row r{};
  if (preset == "BG") r = {0.5944, 0.0114, 28, 80, 120, 0.4056, 0.9800, 0.5192, 120000, 181};
  else if (preset == "BP") r = {0.4482, 0.0455, 29, 80, 40, 0.0892, 0.9626, 0.5215, 100000, 67};
  else if (preset == "LIAB") r = {0.4177, 0.0023, 24, 150, 50, 0.7631, 0.8913, 0.9319, 60000, 999};
  else throw Error(ErrorCode::InvalidConfig, "unknown [gbdt] preset " + preset);
  c.feature_fraction = r.ff;
  c.learning_rate = r.lr;
  c.max_depth = r.depth;
  c.min_child_samples = r.mcs;
  c.num_leaves = r.leaves;
  c.reg_alpha = r.ra;
  c.reg_lambda = r.rl;
  c.subsample = r.sub;
  c.subsample_for_bin = r.sfb;
  c.n_estimators = r.trees;
}

ElasticNetConfig glm_config(const Config& cfg) {
  ElasticNetConfig c;
  if (cfg.has("glm", "preset")) apply_glm_preset(c, cfg.require_string("glm", "preset"));
  c.alpha = cfg.get_double("glm", "alpha", c.alpha);
  c.l1_ratio = cfg.get_double("glm", "l1_ratio", c.l1_ratio);
  c.coef_threshold = cfg.get_double("glm", "coef_threshold", c.coef_threshold);
  c.power = cfg.get_double("glm", "p", c.power);
  c.max_iter = static_cast<std::size_t>(cfg.get_int("glm", "max_iter", static_cast<std::int64_t>(c.max_iter)));
  c.tol = cfg.get_double("glm", "tol", c.tol);
  c.validate();
  return c;
}

GbdtConfig gbdt_config(const Config& cfg) {
  GbdtConfig c;
  if (cfg.has("gbdt", "preset")) apply_gbdt_preset(c, cfg.require_string("gbdt", "preset"));
  auto size = [&](const char* key, std::size_t v) {
    const auto x = cfg.get_int("gbdt", key, static_cast<std::int64_t>(v));
    if (x < 0) throw Error(ErrorCode::InvalidConfig, std::string("[gbdt] ") + key + " must be >= 0");
    return static_cast<std::size_t>(x);
  };
  c.n_estimators = size("n_estimators", c.n_estimators);
  c.learning_rate = cfg.get_double("gbdt", "learning_rate", c.learning_rate);
  c.num_leaves = size("num_leaves", c.num_leaves);
  c.max_depth = static_cast<int>(cfg.get_int("gbdt", "max_depth", c.max_depth));
  c.min_child_samples = size("min_child_samples", c.min_child_samples);
  c.feature_fraction = cfg.get_double("gbdt", "feature_fraction", c.feature_fraction);
  c.subsample = cfg.get_double("gbdt", "subsample", c.subsample);
  c.subsample_for_bin = size("subsample_for_bin", c.subsample_for_bin);
  c.max_bins = static_cast<int>(cfg.get_int("gbdt", "max_bins", c.max_bins));
  c.reg_alpha = cfg.get_double("gbdt", "reg_alpha", c.reg_alpha);
  c.reg_lambda = cfg.get_double("gbdt", "reg_lambda", c.reg_lambda);
  c.goss.enabled = cfg.get_bool("gbdt", "goss", c.goss.enabled);
  c.goss.top_rate = cfg.get_double("gbdt", "top_rate", c.goss.top_rate);
  c.goss.other_rate = cfg.get_double("gbdt", "other_rate", c.goss.other_rate);
  c.efb = cfg.get_bool("gbdt", "efb", c.efb);
  c.conflict_budget = size("conflict_budget", c.conflict_budget);
  c.power = cfg.get_double("gbdt", "p", cfg.get_double("glm", "p", c.power));
  c.objective = parse_objective(cfg.get_string("gbdt", "objective", to_string(c.objective)));
  const auto mode = cfg.get_string("gbdt", "leaf_mode", "newton");
  if (mode != "newton" && mode != "average") throw Error(ErrorCode::InvalidConfig, "leaf_mode must be newton or average");
  c.leaf_mode = mode == "average" ? LeafMode::Average : LeafMode::Newton;
  c.early_stopping_rounds = size("early_stopping_rounds", c.early_stopping_rounds);
  c.validate();
  return c;
}

std::vector<std::string> block_features(const PortfolioTable& table, const std::string& block) {
  if (block.empty() || block == "all") return {};
  auto names = table.block_features(block);
  if (names.empty()) throw Error(ErrorCode::InvalidConfig, "no features carry block label '" + block + "'");
  return names;
}

// A model spec from a section holding recipe/block/features/missing_policy,
// with hyperparameters from [glm] and [gbdt].
ModelSpec model_spec(const Config& cfg, const std::string& section, const PortfolioTable& table,
                     const std::string& default_block = "all") {
  ModelSpec s;
  s.kind = parse_recipe(cfg.get_string(section, "recipe", "gbdt"));
  s.missing = parse_missing_policy(cfg.get_string(section, "missing_policy", to_string(s.missing)));
  if (cfg.has(section, "features")) s.features = cfg.get_list(section, "features");
  else s.features = block_features(table, cfg.get_string(section, "block", default_block));
  if (s.kind == RecipeKind::GlmElasticNet) s.glm = glm_config(cfg);
  if (s.kind == RecipeKind::Gbdt) s.gbdt = gbdt_config(cfg);
  return s;
}

SplitPlan train_test_plan(const Config& cfg, std::uint64_t seed) {
  SplitPlan p;
  p.kind = SplitKind::TrainTest;
  p.seed = static_cast<std::uint64_t>(cfg.get_int("split", "seed", static_cast<std::int64_t>(seed)));
  p.test_fraction = cfg.get_double("split", "test_fraction", 0.2);
  return p;
}

struct TrainTest {
  PortfolioTable train;
  PortfolioTable test;
  SplitPlan plan;
};

TrainTest split_table(const PortfolioTable& table, const Config& cfg, std::uint64_t seed) {
  TrainTest t;
  t.plan = make_splits(table, train_test_plan(cfg, seed));
  t.train = table.subset(t.plan.rows_in(0));
  t.test = table.subset(t.plan.rows_in(1));
  return t;
}

ReportMeta split_meta(const SplitPlan& plan) {
  return {{"split", "train_test"},
          {"test_fraction", format_number(plan.test_fraction)},
          {"split_seed", std::to_string(plan.seed)}};
}

std::string cell_text(const PortfolioTable& t, std::size_t feature, Eigen::Index row) {
  const double v = t.columns[feature](row);
  if (std::isnan(v)) return "NA";
  if (t.features[feature].kind == FeatureKind::Categorical) {
    return t.features[feature].categories[static_cast<std::size_t>(v)];
  }
  return format_number(v);
}

std::string serialize(const std::function<void(std::ostream&)>& f) {
  std::ostringstream s;
  f(s);
  return s.str();
}

void finish(OutputSet& out, const RunContext& ctx) {
  out.write("manifest.ini", manifest(ctx));
  out.commit();
}

}  // namespace

int cmd_simulate(RunContext& ctx) {
  const GeneratorConfig gen = GeneratorConfig::from_config(ctx.config);
  gen.to_config(ctx.config);
  const SyntheticPortfolio p = synthesize_portfolio(gen, ctx.seed);
  OutputSet out(ctx.out);
  out.write("portfolio.csv", serialize([&](std::ostream& s) { write_table(s, p.table, p.schema); }));
  out.write("schema.ini", p.schema.to_config().to_string());
  out.write("truth.csv", serialize([&](std::ostream& s) { write_ground_truth(s, p); }));
  finish(out, ctx);
  fmt::print("simulated {} rows into {}\n", p.table.rows(), ctx.out.string());
  return 0;
}

int cmd_fit(RunContext& ctx) {
  const Dataset data = load_data(ctx);
  std::vector<std::pair<std::string, PortfolioTable>> parts;
  if (ctx.per_coverage) {
    std::set<Coverage> tags(data.table.coverage.begin(), data.table.coverage.end());
    for (auto tag : tags) parts.emplace_back(to_string(tag), data.table.filter_coverage(tag));
  } else {
    parts.emplace_back("all", data.table);
  }

  OutputSet out(ctx.out);
  std::vector<ReportRecord> records;
  ReportMeta meta = base_meta(ctx);
  for (const auto& [tag, table] : parts) {
    const ModelSpec spec = model_spec(ctx.config, "model", table);
    const TrainTest tt = split_table(table, ctx.config, ctx.seed);
    const FittedModel model = fit_model(tt.train, spec, ctx.seed);
    const std::string label = to_string(spec.kind) + (ctx.per_coverage ? "_" + tag : "");
    out.write(ctx.per_coverage ? "model_" + tag + ".txt" : "model.txt",
              serialize([&](std::ostream& s) { save_model(s, model); }));
    const auto train = evaluate(model.predict(tt.train), tt.train.response, label, "train");
    const auto test = evaluate(model.predict(tt.test), tt.test.response, label, "test");
    for (const auto* r : {&train, &test}) {
      const auto rec = records_of(*r);
      records.insert(records.end(), rec.begin(), rec.end());
      meta.emplace_back("gini_tie_delta", fmt::format("{} {} {}", label, r->dataset, format_exact(r->gini_tie_delta)));
    }
    for (const auto& w : model.warnings) meta.emplace_back("warning", label + ": " + w);
    if (parts.size() == 1 || tag == parts.front().first) {
      for (const auto& kv : split_meta(tt.plan)) meta.push_back(kv);
    }
  }
  out.write("report.tsv", serialize([&](std::ostream& s) { write_report(s, meta, records); }));
  finish(out, ctx);
  fmt::print("fitted {} model(s) into {}\n", parts.size(), ctx.out.string());
  return 0;
}

int cmd_tune(RunContext& ctx) {
  const Dataset data = load_data(ctx);
  const TrainTest tt = split_table(data.table, ctx.config, ctx.seed);
  const std::string recipe = ctx.config.get_string("tune", "recipe", ctx.config.get_string("model", "recipe", "gbdt"));
  const std::string section = recipe == "gbdt" ? "gbdt" : "glm";

  ParamGrid grid;
  if (const auto* s = ctx.config.section("tune")) {
    for (const auto& [key, value] : s->entries) {
      if (key.rfind("grid.", 0) != 0) continue;
      std::vector<double> values;
      for (const auto& v : split_list(value)) values.push_back(parse_double(v, key));
      grid.emplace_back(key.substr(5), values);
    }
  }
  if (grid.empty()) throw Error(ErrorCode::InvalidConfig, "[tune] needs at least one grid.<name> entry");

  const Config base = ctx.config;
  const PortfolioTable& train = tt.train;
  RecipeFamily family = [&](const ParamSet& params) {
    Config c = base;
    c.set("model", "recipe", recipe);
    for (const auto& [k, v] : params) c.set(section, k, format_exact(v));
    return make_recipe(model_spec(c, "model", train));
  };
  SplitPlan plan;
  plan.kind = SplitKind::KFold;
  plan.k = static_cast<std::size_t>(ctx.config.get_int("tune", "folds", ctx.config.get_int("split", "k", 10)));
  plan.seed = ctx.seed;
  const auto metric = parse_selection_metric(ctx.config.get_string("tune", "metric", "mae"));
  const double dev_power = ctx.config.get_double("tune", "deviance_power", ctx.config.get_double(section, "p", 1.5));
  const GridResult result = grid_search(train, family, grid, plan, metric, dev_power);

  std::vector<ReportRecord> records;
  for (const auto& point : result.trace) {
    std::string name;
    for (const auto& [k, v] : point.params) name += (name.empty() ? "" : ";") + k + "=" + format_number(v);
    records.push_back({name, "cv", to_string(metric), point.score, point.cv.mean.n});
    for (const auto& r : records_of(point.cv.mean)) records.push_back({name, "cv", r.metric, r.value, r.n});
  }
  ReportMeta meta = base_meta(ctx);
  meta.emplace_back("selection_metric", to_string(metric));
  meta.emplace_back("folds", std::to_string(plan.k));
  for (const auto& kv : split_meta(tt.plan)) meta.push_back(kv);

  Config best;
  for (const auto& [k, v] : result.best) best.set(section, k, format_exact(v));
  OutputSet out(ctx.out);
  out.write("tune.tsv", serialize([&](std::ostream& s) { write_report(s, meta, records); }));
  out.write("best.ini", best.to_string());
  finish(out, ctx);
  fmt::print("evaluated {} grid points; best written to {}\n", result.trace.size(), (ctx.out / "best.ini").string());
  return 0;
}

int cmd_compare(RunContext& ctx) {
  const Dataset data = load_data(ctx);
  const TrainTest tt = split_table(data.table, ctx.config, ctx.seed);
  auto obtain = [&](const std::string& role, const std::string& default_block) {
    const fs::path path = resolve_path(ctx, "compare", role + "_model");
    if (!path.empty()) {
      std::ifstream in(path);
      if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
      return load_model(in);
    }
    return fit_model(tt.train, model_spec(ctx.config, role, tt.train, default_block), ctx.seed);
  };
  const FittedModel champion = obtain("champion", kInHouseBlock);
  const FittedModel challenger = obtain("challenger", "all");
  const std::string champ_label = ctx.config.get_string("champion", "label", "champion");
  const std::string chall_label = ctx.config.get_string("challenger", "label", "challenger");

  std::vector<ReportRecord> records;
  ReportMeta meta = base_meta(ctx);
  for (const auto& kv : split_meta(tt.plan)) meta.push_back(kv);
  for (const auto& [model, label] : {std::pair{&champion, champ_label}, std::pair{&challenger, chall_label}}) {
    for (const auto& [table, dataset] : {std::pair{&tt.train, "train"}, std::pair{&tt.test, "test"}}) {
      const auto r = evaluate(model->predict(*table), table->response, label, dataset);
      const auto rec = records_of(r);
      records.insert(records.end(), rec.begin(), rec.end());
      meta.emplace_back("gini_tie_delta", fmt::format("{} {} {}", label, dataset, format_exact(r.gini_tie_delta)));
    }
  }
  const auto bins = static_cast<std::size_t>(ctx.config.get_int("compare", "quantiles", 30));
  const LiftChart lift = double_lift(tt.test.response, champion.predict(tt.test), challenger.predict(tt.test),
                                     tt.test.exposure, bins);
  OutputSet out(ctx.out);
  out.write("report.tsv", serialize([&](std::ostream& s) { write_report(s, meta, records); }));
  out.write("lift.csv", serialize([&](std::ostream& s) { write_lift(s, lift); }));
  finish(out, ctx);
  fmt::print("compared {} vs {} on {} test rows\n", champ_label, chall_label, tt.test.rows());
  return 0;
}

int cmd_explain(RunContext& ctx) {
  const Dataset data = load_data(ctx);
  const fs::path model_path = resolve_path(ctx, "explain", "model");
  FittedModel model;
  if (!model_path.empty()) {
    std::ifstream in(model_path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + model_path.string());
    model = load_model(in);
  } else {
    model = fit_model(data.table, model_spec(ctx.config, "model", data.table), ctx.seed);
  }
  if (model.kind != RecipeKind::Gbdt) throw Error(ErrorCode::InvalidConfig, "explain needs a gbdt model");

  OutputSet out(ctx.out);
  out.write("mdi.csv", serialize([&](std::ostream& s) { write_importance(s, mdi(*model.gbdt, model.encoding)); }));
  const auto repeats = static_cast<std::size_t>(ctx.config.get_int("explain", "mda_repeats", 3));
  out.write("mda.csv", serialize([&](std::ostream& s) { write_importance(s, mda(model, data.table, repeats, ctx.seed)); }));

  const auto ids = ctx.config.get_list("explain", "rows");
  if (!ids.empty()) {
    std::vector<Eigen::Index> rows;
    for (const auto& id : ids) {
      const auto it = std::find(data.table.id.begin(), data.table.id.end(), id);
      if (it == data.table.id.end()) throw Error(ErrorCode::IdMismatch, "no row with policy id " + id);
      rows.push_back(static_cast<Eigen::Index>(it - data.table.id.begin()));
    }
    const PortfolioTable chosen = data.table.subset(rows);
    const ShapMatrix shap = aggregate_shap(tree_shap(*model.gbdt, model.design(chosen)), model.encoding);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      std::vector<std::string> values;
      for (const auto& f : model.encoding.features) {
        values.push_back(cell_text(chosen, *chosen.feature_index(f.name), static_cast<Eigen::Index>(k)));
      }
      out.write("shap_" + ids[k] + ".csv", serialize([&](std::ostream& s) {
                  write_top_attributions(s, shap, static_cast<Eigen::Index>(k), values, 20);
                }));
    }
  }
  const auto ale_bins = static_cast<std::size_t>(ctx.config.get_int("explain", "ale_bins", 20));
  for (const auto& f : ctx.config.get_list("explain", "ale_features")) {
    const AleCurve curve = ale(model, data.table, f, ale_bins);
    out.write("ale_" + f + ".csv", serialize([&](std::ostream& s) { write_ale(s, curve); }));
  }
  finish(out, ctx);
  fmt::print("wrote explanations for {} rows into {}\n", ids.size(), ctx.out.string());
  return 0;
}

int cmd_decompose(RunContext& ctx) {
  const Dataset data = load_data(ctx);
  const auto& t = data.table;
  const auto base_block = ctx.config.get_string("decompose", "base_block", kInHouseBlock);
  const auto added_block = ctx.config.get_string("decompose", "added_block", kInsurTechBlock);
  const auto base = ctx.config.has("decompose", "base_features") ? ctx.config.get_list("decompose", "base_features")
                                                                 : t.block_features(base_block);
  const auto added = ctx.config.has("decompose", "added_features")
                         ? ctx.config.get_list("decompose", "added_features")
                         : t.block_features(added_block);
  Config c = ctx.config;
  c.set("model", "recipe", ctx.config.get_string("decompose", "recipe", ctx.config.get_string("model", "recipe", "glm_elasticnet")));
  ModelSpec spec = model_spec(c, "model", t);
  SplitPlan plan;
  plan.kind = SplitKind::KFold;
  plan.k = static_cast<std::size_t>(ctx.config.get_int("decompose", "folds", 5));
  plan.seed = ctx.seed;
  const DecompositionReport report = decompose(t, base, added, spec, plan);

  std::vector<ReportRecord> records = records_of(report, "model");
  ReportMeta meta = base_meta(ctx);
  meta.emplace_back("estimator", report.estimator);
  meta.emplace_back("folds", std::to_string(report.folds));
  meta.emplace_back("base_features", std::to_string(base.size()));
  meta.emplace_back("added_features", std::to_string(added.size()));
  for (const auto& f : report.flags) meta.emplace_back("flag", f);
  if (report.three_term && report.term_gain > 0.0) {
    meta.emplace_back("summary", fmt::format("added block explains {:.4f} of Var(Y) beyond the base block",
                                             report.term_gain / report.var_y));
  }

  const fs::path truth = resolve_path(ctx, "data", "truth", fs::exists(data.path.parent_path() / "truth.csv")
                                                                 ? data.path.parent_path() / "truth.csv"
                                                                 : fs::path{});
  if (!truth.empty()) {
    std::ifstream in(truth);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + truth.string());
    const GroundTruth g = read_ground_truth(in);
    const auto oracle = records_of(oracle_decompose(t, g), "oracle");
    records.insert(records.end(), oracle.begin(), oracle.end());
  }
  OutputSet out(ctx.out);
  out.write("decompose.tsv", serialize([&](std::ostream& s) { write_report(s, meta, records); }));
  finish(out, ctx);
  fmt::print("decomposed Var(Y) = {} over {} rows\n", format_number(report.var_y), report.n);
  return 0;
}

int dispatch(RunContext& ctx) {
  if (ctx.command == "simulate") return cmd_simulate(ctx);
  if (ctx.command == "fit") return cmd_fit(ctx);
  if (ctx.command == "tune") return cmd_tune(ctx);
  if (ctx.command == "compare") return cmd_compare(ctx);
  if (ctx.command == "explain") return cmd_explain(ctx);
  if (ctx.command == "decompose") return cmd_decompose(ctx);
  throw Error(ErrorCode::InvalidConfig, "unknown command " + ctx.command);
}

}  // namespace losscost::cli
