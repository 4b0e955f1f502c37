#include "losscost/synth.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "losscost/error.hpp"
#include "losscost/io.hpp"

namespace losscost {

namespace {

constexpr const char* kSection = "simulate";

const std::array<std::string, 5> kRiskTypes{"Apartment", "Office", "Retail", "Restaurant", "Contractor"};
constexpr std::array<double, 5> kRiskProb{0.30, 0.25, 0.20, 0.15, 0.10};
constexpr std::array<double, 5> kRiskEffect{0.0, -0.20, 0.10, 0.45, 0.30};

const std::array<std::string, 4> kCategories{"Food", "Services", "Retail", "Health"};
constexpr std::array<double, 4> kCategoryProb{0.35, 0.30, 0.20, 0.15};
constexpr std::array<double, 4> kCategoryEffect{0.25, -0.10, 0.0, -0.20};

const std::array<std::string, 4> kViolations{"fire_violation", "health_violation", "building_violation",
                                             "zoning_violation"};
constexpr double kViolationProb = 0.05;
constexpr std::array<double, 4> kViolationEffect{0.50, 0.30, 0.40, 0.15};

constexpr double kReviewMissingEffect = 0.10;

template <std::size_t N>
std::size_t draw_category(std::mt19937_64& rng, const std::array<double, N>& prob) {
  std::discrete_distribution<std::size_t> d(prob.begin(), prob.end());
  return d(rng);
}

struct Effects {
  double inhouse;
  double insurtech;
  std::vector<std::string> active;

  double scale(const std::string& name, bool insurtech_block) const {
    if (!active.empty() && std::find(active.begin(), active.end(), name) == active.end()) return 0.0;
    return insurtech_block ? insurtech : inhouse;
  }
};

// Exact first and second moments of exp(eta_IT); the insurtech features are
// independent of each other and of the in-house block.
std::pair<double, double> insurtech_moments(const GeneratorConfig& c, const Effects& e) {
  double m1 = 1.0, m2 = 1.0;
  auto accumulate = [&](const auto& probs, const auto& effects) {
    double a = 0.0, b = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      a += probs[k] * std::exp(effects[k]);
      b += probs[k] * std::exp(2.0 * effects[k]);
    }
    m1 *= a;
    m2 *= b;
  };

  const double sr = e.scale("review_score", true);
  std::vector<double> rp, re;
  for (int s = 1; s <= 5; ++s) {
    rp.push_back(c.review_fill_rate / 5.0);
    re.push_back(-0.25 * sr * (s - 3));
  }
  rp.push_back(1.0 - c.review_fill_rate);
  re.push_back(kReviewMissingEffect * sr);
  accumulate(rp, re);

  const double st = e.scale("traffic_density", true);
  std::vector<double> tp, te;
  for (int s = 1; s <= 10; ++s) {
    tp.push_back(0.1);
    te.push_back(-0.09 * st * (s - 5.5));
  }
  accumulate(tp, te);

  const double sw = e.scale("web_presence", true);
  accumulate(std::array<double, 2>{0.45, 0.55}, std::array<double, 2>{0.0, -0.3 * sw});

  const double sc = e.scale("business_category", true);
  std::array<double, 4> ce{};
  for (std::size_t k = 0; k < 4; ++k) ce[k] = kCategoryEffect[k] * sc;
  accumulate(kCategoryProb, ce);

  std::array<double, 5> vp{1.0 - 4 * kViolationProb, kViolationProb, kViolationProb, kViolationProb,
                           kViolationProb};
  std::array<double, 5> ve{};
  for (std::size_t k = 0; k < 4; ++k) ve[k + 1] = kViolationEffect[k] * e.scale(kViolations[k], true);
  accumulate(vp, ve);
  return {m1, m2};
}

// Dispersion at which the average no-claim probability over the given rows
// equals the target share.
double calibrate_dispersion(const std::vector<double>& mu, const std::vector<double>& exposure, double p,
                            double zero_share) {
  auto share_at = [&](double log_phi) {
    const double phi = std::exp(log_phi);
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double lambda = std::pow(mu[i], 2.0 - p) / (phi * (2.0 - p));
      s += std::exp(-lambda * exposure[i]);
    }
    return s / static_cast<double>(mu.size());
  };
  double lo = -30.0, hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (share_at(mid) < zero_share) lo = mid;
    else hi = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

}  // namespace

void GeneratorConfig::validate() const {
  if (rows == 0) throw Error(ErrorCode::InvalidConfig, "rows must be positive");
  if (coverages.empty()) throw Error(ErrorCode::InvalidConfig, "at least one coverage profile is required");
  double total = 0.0;
  for (const auto& c : coverages) {
    if (!(c.share >= 0.0 && c.share <= 1.0)) throw Error(ErrorCode::InvalidConfig, "coverage share outside [0,1]");
    if (!(c.zero_share >= 0.0 && c.zero_share <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "zero share outside [0,1]");
    }
    if (!(c.power > 1.0 && c.power < 2.0)) throw Error(ErrorCode::PowerOutOfRange, "generator power must lie in (1,2)");
    if (!(c.base_loss_cost > 0.0)) throw Error(ErrorCode::InvalidConfig, "base_loss_cost must be positive");
    if (!(c.dispersion >= 0.0)) throw Error(ErrorCode::InvalidConfig, "dispersion must be >= 0");
    total += c.share;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidConfig, "coverage shares must sum to 1");
  for (std::size_t i = 0; i < coverages.size(); ++i) {
    for (std::size_t j = i + 1; j < coverages.size(); ++j) {
      if (coverages[i].tag == coverages[j].tag) throw Error(ErrorCode::InvalidConfig, "duplicate coverage profile");
    }
  }
  if (!(partial_exposure_share >= 0.0 && partial_exposure_share <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "partial_exposure_share outside [0,1]");
  }
  if (!(review_fill_rate >= 0.0 && review_fill_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "review_fill_rate outside [0,1]");
  }
  if (!(inhouse_signal >= 0.0) || !(insurtech_signal >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "signal multipliers must be >= 0");
  }
}

GeneratorConfig GeneratorConfig::preset(const std::string& name) {
  GeneratorConfig c;
  const CoverageProfile bg{Coverage::BG, 1.0, 0.965, 1.34, 500.0, 0.0};
  const CoverageProfile bp{Coverage::BP, 1.0, 0.980, 1.50, 250.0, 0.0};
  const CoverageProfile liab{Coverage::LIAB, 1.0, 0.990, 1.45, 120.0, 0.0};
  if (name == "bg") {
    c.coverages = {bg};
  } else if (name == "bp") {
    c.coverages = {bp};
  } else if (name == "liab") {
    c.coverages = {liab};
  } else if (name == "mixed") {
    c.coverages = {bg, bp, liab};
    c.coverages[0].share = 0.5;
    c.coverages[1].share = 0.3;
    c.coverages[2].share = 0.2;
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown generator preset: " + name);
  }
  return c;
}

GeneratorConfig GeneratorConfig::from_config(const Config& config) {
  GeneratorConfig c = preset(config.get_string(kSection, "preset", "bg"));
  c.rows = static_cast<std::size_t>(config.get_int(kSection, "rows", static_cast<std::int64_t>(c.rows)));
  if (config.has(kSection, "coverages")) {
    std::vector<CoverageProfile> picked;
    const auto full = preset("mixed").coverages;
    for (const auto& tag_text : config.get_list(kSection, "coverages")) {
      const Coverage tag = parse_coverage(tag_text);
      auto it = std::find_if(full.begin(), full.end(), [&](const CoverageProfile& p) { return p.tag == tag; });
      picked.push_back(*it);
      picked.back().share = 1.0 / static_cast<double>(config.get_list(kSection, "coverages").size());
    }
    c.coverages = picked;
  }
  for (auto& p : c.coverages) {
    const std::string t = to_string(p.tag);
    p.share = config.get_double(kSection, t + ".share", p.share);
    p.zero_share = config.get_double(kSection, t + ".zero_share", p.zero_share);
    p.power = config.get_double(kSection, t + ".power", p.power);
    p.base_loss_cost = config.get_double(kSection, t + ".base_loss_cost", p.base_loss_cost);
    p.dispersion = config.get_double(kSection, t + ".dispersion", p.dispersion);
  }
  c.inhouse_signal = config.get_double(kSection, "inhouse_signal", c.inhouse_signal);
  c.insurtech_signal = config.get_double(kSection, "insurtech_signal", c.insurtech_signal);
  const auto ih_noise = config.get_int(kSection, "inhouse_noise", static_cast<std::int64_t>(c.inhouse_noise));
  const auto it_noise = config.get_int(kSection, "insurtech_noise", static_cast<std::int64_t>(c.insurtech_noise));
  if (ih_noise < 0 || it_noise < 0) throw Error(ErrorCode::InvalidConfig, "noise column counts must be >= 0");
  c.inhouse_noise = static_cast<std::size_t>(ih_noise);
  c.insurtech_noise = static_cast<std::size_t>(it_noise);
  if (config.has(kSection, "active_signals")) c.active_signals = config.get_list(kSection, "active_signals");
  c.partial_exposure_share = config.get_double(kSection, "partial_exposure_share", c.partial_exposure_share);
  c.review_fill_rate = config.get_double(kSection, "review_fill_rate", c.review_fill_rate);
  c.validate();
  return c;
}

void GeneratorConfig::to_config(Config& config) const {
  config.set(kSection, "rows", std::to_string(rows));
  std::string tags;
  for (const auto& p : coverages) tags += (tags.empty() ? "" : ",") + to_string(p.tag);
  config.set(kSection, "coverages", tags);
  for (const auto& p : coverages) {
    const std::string t = to_string(p.tag);
    config.set(kSection, t + ".share", format_number(p.share));
    config.set(kSection, t + ".zero_share", format_number(p.zero_share));
    config.set(kSection, t + ".power", format_number(p.power));
    config.set(kSection, t + ".base_loss_cost", format_number(p.base_loss_cost));
    config.set(kSection, t + ".dispersion", format_number(p.dispersion));
  }
  config.set(kSection, "inhouse_signal", format_number(inhouse_signal));
  config.set(kSection, "insurtech_signal", format_number(insurtech_signal));
  config.set(kSection, "inhouse_noise", std::to_string(inhouse_noise));
  config.set(kSection, "insurtech_noise", std::to_string(insurtech_noise));
  std::string active;
  for (const auto& a : active_signals) active += (active.empty() ? "" : ",") + a;
  config.set(kSection, "active_signals", active);
  config.set(kSection, "partial_exposure_share", format_number(partial_exposure_share));
  config.set(kSection, "review_fill_rate", format_number(review_fill_rate));
}

SyntheticPortfolio synthesize_portfolio(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t n = config.rows;
  const Eigen::Index rows = static_cast<Eigen::Index>(n);
  std::seed_seq feature_seed{seed, std::uint64_t{1}};
  std::seed_seq claim_seed{seed, std::uint64_t{2}};
  std::mt19937_64 rng(feature_seed);
  std::mt19937_64 claims(claim_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Effects effects{config.inhouse_signal, config.insurtech_signal, config.active_signals};
  const bool multi = config.coverages.size() > 1;

  SyntheticPortfolio out;
  auto& t = out.table;
  auto add = [&](const std::string& name, FeatureKind kind, const std::string& block,
                 std::vector<std::string> categories = {}) {
    t.features.push_back({name, kind, std::move(categories), 1.0, block});
    t.columns.emplace_back(rows);
    return t.columns.size() - 1;
  };

  const auto c_limit = add("log_limit", FeatureKind::Numeric, kInHouseBlock);
  const auto c_age = add("building_age", FeatureKind::Numeric, kInHouseBlock);
  const auto c_years = add("years_in_business", FeatureKind::Numeric, kInHouseBlock);
  const auto c_risk = add("risk_type", FeatureKind::Categorical, kInHouseBlock,
                          std::vector<std::string>(kRiskTypes.begin(), kRiskTypes.end()));
  const auto c_sprinkler = add("sprinkler", FeatureKind::Binary, kInHouseBlock);
  std::size_t c_cov_type = 0;
  if (multi) {
    std::vector<std::string> tags;
    for (const auto& p : config.coverages) tags.push_back(to_string(p.tag));
    c_cov_type = add("coverage_type", FeatureKind::Categorical, kInHouseBlock, tags);
  }
  std::vector<std::size_t> ih_noise;
  for (std::size_t k = 0; k < config.inhouse_noise; ++k) {
    ih_noise.push_back(add(fmt::format("inhouse_noise_{}", k + 1), FeatureKind::Numeric, kInHouseBlock));
  }
  const auto c_review = add("review_score", FeatureKind::Numeric, kInsurTechBlock);
  const auto c_traffic = add("traffic_density", FeatureKind::Numeric, kInsurTechBlock);
  const auto c_web = add("web_presence", FeatureKind::Binary, kInsurTechBlock);
  const auto c_category = add("business_category", FeatureKind::Categorical, kInsurTechBlock,
                              std::vector<std::string>(kCategories.begin(), kCategories.end()));
  std::array<std::size_t, 4> c_violation{};
  for (std::size_t k = 0; k < 4; ++k) c_violation[k] = add(kViolations[k], FeatureKind::Binary, kInsurTechBlock);
  std::vector<std::size_t> it_noise;
  for (std::size_t k = 0; k < config.insurtech_noise; ++k) {
    it_noise.push_back(add(fmt::format("insurtech_noise_{}", k + 1), FeatureKind::Numeric, kInsurTechBlock));
  }

  t.response.resize(rows);
  t.exposure.resize(rows);
  t.coverage.resize(n);
  t.id.resize(n);
  std::vector<std::size_t> profile(n);
  Eigen::VectorXd eta_ih(rows), eta_it(rows);

  std::vector<double> cov_share;
  for (const auto& p : config.coverages) cov_share.push_back(p.share);
  std::discrete_distribution<std::size_t> pick_cov(cov_share.begin(), cov_share.end());
  std::uniform_int_distribution<int> age(0, 80), years(1, 40), review(1, 5), traffic(1, 10);
  std::uniform_real_distribution<double> partial(0.1, 1.0);

  const double s_limit = effects.scale("log_limit", false);
  const double s_age = effects.scale("building_age", false);
  const double s_years = effects.scale("years_in_business", false);
  const double s_risk = effects.scale("risk_type", false);
  const double s_sprinkler = effects.scale("sprinkler", false);
  const double s_review = effects.scale("review_score", true);
  const double s_traffic = effects.scale("traffic_density", true);
  const double s_web = effects.scale("web_presence", true);
  const double s_category = effects.scale("business_category", true);

  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    t.id[i] = fmt::format("P{:06d}", i + 1);
    profile[i] = multi ? pick_cov(rng) : 0;
    t.coverage[i] = config.coverages[profile[i]].tag;
    t.exposure(r) = unit(rng) < config.partial_exposure_share ? partial(rng) : 1.0;

    double ih = 0.0;
    const double limit = 13.0 + normal(rng);
    t.columns[c_limit](r) = limit;
    ih += 0.35 * s_limit * (limit - 13.0);
    const int a = age(rng);
    t.columns[c_age](r) = a;
    ih += 0.006 * s_age * (a - 40);
    const int yb = years(rng);
    t.columns[c_years](r) = yb;
    ih += -0.012 * s_years * (yb - 20);
    const auto rk = draw_category(rng, kRiskProb);
    t.columns[c_risk](r) = static_cast<double>(rk);
    ih += kRiskEffect[rk] * s_risk;
    const bool spr = unit(rng) < 0.4;
    t.columns[c_sprinkler](r) = spr ? 1.0 : 0.0;
    ih += spr ? -0.25 * s_sprinkler : 0.0;
    if (multi) t.columns[c_cov_type](r) = static_cast<double>(profile[i]);
    for (auto c : ih_noise) t.columns[c](r) = normal(rng);

    double it = 0.0;
    if (unit(rng) < config.review_fill_rate) {
      const int s = review(rng);
      t.columns[c_review](r) = s;
      it += -0.25 * s_review * (s - 3);
    } else {
      t.columns[c_review](r) = std::numeric_limits<double>::quiet_NaN();
      it += kReviewMissingEffect * s_review;
    }
    const int td = traffic(rng);
    t.columns[c_traffic](r) = td;
    it += -0.09 * s_traffic * (td - 5.5);
    const bool web = unit(rng) < 0.55;
    t.columns[c_web](r) = web ? 1.0 : 0.0;
    it += web ? -0.3 * s_web : 0.0;
    const auto bc = draw_category(rng, kCategoryProb);
    t.columns[c_category](r) = static_cast<double>(bc);
    it += kCategoryEffect[bc] * s_category;
    const double v = unit(rng);
    for (std::size_t k = 0; k < 4; ++k) {
      const bool hit = v >= k * kViolationProb && v < (k + 1) * kViolationProb;
      t.columns[c_violation[k]](r) = hit ? 1.0 : 0.0;
      if (hit) it += kViolationEffect[k] * effects.scale(kViolations[k], true);
    }
    for (auto c : it_noise) t.columns[c](r) = normal(rng);

    eta_ih(r) = ih;
    eta_it(r) = it;
  }

  const auto [m1, m2] = insurtech_moments(config, effects);
  auto& truth = out.truth;
  truth.mu.resize(rows);
  truth.mu_inhouse.resize(rows);
  truth.noise_variance.resize(rows);
  truth.gain_variance.resize(rows);
  truth.dispersion.assign(config.coverages.size(), 0.0);

  for (std::size_t c = 0; c < config.coverages.size(); ++c) {
    const auto& prof = config.coverages[c];
    std::vector<std::size_t> members;
    double raw_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (profile[i] != c) continue;
      members.push_back(i);
      raw_mean += std::exp(eta_ih(static_cast<Eigen::Index>(i)) + eta_it(static_cast<Eigen::Index>(i)));
    }
    if (members.empty()) continue;
    raw_mean /= static_cast<double>(members.size());
    const double offset = std::log(prof.base_loss_cost) - std::log(raw_mean);

    const bool no_claims = prof.zero_share >= 1.0;
    std::vector<double> mu, ex;
    for (auto i : members) {
      const auto r = static_cast<Eigen::Index>(i);
      mu.push_back(std::exp(offset + eta_ih(r) + eta_it(r)));
      ex.push_back(t.exposure(r));
    }
    const double p = prof.power;
    double phi = 0.0;
    if (!no_claims) phi = prof.dispersion > 0.0 ? prof.dispersion : calibrate_dispersion(mu, ex, p, prof.zero_share);
    truth.dispersion[c] = phi;

    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto r = static_cast<Eigen::Index>(members[m]);
      if (no_claims) {
        truth.mu(r) = truth.mu_inhouse(r) = truth.noise_variance(r) = truth.gain_variance(r) = 0.0;
        continue;
      }
      const double base = std::exp(offset + eta_ih(r));
      truth.mu(r) = mu[m];
      truth.mu_inhouse(r) = base * m1;
      truth.noise_variance(r) = phi * std::pow(mu[m], p) / ex[m];
      truth.gain_variance(r) = base * base * (m2 - m1 * m1);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto& prof = config.coverages[profile[i]];
    const double mu = truth.mu(r);
    if (!(mu > 0.0)) {
      t.response(r) = 0.0;
      continue;
    }
    const double p = prof.power;
    const double phi = truth.dispersion[profile[i]];
    const double lambda = std::pow(mu, 2.0 - p) / (phi * (2.0 - p));
    const double shape = (2.0 - p) / (p - 1.0);
    const double scale = phi * (p - 1.0) * std::pow(mu, p - 1.0);
    std::poisson_distribution<long long> count(lambda * t.exposure(r));
    const long long k = count(claims);
    double loss = 0.0;
    if (k > 0) {
      std::gamma_distribution<double> severity(static_cast<double>(k) * shape, scale);
      loss = severity(claims);
    }
    t.response(r) = loss / t.exposure(r);
  }

  t.refresh_fill_rates();
  t.validate();
  out.schema.features = t.features;
  return out;
}

void write_ground_truth(std::ostream& out, const SyntheticPortfolio& portfolio) {
  const auto& t = portfolio.table;
  const auto& g = portfolio.truth;
  out << "policy_id,mu,mu_inhouse,noise_variance,gain_variance\n";
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    out << t.id[static_cast<std::size_t>(i)] << ',' << format_exact(g.mu(i)) << ',' << format_exact(g.mu_inhouse(i))
        << ',' << format_exact(g.noise_variance(i)) << ',' << format_exact(g.gain_variance(i)) << '\n';
  }
}

GroundTruth read_ground_truth(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("policy_id,mu", 0) != 0) {
    throw Error(ErrorCode::ParseError, "ground-truth file lacks its header");
  }
  std::vector<std::array<double, 4>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_list(line, ',');
    if (f.size() != 5) throw Error(ErrorCode::ParseError, "bad ground-truth row: " + line);
    rows.push_back({parse_double(f[1], "mu"), parse_double(f[2], "mu_inhouse"),
                    parse_double(f[3], "noise_variance"), parse_double(f[4], "gain_variance")});
  }
  GroundTruth g;
  const auto n = static_cast<Eigen::Index>(rows.size());
  g.mu.resize(n);
  g.mu_inhouse.resize(n);
  g.noise_variance.resize(n);
  g.gain_variance.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    g.mu(i) = r[0];
    g.mu_inhouse(i) = r[1];
    g.noise_variance(i) = r[2];
    g.gain_variance(i) = r[3];
  }
  return g;
}

}  // namespace losscost
