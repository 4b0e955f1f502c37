#include "losscost/glm.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "losscost/config.hpp"
#include "losscost/error.hpp"
#include "losscost/io.hpp"
#include "losscost/tweedie.hpp"

namespace losscost {

namespace {

struct Standardization {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  std::vector<Eigen::Index> active;
};

Standardization standardize_columns(const Eigen::MatrixXd& x) {
  Standardization s;
  const auto n = static_cast<double>(x.rows());
  s.center = x.colwise().sum().transpose() / n;
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.center[j]).square().sum() / n;
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * (1.0 + std::abs(s.center[j]))) {
      s.scale[j] = sd;
      s.active.push_back(j);
    } else {
      s.scale[j] = 0.0;
    }
  }
  return s;
}

Eigen::MatrixXd standardized_active(const Eigen::MatrixXd& x, const Eigen::VectorXd& center,
                                    const Eigen::VectorXd& scale, const std::vector<Eigen::Index>& active) {
  Eigen::MatrixXd z(x.rows(), static_cast<Eigen::Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k) {
    const auto j = active[k];
    z.col(static_cast<Eigen::Index>(k)) = (x.col(j).array() - center[j]) / scale[j];
  }
  return z;
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

double weighted_mean_log(const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const double num = w.dot(y);
  if (!(num > 0.0)) throw Error(ErrorCode::DegenerateResponse, "weighted response total is zero");
  return std::log(num / w.sum());
}

// Smooth part of the normalised objective and its per-row derivative factor.
double mean_kernel(double p, const Eigen::VectorXd& eta, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                   double total_weight) {
  long double f = 0.0L;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (w[i] != 0.0) f += static_cast<long double>(w[i] * tweedie::kernel(p, y[i], eta[i]));
  }
  return static_cast<double>(f / total_weight);
}

Eigen::VectorXd row_gradient(double p, const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& w, double total_weight) {
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    r[i] = w[i] == 0.0 ? 0.0 : w[i] * tweedie::gradient(p, y[i], eta[i]) / total_weight;
  }
  return r;
}

double kkt_gap(const Eigen::VectorXd& grad_beta, double grad_intercept, const Eigen::VectorXd& beta, double l1) {
  double gap = std::abs(grad_intercept);
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double r = beta[j] == 0.0 ? std::max(0.0, std::abs(grad_beta[j]) - l1)
                                    : std::abs(grad_beta[j] + (beta[j] > 0 ? l1 : -l1));
    gap = std::max(gap, r);
  }
  return gap;
}

// Coordinate descent on min 0.5 t'Gt - c't + 0.5 l2 |t_1..|^2 + l1 |t_1..|_1 (t_0 unpenalized). Once the
// support and signs settle, the exact solution on that support finishes the job.
void solve_subproblem(const Eigen::MatrixXd& gram, const Eigen::VectorXd& c, double l1, double l2, double tol,
                      Eigen::VectorXd& t) {
  const Eigen::Index m = t.size();
  Eigen::VectorXd gt = gram * t;
  for (int round = 0; round < 400; ++round) {
    double biggest = 0.0;
    for (int sweep = 0; sweep < 25; ++sweep) {
      biggest = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        const double gjj = gram(j, j);
        if (!(gjj > 0.0)) continue;
        const double num = c[j] - gt[j] + gjj * t[j];
        const double next = j == 0 ? num / gjj : soft_threshold(num, l1) / (gjj + l2);
        const double delta = next - t[j];
        if (delta != 0.0) {
          gt += delta * gram.col(j);
          t[j] = next;
          biggest = std::max(biggest, std::abs(delta));
        }
      }
      if (biggest <= tol) break;
    }

    std::vector<Eigen::Index> support;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == 0 ? gram(0, 0) > 0.0 : t[j] != 0.0) support.push_back(j);
    }
    const auto s = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd g(s, s);
    Eigen::VectorXd rhs(s);
    for (Eigen::Index u = 0; u < s; ++u) {
      const auto j = support[static_cast<std::size_t>(u)];
      for (Eigen::Index v = 0; v < s; ++v) g(u, v) = gram(j, support[static_cast<std::size_t>(v)]);
      rhs[u] = c[j];
      if (j != 0) {
        g(u, u) += l2;
        rhs[u] -= t[j] > 0 ? l1 : -l1;
      }
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
    bool valid = ldlt.info() == Eigen::Success && ldlt.isPositive();
    Eigen::VectorXd exact;
    if (valid) {
      exact = ldlt.solve(rhs);
      valid = exact.allFinite();
    }
    for (Eigen::Index u = 0; valid && u < s; ++u) {
      const auto j = support[static_cast<std::size_t>(u)];
      if (j != 0 && (exact[u] > 0) != (t[j] > 0)) valid = false;
    }
    if (valid) {
      Eigen::VectorXd candidate = Eigen::VectorXd::Zero(m);
      for (Eigen::Index u = 0; u < s; ++u) candidate[support[static_cast<std::size_t>(u)]] = exact[u];
      const Eigen::VectorXd gc = gram * candidate;
      for (Eigen::Index j = 1; valid && j < m; ++j) {
        if (candidate[j] == 0.0 && std::abs(c[j] - gc[j]) > l1 * (1.0 + 1e-12) + 1e-15) valid = false;
      }
      if (valid) {
        t = std::move(candidate);
        return;
      }
    }
    if (biggest <= tol) return;
  }
}

}  // namespace

void ElasticNetConfig::validate() const {
  if (!(alpha >= 0.0)) throw Error(ErrorCode::InvalidConfig, "alpha must be >= 0");
  if (!(l1_ratio >= 0.0 && l1_ratio <= 1.0)) throw Error(ErrorCode::InvalidConfig, "l1_ratio must lie in [0,1]");
  if (!(coef_threshold >= 0.0)) throw Error(ErrorCode::InvalidConfig, "coef_threshold must be >= 0");
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "tol must be > 0");
  if (max_iter == 0) throw Error(ErrorCode::InvalidConfig, "max_iter must be positive");
  TweedieSpec{power};
}

Eigen::VectorXd GlmModel::linear_predictor(const Eigen::MatrixXd& x) const {
  if (x.cols() != coefficients.size()) {
    throw Error(ErrorCode::ColumnMismatch, "model expects " + std::to_string(coefficients.size()) +
                                               " columns, got " + std::to_string(x.cols()));
  }
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(x.rows(), intercept);
  for (Eigen::Index j = 0; j < coefficients.size(); ++j) {
    if (coefficients[j] == 0.0) continue;
    if (stage == GlmStage::Penalized) {
      eta.array() += coefficients[j] * (x.col(j).array() - center[j]) / scale[j];
    } else {
      eta += coefficients[j] * x.col(j);
    }
  }
  return eta;
}

Eigen::VectorXd GlmModel::predict(const Eigen::MatrixXd& x) const {
  return linear_predictor(x).array().exp();
}

double penalized_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                           double intercept, const Eigen::VectorXd& beta, const ElasticNetConfig& config) {
  const Eigen::VectorXd eta = (z * beta).array() + intercept;
  const double l1 = config.alpha * config.l1_ratio;
  const double l2 = config.alpha * (1.0 - config.l1_ratio);
  return mean_kernel(config.power, eta, y, w, w.sum()) + 0.5 * l2 * beta.squaredNorm() +
         l1 * beta.lpNorm<1>();
}

GlmFit fit_penalized(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                     const ElasticNetConfig& config) {
  config.validate();
  if (y.size() != x.rows() || w.size() != x.rows()) throw Error(ErrorCode::ColumnMismatch, "row counts differ");
  const double p = config.power;
  const double total_weight = w.sum();
  const double l1 = config.alpha * config.l1_ratio;
  const double l2 = config.alpha * (1.0 - config.l1_ratio);

  const auto st = standardize_columns(x);
  // Column 0 is the intercept; the rest are the standardized active columns.
  Eigen::MatrixXd a(x.rows(), static_cast<Eigen::Index>(st.active.size()) + 1);
  a.col(0).setOnes();
  a.rightCols(a.cols() - 1) = standardized_active(x, st.center, st.scale, st.active);
  const Eigen::Index m = a.cols();

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(m);
  theta[0] = weighted_mean_log(y, w);
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(x.rows(), theta[0]);
  auto objective = [&](const Eigen::VectorXd& t, const Eigen::VectorXd& e) {
    const auto beta = t.tail(m - 1);
    return mean_kernel(p, e, y, w, total_weight) + 0.5 * l2 * beta.squaredNorm() + l1 * beta.lpNorm<1>();
  };
  double current = objective(theta, eta);

  GlmDiagnostics diag;
  diag.objective_trace.push_back(current);

  Eigen::VectorXd grad;
  auto refresh_gradient = [&] {
    grad = a.transpose() * row_gradient(p, eta, y, w, total_weight);
    grad.tail(m - 1) += l2 * theta.tail(m - 1);
  };
  refresh_gradient();

  double last_update = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  for (; it < config.max_iter; ++it) {
    diag.gradient_norm = kkt_gap(grad.tail(m - 1), grad[0], theta.tail(m - 1), l1);
    if (last_update <= config.tol && diag.gradient_norm <= 10.0 * config.tol) {
      diag.converged = true;
      break;
    }

    // Newton model of the kernel around theta, solved with the penalty by coordinate descent.
    Eigen::VectorXd h(x.rows());
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      h[i] = w[i] == 0.0 ? 0.0 : w[i] * tweedie::hessian(p, y[i], eta[i]) / total_weight;
    }
    const Eigen::MatrixXd gram = a.transpose() * h.asDiagonal() * a;
    // Minimize 0.5 t'Gt - c't + 0.5 l2 |t_beta|^2 + l1 |t_beta|_1 over the new point t.
    Eigen::VectorXd c = gram * theta - grad;
    c.tail(m - 1) += l2 * theta.tail(m - 1);
    Eigen::VectorXd t = theta;
    solve_subproblem(gram, c, l1, l2, 1e-3 * config.tol, t);

    const Eigen::VectorXd d = t - theta;
    const double decrease = grad.dot(d) - l2 * theta.tail(m - 1).dot(d.tail(m - 1)) +
                            0.5 * l2 * (t.tail(m - 1).squaredNorm() - theta.tail(m - 1).squaredNorm()) +
                            l1 * (t.tail(m - 1).lpNorm<1>() - theta.tail(m - 1).lpNorm<1>());
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd next_theta, next_eta;
    double next_value = current;
    // Below this the objective cannot resolve the predicted decrease, so the full Newton step is taken.
    const bool tiny = -decrease <= 1e-13 * (1.0 + std::abs(current));
    for (int bt = 0; bt < 60; ++bt) {
      next_theta = theta + step * d;
      next_eta = a * next_theta;
      next_value = objective(next_theta, next_eta);
      if (std::isfinite(next_value) &&
          (tiny || next_value <= current + 1e-4 * step * std::min(decrease, 0.0))) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || (!tiny && next_value > current)) break;

    last_update = (next_theta - theta).cwiseAbs().maxCoeff();
    theta = std::move(next_theta);
    eta = std::move(next_eta);
    current = next_value;
    diag.objective_trace.push_back(current);
    refresh_gradient();
  }
  diag.iterations = it;
  diag.gradient_norm = kkt_gap(grad.tail(m - 1), grad[0], theta.tail(m - 1), l1);
  if (!diag.converged && diag.gradient_norm <= 10.0 * config.tol) diag.converged = true;
  if (!diag.converged) {
    throw NotConverged("elastic net stopped after " + std::to_string(it) + " iterations with KKT gap " +
                           format_number(diag.gradient_norm),
                       diag.gradient_norm, it);
  }

  GlmModel model;
  model.stage = GlmStage::Penalized;
  model.power = p;
  model.intercept = theta[0];
  model.center = st.center;
  model.scale = st.scale;
  model.coefficients = Eigen::VectorXd::Zero(x.cols());
  for (std::size_t k = 0; k < st.active.size(); ++k) {
    model.coefficients[st.active[k]] = theta[static_cast<Eigen::Index>(k) + 1];
  }
  model.selected.assign(static_cast<std::size_t>(x.cols()), false);
  for (Eigen::Index j = 0; j < x.cols(); ++j) model.selected[static_cast<std::size_t>(j)] = model.coefficients[j] != 0.0;
  return {std::move(model), std::move(diag)};
}

Eigen::VectorXd kkt_residuals(const GlmModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& w, const ElasticNetConfig& config) {
  const double l1 = config.alpha * config.l1_ratio;
  const double l2 = config.alpha * (1.0 - config.l1_ratio);
  const Eigen::VectorXd eta = model.linear_predictor(x);
  const Eigen::VectorXd r = row_gradient(model.power, eta, y, w, w.sum());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.cols() + 1);
  out[0] = std::abs(r.sum());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (model.scale[j] == 0.0) continue;
    const double b = model.coefficients[j];
    const double g = ((x.col(j).array() - model.center[j]) / model.scale[j]).matrix().dot(r) + l2 * b;
    out[j + 1] = b == 0.0 ? std::max(0.0, std::abs(g) - l1) : std::abs(g + (b > 0 ? l1 : -l1));
  }
  return out;
}

Selection select_features(const GlmModel& penalized, double threshold,
                          std::span<const std::size_t> column_feature) {
  const auto width = static_cast<std::size_t>(penalized.coefficients.size());
  std::vector<std::size_t> group(width);
  if (column_feature.size() == width) {
    std::copy(column_feature.begin(), column_feature.end(), group.begin());
  } else {
    for (std::size_t j = 0; j < width; ++j) group[j] = j;
  }
  std::map<std::size_t, bool> passes;
  for (std::size_t j = 0; j < width; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const bool usable = penalized.scale.size() == 0 || penalized.scale[jj] > 0.0;
    if (usable && std::abs(penalized.coefficients[jj]) > threshold) passes[group[j]] = true;
  }
  Selection sel;
  sel.mask.assign(width, false);
  for (std::size_t j = 0; j < width; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const bool usable = penalized.scale.size() == 0 || penalized.scale[jj] > 0.0;
    sel.mask[j] = usable && passes.count(group[j]) > 0;
  }
  sel.empty = std::none_of(sel.mask.begin(), sel.mask.end(), [](bool b) { return b; });
  return sel;
}

GlmFit refit_unpenalized(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                         const std::vector<bool>& selected, double power,
                         std::span<const std::size_t> column_feature, const RefitOptions& options) {
  TweedieSpec spec(power);
  if (y.size() != x.rows() || w.size() != x.rows()) throw Error(ErrorCode::ColumnMismatch, "row counts differ");
  if (selected.size() != static_cast<std::size_t>(x.cols())) {
    throw Error(ErrorCode::ColumnMismatch, "selection mask width differs from matrix");
  }
  const double total_weight = w.sum();
  GlmDiagnostics diag;

  // Columns that can carry a coefficient: selected and not constant.
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (!selected[static_cast<std::size_t>(j)]) continue;
    if (x.col(j).maxCoeff() == x.col(j).minCoeff()) {
      diag.warnings.push_back("constant column " + std::to_string(j) + " held at zero");
      continue;
    }
    active.push_back(j);
  }
  if (column_feature.size() == static_cast<std::size_t>(x.cols())) {
    std::map<std::size_t, std::vector<Eigen::Index>> groups;
    for (auto j : active) groups[column_feature[static_cast<std::size_t>(j)]].push_back(j);
    for (const auto& [feature, cols] : groups) {
      if (cols.size() < 2) continue;
      Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(x.rows());
      for (auto j : cols) rowsum += x.col(j);
      if ((rowsum.array() != 1.0).any()) continue;
      Eigen::Index reference = cols.front();
      for (auto j : cols) {
        if (x.col(j).sum() > x.col(reference).sum()) reference = j;
      }
      active.erase(std::find(active.begin(), active.end(), reference));
    }
  }

  const auto k = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd xs(x.rows(), k);
  Eigen::VectorXd col_scale(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const auto j = active[static_cast<std::size_t>(a)];
    col_scale[a] = x.col(j).cwiseAbs().maxCoeff();
    xs.col(a) = x.col(j) / col_scale[a];
  }

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(k + 1);
  theta[0] = weighted_mean_log(y, w);
  auto eta_of = [&](const Eigen::VectorXd& t) -> Eigen::VectorXd {
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(x.rows(), t[0]);
    if (k > 0) eta += xs * t.tail(k);
    return eta;
  };
  auto objective = [&](const Eigen::VectorXd& eta) { return mean_kernel(power, eta, y, w, total_weight); };

  Eigen::VectorXd eta = eta_of(theta);
  double f = objective(eta);
  diag.objective_trace.push_back(f);
  std::size_t it = 0;
  for (; it < options.max_iter; ++it) {
    Eigen::VectorXd g_row(x.rows()), h_row(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      g_row[i] = w[i] == 0.0 ? 0.0 : w[i] * tweedie::gradient(power, y[i], eta[i]) / total_weight;
      h_row[i] = w[i] == 0.0 ? 0.0 : w[i] * tweedie::hessian(power, y[i], eta[i]) / total_weight;
    }
    Eigen::VectorXd grad(k + 1);
    grad[0] = g_row.sum();
    if (k > 0) grad.tail(k) = xs.transpose() * g_row;
    diag.gradient_norm = grad.cwiseAbs().maxCoeff();
    if (diag.gradient_norm <= options.tol) {
      diag.converged = true;
      break;
    }
    Eigen::MatrixXd hess(k + 1, k + 1);
    hess(0, 0) = h_row.sum();
    if (k > 0) {
      const Eigen::VectorXd cross = xs.transpose() * h_row;
      hess.block(1, 0, k, 1) = cross;
      hess.block(0, 1, 1, k) = cross.transpose();
      hess.block(1, 1, k, k) = xs.transpose() * h_row.asDiagonal() * xs;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd dir;
    const Eigen::VectorXd d = ldlt.vectorD();
    const bool usable = ldlt.info() == Eigen::Success && d.minCoeff() > 1e-13 * d.cwiseAbs().maxCoeff();
    if (usable) {
      dir = -ldlt.solve(grad);
    } else {
      if (!diag.singular_hessian) diag.warnings.push_back("singular Hessian; falling back to gradient steps");
      diag.singular_hessian = true;
      dir = -grad;
    }
    const double slope = grad.dot(dir);
    // Inside the quadratic regime the decrease drops below rounding; take the full step.
    if (usable && -slope < 1e-13 * (1.0 + std::abs(f))) {
      theta += dir;
      eta = eta_of(theta);
      f = objective(eta);
      diag.objective_trace.push_back(f);
      continue;
    }
    double s = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Eigen::VectorXd trial = theta + s * dir;
      const Eigen::VectorXd trial_eta = eta_of(trial);
      const double ft = objective(trial_eta);
      if (std::isfinite(ft) && ft <= f + 1e-4 * s * slope) {
        theta = trial;
        eta = trial_eta;
        f = ft;
        moved = true;
        break;
      }
      s *= 0.5;
    }
    diag.objective_trace.push_back(f);
    if (!moved) break;
  }
  diag.iterations = it;
  if (!diag.converged) {
    throw NotConverged("refit stopped after " + std::to_string(it) + " iterations with gradient " +
                           format_number(diag.gradient_norm),
                       diag.gradient_norm, it);
  }

  GlmModel model;
  model.stage = GlmStage::Refit;
  model.power = power;
  model.intercept = theta[0];
  model.coefficients = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index a = 0; a < k; ++a) {
    model.coefficients[active[static_cast<std::size_t>(a)]] = theta[a + 1] / col_scale[a];
  }
  model.selected = selected;
  model.center = Eigen::VectorXd::Zero(x.cols());
  model.scale = Eigen::VectorXd::Ones(x.cols());
  return {std::move(model), std::move(diag)};
}

TwoStageFit fit_two_stage(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                          const ElasticNetConfig& config, std::span<const std::size_t> column_feature) {
  TwoStageFit out;
  out.penalized = fit_penalized(x, y, w, config);
  out.selection = select_features(out.penalized.model, config.coef_threshold, column_feature);
  out.refit = refit_unpenalized(x, y, w, out.selection.mask, config.power, column_feature);
  out.refit.model.center = out.penalized.model.center;
  out.refit.model.scale = out.penalized.model.scale;
  if (out.selection.empty) out.refit.diagnostics.warnings.push_back("EmptySelection: intercept-only refit");
  return out;
}

void save_glm(std::ostream& out, const GlmModel& model) {
  out << "losscost-glm\t1\n";
  out << "stage\t" << (model.stage == GlmStage::Penalized ? "penalized" : "refit") << '\n';
  out << "power\t" << format_exact(model.power) << '\n';
  out << "intercept\t" << format_exact(model.intercept) << '\n';
  out << "columns\t" << model.coefficients.size() << '\n';
  for (Eigen::Index j = 0; j < model.coefficients.size(); ++j) {
    out << format_exact(model.center[j]) << '\t' << format_exact(model.scale[j]) << '\t'
        << (model.selected[static_cast<std::size_t>(j)] ? 1 : 0) << '\t' << format_exact(model.coefficients[j])
        << '\n';
  }
}

GlmModel load_glm(std::istream& in) {
  auto expect = [&](const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "truncated GLM model");
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.substr(0, tab) != key) {
      throw Error(ErrorCode::ParseError, "expected '" + key + "' in GLM model, got '" + line + "'");
    }
    return line.substr(tab + 1);
  };
  if (expect("losscost-glm") != "1") throw Error(ErrorCode::ParseError, "unsupported GLM model version");
  GlmModel model;
  model.stage = expect("stage") == "penalized" ? GlmStage::Penalized : GlmStage::Refit;
  model.power = parse_double(expect("power"), "power");
  model.intercept = parse_double(expect("intercept"), "intercept");
  const auto n = parse_int(expect("columns"), "columns");
  model.center.resize(n);
  model.scale.resize(n);
  model.coefficients.resize(n);
  model.selected.resize(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "truncated GLM coefficients");
    const auto f = split_list(line, '\t');
    if (f.size() != 4) throw Error(ErrorCode::ParseError, "bad GLM coefficient record");
    model.center[j] = parse_double(f[0], "center");
    model.scale[j] = parse_double(f[1], "scale");
    model.selected[static_cast<std::size_t>(j)] = f[2] == "1";
    model.coefficients[j] = parse_double(f[3], "coefficient");
  }
  return model;
}

}  // namespace losscost
