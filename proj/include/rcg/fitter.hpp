#pragma once

// Maximum-likelihood fitting of the RCG model (component-wise gradient
// boosting with linear base learners, plus a quasi-Newton cross-check) and the
// two baseline models: OLS on M-values and logit-link beta regression.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "rcg/error.hpp"
#include "rcg/model.hpp"
#include "rcg/optim.hpp"

namespace rcg {

enum class ModelKind { rcg, mvalue, betareg };

inline std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::rcg:
      return "rcg";
    case ModelKind::mvalue:
      return "mvalue";
    case ModelKind::betareg:
      return "betareg";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "rcg") return ModelKind::rcg;
  if (s == "mvalue") return ModelKind::mvalue;
  if (s == "betareg") return ModelKind::betareg;
  throw ConfigError("unknown model kind '" + s + "' (expected rcg, mvalue or betareg)");
}

struct FitConfig {
  double step_length = 0.1;
  int max_iter = 5000;
  double rel_tol = 1e-8;
  int patience = 10;
  double alpha_init = 1.0;
  double rho_init = 0.05;
  /// Empty means all zeros.
  Eigen::VectorXd gamma_init;
  int hyper_update_every = 1;
  /// When false, alpha and rho stay at their initial values.
  bool estimate_hyper = true;

  void validate() const {
    if (!(step_length > 0.0 && step_length <= 1.0)) throw ConfigError("step_length must lie in (0, 1]");
    if (max_iter < 1) throw ConfigError("max_iter must be at least 1");
    if (!(rel_tol > 0.0)) throw ConfigError("rel_tol must be positive");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (!(alpha_init > 0.0)) throw ConfigError("alpha_init must be positive");
    if (!(rho_init >= 0.0 && rho_init < 1.0)) throw ConfigError("rho_init must lie in [0, 1)");
    if (hyper_update_every < 1) throw ConfigError("hyper_update_every must be at least 1");
  }
};

struct FitResult {
  RcgParams params_hat;
  double log_lik = std::numeric_limits<double>::quiet_NaN();
  int n_iter = 0;
  bool converged = false;
  bool rho_at_boundary = false;
  std::size_t clamped_count = 0;
  /// Log-likelihood after every iteration, starting with the initial value.
  std::vector<double> trace;
  std::string message;
};

// Search ranges for the transformed hyperparameters.
inline constexpr double kLogAlphaBound = 7.0;
inline constexpr double kLogitRhoBound = 16.0;

namespace detail {

inline double logistic(double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double logit_rho_clamped(double rho) {
  if (rho <= 0.0) return -kLogitRhoBound;
  return std::clamp(logit(rho), -kLogitRhoBound, kLogitRhoBound);
}

inline Eigen::VectorXd initial_gamma(const Dataset& data, const FitConfig& cfg) {
  if (cfg.gamma_init.size() == 0) return Eigen::VectorXd::Zero(data.n_coef());
  if (cfg.gamma_init.size() != data.n_coef()) throw ConfigError("gamma_init length does not match design columns");
  return cfg.gamma_init;
}

inline void require_full_rank(const Dataset& data) {
  if (!data.full_rank()) throw RankDeficiencyError("design matrix is not of full column rank");
}

/// Sums over observations that make up the log-likelihood at fixed eta and rho;
/// alpha enters only through scalar multipliers of these sums.
struct LikelihoodSums {
  double eta = 0.0;
  double log_d1 = 0.0;
  double log_d2 = 0.0;
};

}  // namespace detail

/// Gradient boosting fit: per iteration, the per-observation score with respect
/// to the linear predictor is regressed on each (centred) design column, the
/// best-fitting column is moved by step_length times its least-squares
/// coefficient, and alpha and rho are refreshed by golden-section search on
/// log(alpha) and logit(rho). A step that would lower the likelihood is halved
/// until it does not, so the trace is non-decreasing.
inline FitResult fit_rcg_boost(const Dataset& data, const FitConfig& cfg) {
  cfg.validate();
  detail::require_full_rank(data);
  const Eigen::Index n = data.n();
  const Eigen::Index k = data.n_coef();
  const Eigen::VectorXd& b = data.b();

  // Base learners work on centred covariates; the intercept absorbs the shift.
  Eigen::VectorXd means = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd z = data.x();
  for (Eigen::Index j = 1; j < k; ++j) {
    means[j] = z.col(j).mean();
    z.col(j).array() -= means[j];
  }
  const Eigen::VectorXd col_ss = z.colwise().squaredNorm().transpose();

  const Eigen::VectorXd gamma_start = detail::initial_gamma(data, cfg);
  Eigen::VectorXd coef = gamma_start;
  coef[0] = gamma_start[0] + means.tail(k - 1).dot(gamma_start.tail(k - 1));
  Eigen::VectorXd eta = z * coef;

  double sum_log_bb = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) sum_log_bb += std::log(b[i] * (1.0 - b[i]));
  const double nd = static_cast<double>(n);

  auto sums_at = [&](const Eigen::VectorXd& eta_v, double rho) {
    detail::LikelihoodSums s;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto t = detail::ratio_terms(b[i], rho, eta_v[i]);
      s.eta += eta_v[i];
      s.log_d1 += std::log(t.d1);
      s.log_d2 += std::log(t.d2);
    }
    return s;
  };
  auto loglik = [&](const detail::LikelihoodSums& s, double alpha, double rho) {
    const double v = nd * detail::shared_log_term(alpha, rho) + alpha * s.eta + s.log_d1 +
                     (alpha - 1.0) * sum_log_bb - (alpha + 0.5) * s.log_d2;
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };

  double alpha = cfg.alpha_init;
  double rho = cfg.rho_init;
  if (cfg.estimate_hyper) rho = detail::logistic(detail::logit_rho_clamped(rho));

  FitResult res;
  res.clamped_count = data.clamped_count();
  double ll = loglik(sums_at(eta, rho), alpha, rho);
  if (!std::isfinite(ll)) throw NumericalDomainError("fit_rcg_boost: log-likelihood not finite at initialization");
  res.trace.push_back(ll);

  Eigen::VectorXd u(n);
  Eigen::VectorXd eta_try(n);
  int quiet = 0;
  int it = 0;
  for (it = 1; it <= cfg.max_iter; ++it) {
    const double ll_prev = ll;

    for (Eigen::Index i = 0; i < n; ++i) u[i] = detail::eta_derivatives(b[i], alpha, rho, eta[i]).first;
    if (!u.allFinite()) throw NumericalDomainError("fit_rcg_boost: non-finite gradient at iteration " + std::to_string(it));
    Eigen::Index best = 0;
    double best_gain = -1.0;
    double best_coef = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double cross = z.col(j).dot(u);
      const double gain = cross * cross / col_ss[j];
      if (gain > best_gain) {
        best_gain = gain;
        best = j;
        best_coef = cross / col_ss[j];
      }
    }

    double step = cfg.step_length * best_coef;
    for (int halving = 0; halving < 40 && step != 0.0; ++halving, step *= 0.5) {
      eta_try = eta + step * z.col(best);
      const double ll_try = loglik(sums_at(eta_try, rho), alpha, rho);
      if (ll_try >= ll) {
        eta.swap(eta_try);
        coef[best] += step;
        ll = ll_try;
        break;
      }
    }

    if (cfg.estimate_hyper && it % cfg.hyper_update_every == 0) {
      const detail::LikelihoodSums s = sums_at(eta, rho);
      const auto a_min = optim::golden_section_minimize(
          [&](double la) { return -loglik(s, std::exp(la), rho); }, -kLogAlphaBound, kLogAlphaBound);
      if (-a_min.f > ll) {
        alpha = std::exp(a_min.x);
        ll = -a_min.f;
      }
      const auto r_min = optim::golden_section_minimize(
          [&](double lr) {
            const double r = detail::logistic(lr);
            return -loglik(sums_at(eta, r), alpha, r);
          },
          -kLogitRhoBound, kLogitRhoBound);
      if (-r_min.f > ll) {
        rho = detail::logistic(r_min.x);
        ll = -r_min.f;
      }
    }

    if (!std::isfinite(ll)) throw NumericalDomainError("fit_rcg_boost: non-finite log-likelihood at iteration " + std::to_string(it));
    res.trace.push_back(ll);
    const double rel = (ll - ll_prev) / std::max(1.0, std::abs(ll_prev));
    quiet = rel < cfg.rel_tol ? quiet + 1 : 0;
    if (quiet >= cfg.patience) {
      res.converged = true;
      break;
    }
  }

  Eigen::VectorXd gamma = coef;
  gamma[0] = coef[0] - means.tail(k - 1).dot(coef.tail(k - 1));
  res.params_hat = RcgParams{alpha, rho, gamma};
  res.log_lik = log_likelihood(data, res.params_hat);
  res.n_iter = std::min(it, cfg.max_iter);
  res.rho_at_boundary = cfg.estimate_hyper && std::abs(detail::logit(rho)) >= kLogitRhoBound - 1e-3;
  if (!res.converged) res.message = "iteration limit reached";
  return res;
}

/// Direct quasi-Newton maximization over (log alpha, logit rho, gamma) using
/// the analytic gamma score and central differences for the two
/// hyperparameters. Serves as an independent check on fit_rcg_boost.
inline FitResult fit_rcg_direct(const Dataset& data, const FitConfig& cfg) {
  cfg.validate();
  detail::require_full_rank(data);
  const Eigen::Index k = data.n_coef();
  const Eigen::Index offset = cfg.estimate_hyper ? 2 : 0;

  auto unpack = [&](const Eigen::VectorXd& v) {
    RcgParams p;
    if (cfg.estimate_hyper) {
      p.alpha = std::exp(v[0]);
      p.rho = detail::logistic(v[1]);
    } else {
      p.alpha = cfg.alpha_init;
      p.rho = cfg.rho_init;
    }
    p.gamma = v.tail(k);
    return p;
  };
  auto safe_loglik = [&](const RcgParams& p) {
    try {
      return log_likelihood(data, p);
    } catch (const NumericalDomainError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  constexpr double kFdStep = 1e-5;
  auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad) {
    const RcgParams p = unpack(v);
    const double ll = safe_loglik(p);
    if (!std::isfinite(ll)) return std::numeric_limits<double>::infinity();
    grad.resize(v.size());
    try {
      grad.tail(k) = -score_gamma(data, p);
    } catch (const NumericalDomainError&) {
      return std::numeric_limits<double>::infinity();
    }
    for (Eigen::Index j = 0; j < offset; ++j) {
      Eigen::VectorXd hi = v;
      Eigen::VectorXd lo = v;
      hi[j] += kFdStep;
      lo[j] -= kFdStep;
      const double f_hi = safe_loglik(unpack(hi));
      const double f_lo = safe_loglik(unpack(lo));
      if (std::isfinite(f_hi) && std::isfinite(f_lo))
        grad[j] = -(f_hi - f_lo) / (2.0 * kFdStep);
      else if (std::isfinite(f_hi))
        grad[j] = -(f_hi - ll) / kFdStep;
      else
        grad[j] = -(ll - f_lo) / kFdStep;
    }
    return -ll;
  };

  Eigen::VectorXd v0(offset + k);
  if (cfg.estimate_hyper) {
    v0[0] = std::clamp(std::log(cfg.alpha_init), -kLogAlphaBound, kLogAlphaBound);
    v0[1] = detail::logit_rho_clamped(cfg.rho_init);
  }
  v0.tail(k) = detail::initial_gamma(data, cfg);

  optim::BfgsOptions opt;
  opt.max_iter = cfg.max_iter;
  opt.grad_tol = 1e-7 * std::max<double>(1.0, static_cast<double>(data.n()));
  constexpr double kInf = std::numeric_limits<double>::infinity();
  opt.lower = Eigen::VectorXd::Constant(offset + k, -kInf);
  opt.upper = Eigen::VectorXd::Constant(offset + k, kInf);
  if (cfg.estimate_hyper) {
    opt.lower.head(2) << -kLogAlphaBound, -kLogitRhoBound;
    opt.upper.head(2) << kLogAlphaBound, kLogitRhoBound;
  }

  const optim::BfgsResult br = optim::bfgs_minimize(objective, v0, opt);
  FitResult res;
  res.clamped_count = data.clamped_count();
  if (!std::isfinite(br.f)) throw NumericalDomainError("fit_rcg_direct: " + br.message);
  res.params_hat = unpack(br.x);
  res.log_lik = log_likelihood(data, res.params_hat);
  res.n_iter = br.iterations;
  res.converged = br.converged;
  res.message = br.message;
  res.rho_at_boundary = cfg.estimate_hyper && std::abs(br.x[1]) >= kLogitRhoBound - 1e-3;
  res.trace.reserve(br.trace.size());
  for (double f : br.trace) res.trace.push_back(-f);
  return res;
}

// Baselines ---------------------------------------------------------------

struct BaselineParams {
  ModelKind model_kind = ModelKind::mvalue;
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  /// Residual variance on the M-value scale (mvalue only).
  double sigma2 = std::numeric_limits<double>::quiet_NaN();
  /// Beta precision (betareg only).
  double phi = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd std_errors;
  double log_lik = std::numeric_limits<double>::quiet_NaN();
  /// Residual degrees of freedom (mvalue only).
  Eigen::Index df_resid = 0;
  bool converged = true;
  int n_iter = 0;
  std::string message;
};

/// OLS of log2(b / (1 - b)) on the design.
inline BaselineParams fit_mvalue(const Dataset& data) {
  detail::require_full_rank(data);
  const Eigen::Index n = data.n();
  const Eigen::Index k = data.n_coef();
  const Eigen::MatrixXd& x = data.x();
  const Eigen::VectorXd y = ((data.b().array() / (1.0 - data.b().array())).log() / std::numbers::ln2).matrix();

  BaselineParams out;
  out.model_kind = ModelKind::mvalue;
  out.names = data.names();
  out.coef = x.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd resid = y - x * out.coef;
  const double rss = resid.squaredNorm();
  out.df_resid = n - k;
  out.sigma2 = out.df_resid > 0 ? rss / static_cast<double>(out.df_resid) : std::numeric_limits<double>::quiet_NaN();
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).llt().solve(Eigen::MatrixXd::Identity(k, k));
  out.std_errors = (out.sigma2 * xtx_inv.diagonal().array()).sqrt().matrix();
  const double sigma2_ml = rss / static_cast<double>(n);
  out.log_lik = sigma2_ml > 0.0
                    ? -0.5 * static_cast<double>(n) * (std::log(2.0 * std::numbers::pi * sigma2_ml) + 1.0)
                    : std::numeric_limits<double>::quiet_NaN();
  return out;
}

namespace detail {

struct BetaRegEval {
  double loglik;
  Eigen::VectorXd grad;  // d loglik / d (gamma, log phi)
};

inline BetaRegEval beta_regression_eval(const Dataset& data, const Eigen::VectorXd& v) {
  const Eigen::Index k = data.n_coef();
  const double phi = std::exp(v[k]);
  const Eigen::VectorXd eta = data.x() * v.head(k);
  BetaRegEval out{0.0, Eigen::VectorXd::Zero(k + 1)};
  Eigen::VectorXd d_eta(data.n());
  const double lg_phi = boost::math::lgamma(phi);
  const double dg_phi = boost::math::digamma(phi);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double mu = logistic(eta[i]);
    const double a = mu * phi;
    const double c = (1.0 - mu) * phi;
    if (!(a > 0.0) || !(c > 0.0)) throw NumericalDomainError("beta regression: degenerate mean", i);
    const double lb = std::log(data.b()[i]);
    const double l1b = std::log1p(-data.b()[i]);
    out.loglik += lg_phi - boost::math::lgamma(a) - boost::math::lgamma(c) + (a - 1.0) * lb + (c - 1.0) * l1b;
    const double dg_a = boost::math::digamma(a);
    const double dg_c = boost::math::digamma(c);
    d_eta[i] = phi * ((lb - l1b) - (dg_a - dg_c)) * mu * (1.0 - mu);
    out.grad[k] += phi * (dg_phi - mu * dg_a - (1.0 - mu) * dg_c + mu * lb + (1.0 - mu) * l1b);
  }
  out.grad.head(k) = data.x().transpose() * d_eta;
  return out;
}

}  // namespace detail

/// Maximum-likelihood beta regression with logit mean link and a scalar
/// precision phi (fitted on the log scale).
inline BaselineParams fit_beta_regression(const Dataset& data, int max_iter = 1000) {
  detail::require_full_rank(data);
  const Eigen::Index n = data.n();
  const Eigen::Index k = data.n_coef();
  const Eigen::MatrixXd& x = data.x();

  // Start from OLS on the logit scale with a moment estimate of phi.
  const Eigen::VectorXd y = (data.b().array() / (1.0 - data.b().array())).log().matrix();
  Eigen::VectorXd v0(k + 1);
  v0.head(k) = x.colPivHouseholderQr().solve(y);
  double phi0 = 1.0;
  if (n > k) {
    const Eigen::VectorXd fitted = x * v0.head(k);
    const Eigen::VectorXd resid = y - fitted;
    const double s2 = resid.squaredNorm() / static_cast<double>(n - k);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = detail::logistic(fitted[i]);
      const double var_b = s2 * std::pow(mu * (1.0 - mu), 2);
      acc += var_b > 0.0 ? mu * (1.0 - mu) / var_b - 1.0 : 1.0;
    }
    phi0 = acc / static_cast<double>(n);
    if (!(phi0 > 0.1) || !std::isfinite(phi0)) phi0 = 1.0;
  }
  v0[k] = std::log(phi0);

  auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad) {
    try {
      const auto e = detail::beta_regression_eval(data, v);
      if (!std::isfinite(e.loglik) || !e.grad.allFinite()) return std::numeric_limits<double>::infinity();
      grad = -e.grad;
      return -e.loglik;
    } catch (const NumericalDomainError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  optim::BfgsOptions opt;
  opt.max_iter = max_iter;
  opt.grad_tol = 1e-7 * std::max<double>(1.0, static_cast<double>(n));
  const optim::BfgsResult br = optim::bfgs_minimize(objective, v0, opt);
  if (!std::isfinite(br.f)) throw NumericalDomainError("fit_beta_regression: " + br.message);

  BaselineParams out;
  out.model_kind = ModelKind::betareg;
  out.names = data.names();
  out.coef = br.x.head(k);
  out.phi = std::exp(br.x[k]);
  out.log_lik = -br.f;
  out.converged = br.converged;
  out.n_iter = br.iterations;
  out.message = br.message;

  // Observed information by central differences of the analytic gradient.
  Eigen::MatrixXd info(k + 1, k + 1);
  for (Eigen::Index j = 0; j <= k; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(br.x[j]));
    Eigen::VectorXd hi = br.x;
    Eigen::VectorXd lo = br.x;
    hi[j] += h;
    lo[j] -= h;
    info.col(j) = -(detail::beta_regression_eval(data, hi).grad - detail::beta_regression_eval(data, lo).grad) / (2.0 * h);
  }
  info = 0.5 * (info + info.transpose()).eval();
  out.std_errors = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() == Eigen::Success) {
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(k + 1, k + 1));
    out.std_errors = inv.diagonal().head(k).array().sqrt().matrix();
  } else {
    out.converged = false;
    out.message = "singular information";
  }
  return out;
}

/// Per-covariate tests for a baseline fit (intercept excluded). M-value
/// p-values use Student's t on the residual degrees of freedom, beta
/// regression the standard normal.
inline std::vector<WaldTest> baseline_tests(const BaselineParams& fit) {
  std::vector<WaldTest> out;
  for (Eigen::Index j = 1; j < fit.coef.size(); ++j) {
    const double se = fit.std_errors[j];
    const double z = fit.coef[j] / se;
    double p = std::numeric_limits<double>::quiet_NaN();
    if (std::isfinite(z)) {
      if (fit.model_kind == ModelKind::mvalue && fit.df_resid > 0) {
        const boost::math::students_t dist(static_cast<double>(fit.df_resid));
        p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(z)));
      } else {
        p = normal_two_sided_p(z);
      }
    }
    out.push_back({fit.names[static_cast<std::size_t>(j)], fit.coef[j], se, z, p});
  }
  return out;
}

}  // namespace rcg
