#pragma once

// Ratio-of-correlated-gammas (RCG) model for b = M / (M + U): the closed-form
// ratio density, the covariate-linked log-likelihood with theta = exp(x'gamma),
// its gradient and observed information in gamma, and Wald tests.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include "rcg/error.hpp"
#include "rcg/specfun.hpp"

namespace rcg {

struct RcgParams {
  double alpha = 1.0;
  double rho = 0.0;
  Eigen::VectorXd gamma;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("RcgParams: alpha must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) throw DomainError("RcgParams: rho must lie in [0, 1)");
    if (!gamma.allFinite()) throw DomainError("RcgParams: gamma must be finite");
  }
};

inline constexpr double kDefaultClampEps = 1e-6;

/// Responses b in (0,1) with a design matrix whose first column is the
/// intercept. Responses outside [eps, 1 - eps] are clamped and counted.
class Dataset {
 public:
  Dataset() = default;

  Dataset(Eigen::VectorXd b, Eigen::MatrixXd x, std::vector<std::string> names = {},
          double clamp_eps = kDefaultClampEps)
      : b_(std::move(b)), x_(std::move(x)), names_(std::move(names)) {
    if (b_.size() == 0) throw DomainError("Dataset: no observations");
    if (x_.rows() != b_.size()) throw DomainError("Dataset: design rows do not match response length");
    if (x_.cols() < 1) throw DomainError("Dataset: design needs an intercept column");
    if (!x_.allFinite()) throw DomainError("Dataset: design contains non-finite values");
    if (!(x_.col(0).array() == 1.0).all()) throw DomainError("Dataset: first design column must be all ones");
    if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw DomainError("Dataset: clamp eps must lie in (0, 0.5)");
    if (names_.empty()) {
      names_.emplace_back("(Intercept)");
      for (Eigen::Index j = 1; j < x_.cols(); ++j) names_.push_back("x" + std::to_string(j));
    }
    if (static_cast<Eigen::Index>(names_.size()) != x_.cols())
      throw DomainError("Dataset: number of column names does not match design");
    for (Eigen::Index i = 0; i < b_.size(); ++i) {
      double& v = b_[i];
      if (!std::isfinite(v)) throw DomainError("Dataset: non-finite response at index " + std::to_string(i));
      if (v < clamp_eps) {
        v = clamp_eps;
        ++clamped_;
      } else if (v > 1.0 - clamp_eps) {
        v = 1.0 - clamp_eps;
        ++clamped_;
      }
    }
  }

  const Eigen::VectorXd& b() const { return b_; }
  const Eigen::MatrixXd& x() const { return x_; }
  const std::vector<std::string>& names() const { return names_; }
  Eigen::Index n() const { return b_.size(); }
  /// Number of design columns including the intercept.
  Eigen::Index n_coef() const { return x_.cols(); }
  std::size_t clamped_count() const { return clamped_; }

  bool full_rank() const {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x_);
    return qr.rank() == x_.cols();
  }

 private:
  Eigen::VectorXd b_;
  Eigen::MatrixXd x_;
  std::vector<std::string> names_;
  std::size_t clamped_ = 0;
};

namespace detail {

/// D1 = (theta - 1) b + 1 and D2 = D1^2 - 4 rho theta b (1 - b) at
/// theta = exp(eta). D2 is evaluated as (theta b - (1 - b))^2 + 4 (1 - rho) theta b (1 - b),
/// which is algebraically identical and free of cancellation.
struct RatioTerms {
  double theta;
  double d1;
  double d2;
};

inline RatioTerms ratio_terms(double b, double rho, double eta) {
  const double theta = std::exp(eta);
  const double d1 = 1.0 + b * std::expm1(eta);
  const double diff = theta * b - (1.0 - b);
  const double d2 = diff * diff + 4.0 * (1.0 - rho) * theta * b * (1.0 - b);
  return {theta, d1, d2};
}

/// Parts of the log density that depend on the observation, given
/// log Gamma(2a) - 2 log Gamma(a) + a log(1 - rho) as `shared`.
inline double log_density_eta(double b, double alpha, double rho, double eta, double shared,
                              std::ptrdiff_t index = -1) {
  const RatioTerms t = ratio_terms(b, rho, eta);
  if (!(t.d1 > 0.0) || !std::isfinite(t.d1)) throw NumericalDomainError("RCG density: D1 not positive", index);
  if (!(t.d2 > 0.0) || !std::isfinite(t.d2)) throw NumericalDomainError("RCG density: D2 not positive", index);
  return shared + alpha * eta + std::log(t.d1) + (alpha - 1.0) * std::log(b * (1.0 - b)) -
         (alpha + 0.5) * std::log(t.d2);
}

inline double shared_log_term(double alpha, double rho) {
  return log_gamma(2.0 * alpha) - 2.0 * log_gamma(alpha) + alpha * std::log1p(-rho);
}

/// First and second derivative of one observation's log density with respect
/// to its linear predictor eta.
struct EtaDerivatives {
  double first;
  double second;
};

inline EtaDerivatives eta_derivatives(double b, double alpha, double rho, double eta) {
  const RatioTerms t = ratio_terms(b, rho, eta);
  const double be = b * t.theta;
  const double lead = t.d1 - 2.0 * rho * (1.0 - b);
  const double half = alpha + 0.5;
  const double first = alpha + be / t.d1 - half * 2.0 * lead * be / t.d2;
  // D1 - b theta = 1 - b.
  const double second = (1.0 - b) * be / (t.d1 * t.d1) - half * 2.0 * be * (t.d1 + be - 2.0 * rho * (1.0 - b)) / t.d2 +
                        half * 4.0 * be * be * lead * lead / (t.d2 * t.d2);
  return {first, second};
}

inline void check_shapes(const Dataset& data, const RcgParams& params) {
  params.validate();
  if (params.gamma.size() != data.n_coef())
    throw DomainError("RcgParams: gamma length does not match design columns");
}

}  // namespace detail

/// ln f_b(b) for a single observation under mean ratio theta = lambda_m / lambda_u.
inline double log_density_theta(double b, double alpha, double rho, double theta) {
  if (!(b > 0.0 && b < 1.0)) throw DomainError("log_density_theta: b must lie in (0, 1)");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("log_density_theta: alpha must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw DomainError("log_density_theta: rho must lie in [0, 1)");
  if (!(theta > 0.0) || !std::isfinite(theta)) throw DomainError("log_density_theta: theta must be positive");
  return detail::log_density_eta(b, alpha, rho, std::log(theta), detail::shared_log_term(alpha, rho));
}

inline double log_likelihood(const Dataset& data, const RcgParams& params) {
  detail::check_shapes(data, params);
  const Eigen::VectorXd eta = data.x() * params.gamma;
  const double shared = detail::shared_log_term(params.alpha, params.rho);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i)
    sum += detail::log_density_eta(data.b()[i], params.alpha, params.rho, eta[i], shared, i);
  if (!std::isfinite(sum)) throw NumericalDomainError("log_likelihood: non-finite value");
  return sum;
}

/// Gradient of the log-likelihood with respect to gamma.
inline Eigen::VectorXd score_gamma(const Dataset& data, const RcgParams& params) {
  detail::check_shapes(data, params);
  const Eigen::VectorXd eta = data.x() * params.gamma;
  Eigen::VectorXd u(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    u[i] = detail::eta_derivatives(data.b()[i], params.alpha, params.rho, eta[i]).first;
    if (!std::isfinite(u[i])) throw NumericalDomainError("score_gamma: non-finite derivative", i);
  }
  return data.x().transpose() * u;
}

/// Observed information J = -d^2 loglik / d gamma d gamma'. The per-observation
/// bracket of the closed form is the second derivative itself, so J is its
/// negated sum over x_i x_i'.
inline Eigen::MatrixXd observed_information(const Dataset& data, const RcgParams& params) {
  detail::check_shapes(data, params);
  const Eigen::VectorXd eta = data.x() * params.gamma;
  const Eigen::Index k = data.n_coef();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double w = -detail::eta_derivatives(data.b()[i], params.alpha, params.rho, eta[i]).second;
    if (!std::isfinite(w)) throw NumericalDomainError("observed_information: non-finite curvature", i);
    const auto row = data.x().row(i);
    for (Eigen::Index r = 0; r < k; ++r)
      for (Eigen::Index c = 0; c <= r; ++c) info(r, c) += w * row[r] * row[c];
  }
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = r + 1; c < k; ++c) info(r, c) = info(c, r);
  return info;
}

struct WaldTest {
  std::string name;
  double estimate;
  double std_error;
  double z;
  double p_value;
};

/// Two-sided p-value of a standard normal statistic.
inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

/// Inverse of a symmetric positive definite information matrix.
inline Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info) {
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) throw SingularInformationError("information matrix is not positive definite");
  if (!(llt.rcond() > 1e-13)) throw SingularInformationError("information matrix is numerically singular");
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  if (!inv.allFinite() || (inv.diagonal().array() <= 0.0).any())
    throw SingularInformationError("information matrix inverse is degenerate");
  return inv;
}

/// Wald statistics gamma_k / sqrt((J^-1)_kk) for every non-intercept column,
/// with alpha and rho held at their estimates.
inline std::vector<WaldTest> wald_tests(const Dataset& data, const RcgParams& params_hat) {
  const Eigen::MatrixXd inv = invert_information(observed_information(data, params_hat));
  std::vector<WaldTest> out;
  for (Eigen::Index k = 1; k < data.n_coef(); ++k) {
    const double se = std::sqrt(inv(k, k));
    const double z = params_hat.gamma[k] / se;
    out.push_back({data.names()[static_cast<std::size_t>(k)], params_hat.gamma[k], se, z, normal_two_sided_p(z)});
  }
  return out;
}

}  // namespace rcg
