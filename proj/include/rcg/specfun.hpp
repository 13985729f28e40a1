#pragma once

// Special functions needed by the bivariate gamma density and its ratio
// distribution: log-gamma, log of the modified Bessel function I_nu, and the
// Gauss hypergeometric series.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>

#include "rcg/error.hpp"

namespace rcg {

/// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("log_gamma: argument must be positive and finite");
  return boost::math::lgamma(x);
}

namespace detail {

/// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

// Ascending series (x/2)^nu sum_k (x^2/4)^k / (k! Gamma(nu+k+1)), valid for
// nu > -1. The partial sum is rescaled in flight so that x up to ~1e5 does
// not overflow.
inline double log_bessel_i_series(double nu, double x) {
  const double q = 0.25 * x * x;
  constexpr double kRescale = 1e250;
  const double log_rescale = std::log(kRescale);
  double sum = 1.0;
  double term = 1.0;
  double log_scale = 0.0;
  constexpr long kMaxTerms = 10'000'000;
  for (long k = 0; k < kMaxTerms; ++k) {
    const double kd = static_cast<double>(k);
    const double ratio = q / ((kd + 1.0) * (nu + kd + 1.0));
    term *= ratio;
    sum += term;
    if (sum > kRescale) {
      sum /= kRescale;
      term /= kRescale;
      log_scale += log_rescale;
    }
    if (ratio < 1.0 && term < 1e-17 * sum) {
      return nu * std::log(0.5 * x) - boost::math::lgamma(nu + 1.0) + std::log(sum) + log_scale;
    }
  }
  throw ConvergenceError("log_bessel_i: ascending series did not converge");
}

// Large-argument (Hankel) expansion, accurate when x >> nu^2.
inline double log_bessel_i_hankel(double nu, double x) {
  const double mu = 4.0 * nu * nu;
  double sum = 1.0;
  double term = 1.0;
  double prev_abs = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (8.0 * k * x);
    // Asymptotic series: stop at the smallest term.
    if (std::abs(next) >= prev_abs) break;
    prev_abs = std::abs(next);
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

// Uniform (Debye) expansion in 1/nu through u_4; used for nu >= 50.
inline double log_bessel_i_debye(double nu, double x) {
  const double z = x / nu;
  const double root = std::sqrt(1.0 + z * z);
  const double t = 1.0 / root;
  const double t2 = t * t;
  const double eta = root + std::log(z / (1.0 + root));
  const double u1 = t * (3.0 - 5.0 * t2) / 24.0;
  const double u2 = t2 * (81.0 + t2 * (-462.0 + t2 * 385.0)) / 1152.0;
  const double u3 = t * t2 * (30375.0 + t2 * (-369603.0 + t2 * (765765.0 - t2 * 425425.0))) / 414720.0;
  const double u4 =
      t2 * t2 *
      (4465125.0 + t2 * (-94121676.0 + t2 * (349922430.0 + t2 * (-446185740.0 + t2 * 185910725.0)))) /
      39813120.0;
  const double inv = 1.0 / nu;
  const double sum = 1.0 + inv * (u1 + inv * (u2 + inv * (u3 + inv * u4)));
  return nu * eta - 0.5 * std::log(2.0 * std::numbers::pi * nu) - 0.5 * std::log(root) + std::log(sum);
}

/// ln I_nu(x) for nu > -1, x >= 0.
inline double log_bessel_i_impl(double nu, double x) {
  if (x == 0.0) return nu == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (x <= std::max(30.0, 2.0 * nu)) return log_bessel_i_series(nu, x);
  if (nu >= 50.0) return log_bessel_i_debye(nu, x);
  // Hankel's expansion needs x well beyond nu^2; the band in between is
  // still cheap for the series since x < 2500 there.
  if (x >= std::max(30.0, nu * nu)) return log_bessel_i_hankel(nu, x);
  return log_bessel_i_series(nu, x);
}

}  // namespace detail

/// ln I_nu(x), the modified Bessel function of the first kind, for nu >= 0 and
/// x >= 0. Returns -inf at x = 0 for nu > 0.
inline double log_bessel_i(double nu, double x) {
  if (!(nu >= 0.0) || !(x >= 0.0) || !std::isfinite(nu) || !std::isfinite(x))
    throw DomainError("log_bessel_i: requires nu >= 0 and x >= 0");
  return detail::log_bessel_i_impl(nu, x);
}

/// Gauss hypergeometric 2F1(a, b; c; x) by its power series on 0 <= x < 1.
inline double gauss_2f1(double a, double b, double c, double x) {
  if (!(c > 0.0) || !(x >= 0.0) || !(x < 1.0)) throw DomainError("gauss_2f1: requires c > 0 and 0 <= x < 1");
  double sum = 1.0;
  double term = 1.0;
  constexpr long kMaxTerms = 1'000'000;
  for (long k = 0; k < kMaxTerms; ++k) {
    const double kd = static_cast<double>(k);
    term *= (a + kd) * (b + kd) / ((c + kd) * (kd + 1.0)) * x;
    sum += term;
    if (term == 0.0 || std::abs(term) < 1e-15 * std::abs(sum)) return sum;
  }
  throw ConvergenceError("gauss_2f1: series did not converge within 1e6 terms");
}

}  // namespace rcg
