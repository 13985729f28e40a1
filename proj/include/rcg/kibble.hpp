#pragma once

// Wicksell-Kibble bivariate gamma distribution of the signal intensities
// (M, U): common shape alpha, rates lambda_m and lambda_u, correlation rho.

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "rcg/error.hpp"
#include "rcg/specfun.hpp"

namespace rcg {

struct KibbleParams {
  double alpha = 1.0;
  double lambda_m = 1.0;
  double lambda_u = 1.0;
  double rho = 0.0;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("KibbleParams: alpha must be positive");
    if (!(lambda_m > 0.0) || !std::isfinite(lambda_m)) throw DomainError("KibbleParams: lambda_m must be positive");
    if (!(lambda_u > 0.0) || !std::isfinite(lambda_u)) throw DomainError("KibbleParams: lambda_u must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) throw DomainError("KibbleParams: rho must lie in [0, 1)");
  }
};

struct KibbleMoments {
  double mean_m;
  double mean_u;
  double var_m;
  double var_u;
  double corr;
};

inline KibbleMoments moments(const KibbleParams& p) {
  p.validate();
  return {p.alpha / p.lambda_m, p.alpha / p.lambda_u, p.alpha / (p.lambda_m * p.lambda_m),
          p.alpha / (p.lambda_u * p.lambda_u), p.rho};
}

/// ln of the gamma density with shape `shape` and rate `rate` at x > 0.
inline double log_gamma_density(double x, double shape, double rate) {
  return shape * std::log(rate) + (shape - 1.0) * std::log(x) - rate * x - log_gamma(shape);
}

/// ln f_{M,U}(m, u). rho = 0 gives the product of the two gamma marginals.
inline double log_density(const KibbleParams& p, double m, double u) {
  p.validate();
  if (!(m > 0.0) || !(u > 0.0)) throw DomainError("kibble::log_density: m and u must be positive");
  if (p.rho == 0.0) return log_gamma_density(m, p.alpha, p.lambda_m) + log_gamma_density(u, p.alpha, p.lambda_u);

  const double one_minus_rho = 1.0 - p.rho;
  const double log_rates = std::log(p.lambda_m) + std::log(p.lambda_u);
  const double bessel_arg = 2.0 * std::sqrt(p.rho * p.lambda_m * p.lambda_u * m * u) / one_minus_rho;
  return p.alpha * log_rates - std::log(one_minus_rho) - log_gamma(p.alpha) +
         0.5 * (p.alpha - 1.0) * (std::log(m) + std::log(u) - std::log(p.rho) - log_rates) -
         (p.lambda_m * m + p.lambda_u * u) / one_minus_rho +
         detail::log_bessel_i_impl(p.alpha - 1.0, bessel_arg);
}

/// SplitMix64 step; used to derive independent stream seeds from one seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for stream `index` of a generator seeded by `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// Draws (M, U) pairs through the Poisson-gamma mixture
///   K ~ NegBin(alpha, rho),  M | K ~ Gamma(alpha + K, lambda_m / (1 - rho)),
///   U | K ~ Gamma(alpha + K, lambda_u / (1 - rho)),
/// which is the series expansion of the Bessel term in the joint density.
/// K itself is drawn as Poisson(G) with G ~ Gamma(alpha, scale rho / (1 - rho)).
/// When rho == 0 no K draw is made, so the stream reduces to alternating
/// Gamma(alpha, lambda_m) and Gamma(alpha, lambda_u) draws.
class KibbleSampler {
 public:
  explicit KibbleSampler(std::uint64_t seed) : engine_(seed) {}

  std::pair<double, double> operator()(const KibbleParams& p) {
    long k = 0;
    if (p.rho > 0.0) {
      const double mixing = std::gamma_distribution<double>(p.alpha, p.rho / (1.0 - p.rho))(engine_);
      if (mixing > 0.0) k = std::poisson_distribution<long>(mixing)(engine_);
    }
    const double shape = p.alpha + static_cast<double>(k);
    const double m = std::gamma_distribution<double>(shape, (1.0 - p.rho) / p.lambda_m)(engine_);
    const double u = std::gamma_distribution<double>(shape, (1.0 - p.rho) / p.lambda_u)(engine_);
    return {m, u};
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline std::vector<std::pair<double, double>> sample(const KibbleParams& p, std::size_t n, std::uint64_t seed) {
  p.validate();
  if (n == 0) throw DomainError("kibble::sample: n must be at least 1");
  KibbleSampler sampler(seed);
  std::vector<std::pair<double, double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sampler(p));
  return out;
}

}  // namespace rcg
