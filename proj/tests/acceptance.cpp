// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rcg/rcg.hpp"

namespace {

using namespace rcg;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

double ratio_density(double b, double alpha, double rho, double theta) {
  if (!(b > 0.0 && b < 1.0)) return 0.0;
  return std::exp(log_density_theta(b, alpha, rho, theta));
}

Outcome normalization() {
  double worst = 0.0;
  for (double alpha : {0.5, 2.0, 8.0})
    for (double rho : {0.0, 0.3, 0.8})
      for (double theta : {0.25, 1.0, 4.0}) {
        const double total = oracle::integrate_unit([&](double b) { return ratio_density(b, alpha, rho, theta); });
        worst = std::max(worst, std::abs(total - 1.0));
      }
  return {worst <= 1e-6, fmt("max |integral - 1| = %.2e over 27 points", worst)};
}

Outcome beta_reduction() {
  double worst = 0.0;
  for (double alpha : {0.5, 1.0, 2.0, 8.0})
    for (int k = 1; k <= 99; ++k) {
      const double b = k / 100.0;
      worst = std::max(worst, std::abs(ratio_density(b, alpha, 0.0, 1.0) - oracle::beta_density(b, alpha, alpha)));
    }
  return {worst <= 1e-12, fmt("max |f - Beta(a,a)| = %.2e", worst)};
}

Outcome sampler_chi_square() {
  struct Setting {
    double alpha, rho, lm, lu;
  };
  const std::vector<Setting> settings = {
      {2.0, 0.7, 1.0, 1.0}, {0.6, 0.3, 1.0, 2.0}, {5.0, 0.0, 3.0, 1.0}, {1.0, 0.9, 0.5, 1.0}, {3.0, 0.5, 1.0, 4.0}};
  constexpr std::size_t n = 100000;
  constexpr int kBins = 40;
  double min_p = 1.0;
  for (std::size_t s = 0; s < settings.size(); ++s) {
    const auto& st = settings[s];
    std::vector<double> counts(kBins, 0.0);
    for (const auto& [m, u] : sample({st.alpha, st.lm, st.lu, st.rho}, n, 7000 + s))
      counts[static_cast<std::size_t>(std::min(kBins - 1, static_cast<int>(m / (m + u) * kBins)))] += 1.0;
    // Neighbouring bins are pooled until each expects at least 20 draws.
    double chi2 = 0.0, obs = 0.0, expct = 0.0;
    int cells = 0;
    for (int k = 0; k < kBins; ++k) {
      obs += counts[static_cast<std::size_t>(k)];
      expct += n * oracle::integrate([&](double b) { return ratio_density(b, st.alpha, st.rho, st.lm / st.lu); },
                                     static_cast<double>(k) / kBins, static_cast<double>(k + 1) / kBins);
      if (expct >= 20.0 || k == kBins - 1) {
        chi2 += (obs - expct) * (obs - expct) / expct;
        ++cells;
        obs = expct = 0.0;
      }
    }
    min_p = std::min(min_p, oracle::chi_square_upper_p(chi2, cells - 1));
  }
  return {min_p > 0.01, fmt("min p-value over 5 settings = %.4f", min_p)};
}

Outcome kibble_moments() {
  constexpr std::size_t n = 200000;
  constexpr std::size_t batches = 100;
  double worst = 0.0;  // largest |error| / SE
  for (const KibbleParams& p :
       {KibbleParams{2.0, 1.0, 1.0, 0.6}, KibbleParams{0.7, 3.0, 0.5, 0.85}, KibbleParams{5.0, 1.0, 2.0, 0.1}}) {
    const auto xs = sample(p, n, 4242);
    const auto stats = [&](std::size_t lo, std::size_t hi) {
      const double k = static_cast<double>(hi - lo);
      double sm = 0, su = 0;
      for (std::size_t i = lo; i < hi; ++i) {
        sm += xs[i].first;
        su += xs[i].second;
      }
      sm /= k;
      su /= k;
      double vm = 0, vu = 0, c = 0;
      for (std::size_t i = lo; i < hi; ++i) {
        vm += (xs[i].first - sm) * (xs[i].first - sm);
        vu += (xs[i].second - su) * (xs[i].second - su);
        c += (xs[i].first - sm) * (xs[i].second - su);
      }
      return std::array<double, 5>{sm, su, vm / (k - 1), vu / (k - 1), c / std::sqrt(vm * vu)};
    };
    const std::array<double, 5> want = {p.alpha / p.lambda_m, p.alpha / p.lambda_u,
                                        p.alpha / (p.lambda_m * p.lambda_m), p.alpha / (p.lambda_u * p.lambda_u),
                                        p.rho};
    std::vector<std::array<double, 5>> per_batch;
    for (std::size_t b = 0; b < batches; ++b) per_batch.push_back(stats(b * n / batches, (b + 1) * n / batches));
    const auto overall = stats(0, n);
    for (std::size_t f = 0; f < 5; ++f) {
      double mean = 0, sq = 0;
      for (const auto& s : per_batch) mean += s[f];
      mean /= batches;
      for (const auto& s : per_batch) sq += (s[f] - mean) * (s[f] - mean);
      const double se = std::sqrt(sq / (batches - 1) / batches);
      worst = std::max(worst, std::abs(overall[f] - want[f]) / se);
    }
  }
  return {worst < 3.0, fmt("largest deviation = %.2f standard errors", worst)};
}

struct RandomPoint {
  Dataset data;
  RcgParams at;
};

std::vector<RandomPoint> random_points(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::vector<std::string> designs = {"normal", "bernoulli:0.4", "normal,bernoulli:0.5", "normal,normal,fixed:0;1"};
  std::vector<RandomPoint> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string design = designs[i % designs.size()];
    const auto k = static_cast<Eigen::Index>(parse_covariate_spec(design).size()) + 1;
    Eigen::VectorXd gamma(k);
    for (Eigen::Index j = 0; j < k; ++j) gamma[j] = 2.0 * unif(rng) - 1.0;
    const double alpha = 0.5 + 6.0 * unif(rng);
    const double rho = 0.9 * unif(rng);
    const auto n = static_cast<std::size_t>(20 + 180 * unif(rng));
    Dataset d = oracle::simulated_dataset(n, gamma, alpha, rho, seed * 1000 + i, design);
    RcgParams at{alpha * (0.5 + unif(rng)), 0.9 * unif(rng), gamma};
    for (Eigen::Index j = 0; j < k; ++j) at.gamma[j] += 0.6 * unif(rng) - 0.3;
    out.push_back({std::move(d), at});
  }
  return out;
}

Outcome score_check() {
  double worst = 0.0;
  for (const auto& [d, at] : random_points(20, 101)) {
    const Eigen::VectorXd score = score_gamma(d, at);
    for (Eigen::Index j = 0; j < at.gamma.size(); ++j) {
      const double fd = oracle::derivative(
          [&](double g) {
            RcgParams q = at;
            q.gamma[j] = g;
            return log_likelihood(d, q);
          },
          at.gamma[j], 1e-3);
      worst = std::max(worst, std::abs(score[j] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return {worst <= 1e-6, fmt("max relative error = %.2e at 20 points", worst)};
}

Outcome information_check() {
  // Entries are scaled by max(|H_ij|, 1e-3 sqrt(H_ii H_jj)) so that
  // near-zero off-diagonal terms do not divide by roundoff.
  double worst = 0.0;
  for (const auto& [d, at] : random_points(20, 202)) {
    const Eigen::MatrixXd info = observed_information(d, at);
    const auto ll = [&](const Eigen::VectorXd& g) { return log_likelihood(d, RcgParams{at.alpha, at.rho, g}); };
    const Eigen::Index k = at.gamma.size();
    Eigen::MatrixXd num(k, k);
    for (Eigen::Index r = 0; r < k; ++r)
      for (Eigen::Index c = 0; c < k; ++c) num(r, c) = -oracle::second_derivative(ll, at.gamma, r, c, 2e-3);
    for (Eigen::Index r = 0; r < k; ++r)
      for (Eigen::Index c = 0; c < k; ++c) {
        const double scale = std::max(std::abs(num(r, c)), 1e-3 * std::sqrt(std::abs(num(r, r) * num(c, c))));
        worst = std::max(worst, std::abs(info(r, c) - num(r, c)) / scale);
      }
  }
  return {worst <= 1e-4, fmt("max relative error = %.2e at 20 points", worst)};
}

Outcome laplace_bessel_identity() {
  struct Point {
    double a, nu, p, c;
  };
  const std::vector<Point> points = {{2.0, 1.0, 2.0, 1.0}, {3.0, 2.0, 1.5, 0.9}, {1.5, 0.5, 1.0, 0.5},
                                     {2.5, 1.5, 3.0, 2.0}, {4.0, 3.0, 2.0, 1.5}, {1.2, 0.2, 1.0, 0.3},
                                     {5.0, 4.0, 4.0, 2.5}, {2.0, 0.0, 1.0, 0.6}, {6.0, 5.0, 2.5, 1.8},
                                     {3.3, 2.3, 1.7, 1.2}};
  double worst = 0.0;
  for (const auto& q : points) {
    const double exact = std::exp(-(q.a + q.nu) * std::log(q.p) + q.nu * std::log(q.c / 2.0) +
                                  log_gamma(q.nu + q.a) - log_gamma(q.nu + 1.0)) *
                         gauss_2f1((q.nu + q.a) / 2.0, (q.nu + q.a + 1.0) / 2.0, q.nu + 1.0, q.c * q.c / (q.p * q.p));
    const double numeric = oracle::integrate_half_line([&](double x) {
      if (x == 0.0) return 0.0;
      return std::exp((q.a - 1.0) * std::log(x) - q.p * x + log_bessel_i(q.nu, q.c * x));
    });
    worst = std::max(worst, std::abs(numeric - exact) / exact);
  }
  return {worst <= 1e-6, fmt("max relative error = %.2e at 10 points", worst)};
}

Outcome recovery() {
  const Eigen::VectorXd gamma = vec({0.2, 0.8, -0.5});
  std::vector<double> gamma_err, rho_err;
  std::size_t failed = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    const Dataset d = oracle::simulated_dataset(1000, gamma, 3.0, 0.5, 50000 + rep, "normal,fixed:0;1");
    const FitResult fit = fit_rcg_boost(d, FitConfig{});
    if (!fit.converged) ++failed;
    gamma_err.push_back((fit.params_hat.gamma - gamma).lpNorm<Eigen::Infinity>());
    rho_err.push_back(std::abs(fit.params_hat.rho - 0.5));
  }
  const double mg = median(gamma_err), mr = median(rho_err);
  return {mg <= 0.15 && mr <= 0.1,
          fmt("median |gamma error|_inf = %.4f, median |rho error| = %.4f, %g unconverged", mg, mr,
              static_cast<double>(failed))};
}

Outcome calibration() {
  SimSpec spec;
  spec.n_samples = 200;
  spec.n_sites = 2000;
  spec.alpha = 3.0;
  spec.rho = 0.5;
  spec.covariates = parse_covariate_spec("normal");
  spec.gamma = vec({0.0, 0.0});
  spec.seed = 909;
  const SimulatedData sim = simulate_dataset(spec);
  const auto results = run_sitewise(sim.meth, sim.covs, PipelineConfig{});
  std::size_t used = 0, rejected = 0;
  for (const auto& r : results) {
    if (!r.converged || r.effects.empty()) continue;
    ++used;
    rejected += r.effects[0].p_value < 0.05 ? 1 : 0;
  }
  const double rate = static_cast<double>(rejected) / static_cast<double>(used);
  return {used == results.size() && rate >= 0.035 && rate <= 0.065,
          fmt("rejection rate = %.4f over %g of 2000 sites", rate, static_cast<double>(used))};
}

Outcome optimizer_agreement() {
  double worst = 0.0;
  std::size_t both = 0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const Dataset d = oracle::simulated_dataset(1000, vec({0.2, 0.8, -0.5}), 3.0, 0.5, 60000 + rep, "normal,fixed:0;1");
    const FitResult boost = fit_rcg_boost(d, FitConfig{});
    const FitResult direct = fit_rcg_direct(d, FitConfig{});
    if (!boost.converged || !direct.converged) continue;
    ++both;
    worst = std::max(worst, std::abs(boost.log_lik - direct.log_lik) / static_cast<double>(d.n()));
  }
  return {both > 0 && worst <= 1e-4,
          fmt("max |ll_boost - ll_direct| / n = %.2e over %g of 20 datasets", worst, static_cast<double>(both))};
}

Outcome determinism() {
  SimSpec spec;
  spec.n_samples = 100;
  spec.n_sites = 50;
  spec.alpha = 3.0;
  spec.rho = 0.5;
  spec.covariates = parse_covariate_spec("normal,bernoulli:0.5");
  spec.gamma = vec({0.1, 0.4, -0.3});
  spec.seed = 1234;
  const SimulatedData sim = simulate_dataset(spec);
  std::size_t identical = 0;
  for (ModelKind kind : {ModelKind::rcg, ModelKind::mvalue, ModelKind::betareg}) {
    PipelineConfig one;
    one.model = kind;
    PipelineConfig eight = one;
    eight.workers = 8;
    identical += format_results(run_sitewise(sim.meth, sim.covs, one), ResultFormat::tsv) ==
                 format_results(run_sitewise(sim.meth, sim.covs, eight), ResultFormat::tsv);
  }
  return {identical == 3, fmt("%g of 3 models give identical tables for 1 and 8 workers",
                              static_cast<double>(identical))};
}

Outcome baselines() {
  const Dataset d = oracle::simulated_dataset(2000, vec({0.2, 0.8, -0.5}), 3.0, 0.5, 77, "normal,fixed:0;1");
  const BaselineParams mv = fit_mvalue(d);
  Eigen::VectorXd y(d.n());
  for (Eigen::Index i = 0; i < d.n(); ++i) y[i] = std::log2(d.b()[i] / (1.0 - d.b()[i]));
  const double ortho = (d.x().transpose() * (y - d.x() * mv.coef)).lpNorm<Eigen::Infinity>();

  // Beta regression data: logit(mu) = 0.3 + 0.6 x, precision 10.
  const Eigen::VectorXd coef = vec({0.3, 0.6});
  std::mt19937_64 rng(88);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd x(2000, 2);
  Eigen::VectorXd b(2000);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = normal(rng);
    const double mu = 1.0 / (1.0 + std::exp(-x.row(i).dot(coef)));
    const double g1 = std::gamma_distribution<double>(mu * 10.0, 1.0)(rng);
    const double g2 = std::gamma_distribution<double>((1.0 - mu) * 10.0, 1.0)(rng);
    b[i] = g1 / (g1 + g2);
  }
  const BaselineParams br = fit_beta_regression(Dataset(b, x));
  const double err = (br.coef - coef).lpNorm<Eigen::Infinity>();
  return {mv.converged && br.converged && ortho < 1e-10 && err <= 0.1,
          fmt("|X'r|_inf = %.2e, beta regression |coef error|_inf = %.4f", ortho, err)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;  // 0 means no runtime limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "density normalization", 10.0, normalization},
      {2, "beta reduction", 0.0, beta_reduction},
      {3, "sampler/density chi-square", 30.0, sampler_chi_square},
      {4, "bivariate gamma moments", 0.0, kibble_moments},
      {5, "score vs finite differences", 0.0, score_check},
      {6, "information vs numerical Hessian", 0.0, information_check},
      {7, "Laplace transform of Bessel identity", 0.0, laplace_bessel_identity},
      {8, "parameter recovery", 300.0, recovery},
      {9, "Wald calibration", 600.0, calibration},
      {10, "boosting vs direct ML", 0.0, optimizer_agreement},
      {11, "pipeline determinism", 0.0, determinism},
      {12, "baseline sanity", 0.0, baselines},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool pass = out.pass;
    if (c.budget_seconds > 0.0 && secs >= c.budget_seconds) {
      pass = false;
      out.detail += fmt(" (over the %.0f s budget)", c.budget_seconds);
    }
    failures += pass ? 0 : 1;
    std::printf("%s  criterion %2d  %-38s %s [%.1f s]\n", pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
