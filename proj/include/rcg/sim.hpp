#pragma once

// Synthetic EWAS data from the covariate-linked bivariate gamma model, and a
// small experiment runner for recovery, calibration and power studies.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "rcg/data.hpp"
#include "rcg/error.hpp"
#include "rcg/fitter.hpp"
#include "rcg/kibble.hpp"
#include "rcg/pipeline.hpp"

namespace rcg {

struct CovariateGenerator {
  enum class Kind { standard_normal, bernoulli, fixed };
  Kind kind = Kind::standard_normal;
  double prob = 0.5;
  /// Values cycled over samples for Kind::fixed.
  std::vector<double> values;

  std::string describe() const {
    switch (kind) {
      case Kind::standard_normal:
        return "normal";
      case Kind::bernoulli:
        return "bernoulli:" + format_double(prob);
      case Kind::fixed: {
        std::string s = "fixed:";
        for (std::size_t i = 0; i < values.size(); ++i) s += (i ? ";" : "") + format_double(values[i]);
        return s;
      }
    }
    return "";
  }
};

/// Parses "normal,bernoulli:0.5,fixed:0;1" into one generator per covariate.
inline std::vector<CovariateGenerator> parse_covariate_spec(const std::string& spec) {
  std::vector<CovariateGenerator> out;
  if (spec.empty()) return out;
  std::istringstream in(spec);
  for (std::string item; std::getline(in, item, ',');) {
    item = detail::trim(item);
    CovariateGenerator g;
    const auto colon = item.find(':');
    const std::string head = item.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : item.substr(colon + 1);
    try {
      if (head == "normal" || head == "standard_normal") {
        g.kind = CovariateGenerator::Kind::standard_normal;
      } else if (head == "bernoulli") {
        g.kind = CovariateGenerator::Kind::bernoulli;
        if (!arg.empty()) g.prob = std::stod(arg);
        if (!(g.prob > 0.0 && g.prob < 1.0)) throw ConfigError("bernoulli probability must lie in (0, 1)");
      } else if (head == "fixed") {
        g.kind = CovariateGenerator::Kind::fixed;
        std::istringstream vs(arg);
        for (std::string v; std::getline(vs, v, ';');) g.values.push_back(std::stod(v));
        if (g.values.empty()) throw ConfigError("fixed covariate needs at least one value");
      } else {
        throw ConfigError("unknown covariate generator '" + head + "'");
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad number in covariate spec '" + item + "'");
    }
    out.push_back(std::move(g));
  }
  return out;
}

struct SimSpec {
  std::size_t n_samples = 100;
  std::size_t n_sites = 1;
  double alpha = 1.0;
  double rho = 0.0;
  /// gamma = zeta_m - zeta_u, intercept first; length = covariates + 1.
  Eigen::VectorXd gamma;
  /// Coefficients of log(lambda_u); empty means zeros.
  Eigen::VectorXd zeta_u;
  std::vector<CovariateGenerator> covariates;
  double offset_a = 0.0;
  std::uint64_t seed = 1;

  Eigen::Index n_coef() const { return static_cast<Eigen::Index>(covariates.size()) + 1; }

  void validate() const {
    if (n_samples < 1 || n_sites < 1) throw ConfigError("SimSpec: need at least one sample and one site");
    if (!(alpha > 0.0)) throw ConfigError("SimSpec: alpha must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("SimSpec: rho must lie in [0, 1)");
    if (gamma.size() != n_coef()) throw ConfigError("SimSpec: gamma needs one entry per covariate plus intercept");
    if (zeta_u.size() != 0 && zeta_u.size() != n_coef())
      throw ConfigError("SimSpec: zeta_u needs one entry per covariate plus intercept");
    if (!(offset_a >= 0.0)) throw ConfigError("SimSpec: offset must be non-negative");
  }

  Eigen::VectorXd zeta_u_or_zero() const { return zeta_u.size() ? zeta_u : Eigen::VectorXd::Zero(n_coef()); }
};

struct SimulatedData {
  MethylationMatrix meth;
  CovariateTable covs;
  SimSpec truth;
  Eigen::VectorXd zeta_m;
};

inline std::string zero_padded(const std::string& prefix, std::size_t i, std::size_t total) {
  const int width = static_cast<int>(std::to_string(total).size());
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, i);
  return prefix + buf;
}

/// Covariates are drawn once per sample from stream 0 of the seed and shared by
/// all sites; site s draws its (M, U) pairs from stream s + 1, with
/// lambda_m = exp(x'zeta_m) and lambda_u = exp(x'zeta_u) per sample.
inline SimulatedData simulate_dataset(const SimSpec& spec, unsigned workers = 1) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n_samples);
  const auto sites = static_cast<Eigen::Index>(spec.n_sites);
  const Eigen::Index k = spec.n_coef();

  SimulatedData out;
  out.truth = spec;
  out.truth.zeta_u = spec.zeta_u_or_zero();
  out.zeta_m = spec.gamma + out.truth.zeta_u;

  CovariateTable& covs = out.covs;
  covs.names.emplace_back("(Intercept)");
  for (Eigen::Index j = 1; j < k; ++j) covs.names.push_back("x" + std::to_string(j));
  covs.design.resize(n, k);
  covs.design.col(0).setOnes();
  std::mt19937_64 cov_rng(derive_seed(spec.seed, 0));
  for (Eigen::Index i = 0; i < n; ++i) {
    covs.sample_ids.push_back(zero_padded("s", static_cast<std::size_t>(i + 1), spec.n_samples));
    for (Eigen::Index j = 1; j < k; ++j) {
      const auto& g = spec.covariates[static_cast<std::size_t>(j - 1)];
      double v = 0.0;
      switch (g.kind) {
        case CovariateGenerator::Kind::standard_normal:
          v = std::normal_distribution<double>(0.0, 1.0)(cov_rng);
          break;
        case CovariateGenerator::Kind::bernoulli:
          v = std::bernoulli_distribution(g.prob)(cov_rng) ? 1.0 : 0.0;
          break;
        case CovariateGenerator::Kind::fixed:
          v = g.values[static_cast<std::size_t>(i) % g.values.size()];
          break;
      }
      covs.design(i, j) = v;
    }
  }
  const Eigen::VectorXd lambda_m = (covs.design * out.zeta_m).array().exp().matrix();
  const Eigen::VectorXd lambda_u = (covs.design * out.truth.zeta_u).array().exp().matrix();

  Eigen::MatrixXd m(sites, n);
  Eigen::MatrixXd u(sites, n);
  parallel_for(spec.n_sites, workers, [&](std::size_t s) {
    KibbleSampler sampler(derive_seed(spec.seed, s + 1));
    const auto si = static_cast<Eigen::Index>(s);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto [mi, ui] = sampler(KibbleParams{spec.alpha, lambda_m[i], lambda_u[i], spec.rho});
      m(si, i) = mi;
      u(si, i) = ui;
    }
  });

  std::vector<std::string> site_ids;
  for (std::size_t s = 0; s < spec.n_sites; ++s) site_ids.push_back(zero_padded("site", s + 1, spec.n_sites));
  out.meth = from_intensities(std::move(site_ids), covs.sample_ids, std::move(m), std::move(u), spec.offset_a);
  return out;
}

inline nlohmann::json to_json(const SimSpec& spec) {
  nlohmann::json j;
  j["n_samples"] = spec.n_samples;
  j["n_sites"] = spec.n_sites;
  j["alpha"] = spec.alpha;
  j["rho"] = spec.rho;
  j["gamma"] = std::vector<double>(spec.gamma.data(), spec.gamma.data() + spec.gamma.size());
  const Eigen::VectorXd zu = spec.zeta_u_or_zero();
  j["zeta_u"] = std::vector<double>(zu.data(), zu.data() + zu.size());
  std::vector<std::string> covs;
  for (const auto& g : spec.covariates) covs.push_back(g.describe());
  j["covariates"] = covs;
  j["offset_a"] = spec.offset_a;
  j["seed"] = spec.seed;
  return j;
}

// Experiments ---------------------------------------------------------------

/// Summary of one (grid cell, model) pair. Bias, RMSE and Wald-interval
/// coverage refer to gamma_1 and are only defined for the RCG model, whose
/// coefficients are on the scale of the generating parameters.
struct CellSummary {
  std::size_t cell = 0;
  std::size_t n_samples = 0;
  double true_effect = 0.0;
  std::string model;
  std::size_t n_fits = 0;
  std::size_t n_failed = 0;
  double bias = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double rejection_rate = std::numeric_limits<double>::quiet_NaN();
  double mean_fit_seconds = std::numeric_limits<double>::quiet_NaN();

};

struct ExperimentReport {
  double level = 0.05;
  std::vector<CellSummary> cells;
};

namespace detail {

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

/// Each grid cell is simulated with `replicates` sites (its own seed stream)
/// and every site is fitted with each target model. The focal covariate is
/// column 1 of the design.
inline ExperimentReport run_experiment(const std::vector<SimSpec>& grid, const std::vector<ModelKind>& targets,
                                       std::size_t replicates, std::uint64_t seed, const FitConfig& fit = {},
                                       unsigned workers = 1, double level = 0.05) {
  if (replicates < 1) throw ConfigError("run_experiment: need at least one replicate");
  ExperimentReport report;
  report.level = level;
  const double z_crit = 1.959963984540054;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    SimSpec spec = grid[c];
    spec.n_sites = replicates;
    spec.seed = derive_seed(seed, c);
    if (spec.n_coef() < 2) throw ConfigError("run_experiment: each cell needs at least one covariate");
    const SimulatedData sim = simulate_dataset(spec, workers);
    for (ModelKind model : targets) {
      PipelineConfig cfg;
      cfg.model = model;
      cfg.fit = fit;
      cfg.workers = workers;
      const auto results = run_sitewise(sim.meth, sim.covs, cfg);
      CellSummary cs;
      cs.cell = c;
      cs.n_samples = spec.n_samples;
      cs.true_effect = spec.gamma[1];
      cs.model = to_string(model);
      double err_sum = 0.0, err_sq = 0.0, time_sum = 0.0;
      std::size_t covered = 0, rejected = 0;
      for (const auto& r : results) {
        time_sum += r.fit_seconds;
        if (!r.converged || r.effects.empty() || !std::isfinite(r.effects[0].p_value)) {
          ++cs.n_failed;
          continue;
        }
        ++cs.n_fits;
        const WaldTest& e = r.effects[0];
        const double err = e.estimate - cs.true_effect;
        err_sum += err;
        err_sq += err * err;
        if (std::abs(err) <= z_crit * e.std_error) ++covered;
        if (e.p_value < level) ++rejected;
      }
      cs.mean_fit_seconds = time_sum / static_cast<double>(results.size());
      if (cs.n_fits > 0) {
        const double nf = static_cast<double>(cs.n_fits);
        cs.rejection_rate = static_cast<double>(rejected) / nf;
        if (model == ModelKind::rcg) {
          cs.bias = err_sum / nf;
          cs.rmse = std::sqrt(err_sq / nf);
          cs.coverage = static_cast<double>(covered) / nf;
        }
      }
      report.cells.push_back(cs);
    }
  }
  return report;
}

inline nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json j;
  j["level"] = report.level;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : report.cells) {
    j["cells"].push_back({{"cell", c.cell},
                          {"n_samples", c.n_samples},
                          {"true_effect", detail::number_or_null(c.true_effect)},
                          {"model", c.model},
                          {"n_fits", c.n_fits},
                          {"n_failed", c.n_failed},
                          {"bias", detail::number_or_null(c.bias)},
                          {"rmse", detail::number_or_null(c.rmse)},
                          {"coverage", detail::number_or_null(c.coverage)},
                          {"rejection_rate", detail::number_or_null(c.rejection_rate)},
                          {"mean_fit_seconds", detail::number_or_null(c.mean_fit_seconds)}});
  }
  return j;
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  r.level = j.at("level").get<double>();
  for (const auto& c : j.at("cells")) {
    CellSummary s;
    s.cell = c.at("cell").get<std::size_t>();
    s.n_samples = c.at("n_samples").get<std::size_t>();
    s.true_effect = detail::number_from(c.at("true_effect"));
    s.model = c.at("model").get<std::string>();
    s.n_fits = c.at("n_fits").get<std::size_t>();
    s.n_failed = c.at("n_failed").get<std::size_t>();
    s.bias = detail::number_from(c.at("bias"));
    s.rmse = detail::number_from(c.at("rmse"));
    s.coverage = detail::number_from(c.at("coverage"));
    s.rejection_rate = detail::number_from(c.at("rejection_rate"));
    s.mean_fit_seconds = detail::number_from(c.at("mean_fit_seconds"));
    r.cells.push_back(std::move(s));
  }
  return r;
}

inline void write_report(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << to_json(report).dump(2) << '\n';
}

inline ExperimentReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace rcg
