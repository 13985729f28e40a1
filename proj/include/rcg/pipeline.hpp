#pragma once

// Site-wise association testing: one regression per CpG site, run over a
// worker pool, with a flat result table.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "rcg/data.hpp"
#include "rcg/error.hpp"
#include "rcg/fitter.hpp"
#include "rcg/model.hpp"

namespace rcg {

struct SiteResult {
  std::string site_id;
  ModelKind model_kind = ModelKind::rcg;
  /// One entry per non-intercept covariate; empty for intercept-only models
  /// or failed fits.
  std::vector<WaldTest> effects;
  double alpha_hat = std::numeric_limits<double>::quiet_NaN();
  double rho_hat = std::numeric_limits<double>::quiet_NaN();
  double log_lik = std::numeric_limits<double>::quiet_NaN();
  long n_used = 0;
  bool converged = false;
  std::vector<std::string> flags;
  /// Wall time of the fit; not part of the written table.
  double fit_seconds = 0.0;
};

struct PipelineConfig {
  ModelKind model = ModelKind::rcg;
  FitConfig fit;
  double clamp_eps = kDefaultClampEps;
  unsigned workers = 1;
};

namespace detail {

inline std::string sanitize_flag(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\t' || ch == '\n' || ch == ';') ch = ' ';
  return s;
}

}  // namespace detail

/// Fits one site. `row` holds the site's beta values aligned with the rows of
/// `covs.design`; NaN cells are skipped. Failures are reported in the result.
inline SiteResult fit_site(const std::string& site_id, const Eigen::VectorXd& row, const CovariateTable& covs,
                           const PipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  SiteResult res;
  res.site_id = site_id;
  res.model_kind = cfg.model;

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < row.size(); ++i)
    if (std::isfinite(row[i])) keep.push_back(i);
  res.n_used = static_cast<long>(keep.size());
  const Eigen::Index k = covs.design.cols();
  if (static_cast<Eigen::Index>(keep.size()) <= k) {
    res.flags.emplace_back("too_few_observations");
    return res;
  }
  Eigen::VectorXd b(static_cast<Eigen::Index>(keep.size()));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(keep.size()), k);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    b[static_cast<Eigen::Index>(i)] = row[keep[i]];
    x.row(static_cast<Eigen::Index>(i)) = covs.design.row(keep[i]);
  }

  try {
    const Dataset data(std::move(b), std::move(x), covs.names, cfg.clamp_eps);
    if (data.clamped_count() > 0) res.flags.push_back("clamped=" + std::to_string(data.clamped_count()));
    if (cfg.model == ModelKind::rcg) {
      const FitResult fit = fit_rcg_boost(data, cfg.fit);
      res.alpha_hat = fit.params_hat.alpha;
      res.rho_hat = fit.params_hat.rho;
      res.log_lik = fit.log_lik;
      res.converged = fit.converged;
      if (fit.rho_at_boundary) res.flags.emplace_back("rho_boundary");
      if (!fit.converged) res.flags.emplace_back("not_converged");
      try {
        res.effects = wald_tests(data, fit.params_hat);
      } catch (const SingularInformationError&) {
        res.converged = false;
        res.flags.emplace_back("singular_information");
      }
    } else {
      const BaselineParams fit = cfg.model == ModelKind::mvalue ? fit_mvalue(data) : fit_beta_regression(data);
      res.log_lik = fit.log_lik;
      res.converged = fit.converged;
      if (!fit.converged) res.flags.emplace_back("not_converged");
      res.effects = baseline_tests(fit);
    }
  } catch (const std::exception& e) {
    res.converged = false;
    res.effects.clear();
    res.flags.push_back("error: " + detail::sanitize_flag(e.what()));
  }
  res.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

/// Runs `task(i)` for i in [0, count) on `workers` threads pulling from a
/// shared counter.
template <class Task>
void parallel_for(std::size_t count, unsigned workers, Task&& task) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) task(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// One SiteResult per site, sorted by site_id. Samples are put into sample_id
/// order before fitting so results do not depend on input column order.
inline std::vector<SiteResult> run_sitewise(const MethylationMatrix& meth, const CovariateTable& covs,
                                            const PipelineConfig& cfg) {
  cfg.fit.validate();
  if (meth.sample_ids != covs.sample_ids) throw ConfigError("run_sitewise: methylation and covariate samples are not aligned");
  if (static_cast<Eigen::Index>(meth.site_ids.size()) != meth.values.rows())
    throw ConfigError("run_sitewise: site ids do not match the methylation matrix");

  std::vector<Eigen::Index> order(meth.sample_ids.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return meth.sample_ids[static_cast<std::size_t>(a)] < meth.sample_ids[static_cast<std::size_t>(b)];
  });
  CovariateTable sorted_covs;
  sorted_covs.names = covs.names;
  sorted_covs.design.resize(covs.design.rows(), covs.design.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    sorted_covs.sample_ids.push_back(covs.sample_ids[static_cast<std::size_t>(order[i])]);
    sorted_covs.design.row(static_cast<Eigen::Index>(i)) = covs.design.row(order[i]);
  }

  std::vector<SiteResult> results(meth.site_ids.size());
  parallel_for(results.size(), cfg.workers, [&](std::size_t s) {
    const auto si = static_cast<Eigen::Index>(s);
    Eigen::VectorXd row(static_cast<Eigen::Index>(order.size()));
    for (std::size_t i = 0; i < order.size(); ++i) row[static_cast<Eigen::Index>(i)] = meth.values(si, order[i]);
    results[s] = fit_site(meth.site_ids[s], row, sorted_covs, cfg);
  });
  std::stable_sort(results.begin(), results.end(),
                   [](const SiteResult& a, const SiteResult& b) { return a.site_id < b.site_id; });
  return results;
}

// Result table ------------------------------------------------------------

enum class ResultFormat { tsv, csv };

inline ResultFormat parse_result_format(const std::string& s) {
  if (s == "tsv") return ResultFormat::tsv;
  if (s == "csv") return ResultFormat::csv;
  throw ConfigError("unknown output format '" + s + "' (expected tsv or csv)");
}

inline const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols = {"site_id", "covariate", "estimate", "std_error", "z",      "p_value",
                                                "alpha_hat", "rho_hat", "log_lik",  "n_used",    "converged", "flags"};
  return cols;
}

/// Header plus one line per (site, covariate); a site without covariate
/// effects gets a single line with the covariate fields left empty.
inline std::string format_results(const std::vector<SiteResult>& results, ResultFormat format) {
  const char sep = format == ResultFormat::tsv ? '\t' : ',';
  std::ostringstream out;
  const auto& cols = result_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? std::string(1, sep) : "") << cols[i];
  out << '\n';
  for (const auto& r : results) {
    std::string flags;
    for (const auto& f : r.flags) flags += (flags.empty() ? "" : ";") + f;
    const auto tail = [&] {
      std::ostringstream t;
      t << sep << format_double(r.alpha_hat) << sep << format_double(r.rho_hat) << sep << format_double(r.log_lik)
        << sep << r.n_used << sep << (r.converged ? "true" : "false") << sep << flags;
      return t.str();
    }();
    if (r.effects.empty()) {
      out << r.site_id << sep << sep << sep << sep << sep << tail << '\n';
      continue;
    }
    for (const auto& e : r.effects) {
      out << r.site_id << sep << e.name << sep << format_double(e.estimate) << sep << format_double(e.std_error) << sep
          << format_double(e.z) << sep << format_double(e.p_value) << tail << '\n';
    }
  }
  return out.str();
}

inline void write_results(const std::vector<SiteResult>& results, const std::string& out_path, ResultFormat format) {
  if (results.empty()) throw ConfigError("write_results: no results to write");
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
  out << format_results(results, format);
  if (!out) throw std::runtime_error("write failed for '" + out_path + "'");
}

/// Parses a table written by write_results back into SiteResults. Model kind
/// and fit times are not stored in the table and keep their defaults.
inline std::vector<SiteResult> read_results(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header != result_columns()) throw ParseError(path + ": unexpected result header", 1);
  std::vector<SiteResult> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t line = t.line_numbers[r];
    if (out.empty() || out.back().site_id != row[0]) {
      SiteResult s;
      s.site_id = row[0];
      s.alpha_hat = parse_cell(row[6], path, line);
      s.rho_hat = parse_cell(row[7], path, line);
      s.log_lik = parse_cell(row[8], path, line);
      s.n_used = static_cast<long>(parse_cell(row[9], path, line));
      if (row[10] != "true" && row[10] != "false") throw ParseError(path + ": bad converged field", line);
      s.converged = row[10] == "true";
      std::istringstream fs(row[11]);
      for (std::string f; std::getline(fs, f, ';');)
        if (!f.empty()) s.flags.push_back(f);
      out.push_back(std::move(s));
    }
    if (!row[1].empty()) {
      out.back().effects.push_back({row[1], parse_cell(row[2], path, line), parse_cell(row[3], path, line),
                                    parse_cell(row[4], path, line), parse_cell(row[5], path, line)});
    }
  }
  return out;
}

}  // namespace rcg
