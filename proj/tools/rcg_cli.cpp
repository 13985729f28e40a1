// Command-line front end: `rcg fit` runs site-wise association tests,
// `rcg simulate` writes a synthetic dataset in the same file formats.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rcg/rcg.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitParse = 3;

struct FitArgs {
  std::string meth;
  std::string cov;
  std::string model = "rcg";
  std::string out;
  std::string format = "tsv";
  unsigned workers = 1;
  double offset = 100.0;
  double clamp_eps = rcg::kDefaultClampEps;
  double step_length = 0.1;
  int max_iter = 5000;
  std::uint64_t seed = 1;
  std::string raw = "none";
};

struct SimulateArgs {
  std::size_t n_samples = 100;
  std::size_t n_sites = 10;
  double alpha = 3.0;
  double rho = 0.5;
  std::string gamma = "0,0.5";
  std::string zeta_u;
  std::string covariates = "normal";
  double offset = 0.0;
  std::uint64_t seed = 1;
  std::string out_prefix;
};

Eigen::VectorXd parse_vector(const std::string& text, const std::string& flag) {
  std::vector<double> values;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item = rcg::detail::trim(item);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
      throw rcg::ConfigError(flag + ": '" + item + "' is not a number");
    values.push_back(v);
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

/// Expands `--config FILE` into `--key value` pairs placed ahead of the real
/// arguments; with take-last option semantics the command line then wins.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::vector<std::string> out;
  std::vector<std::string> from_file;
  std::size_t insert_at = 0;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
      if (args[i] == "fit" || args[i] == "simulate") insert_at = out.size();
      continue;
    }
    std::ifstream in(path);
    if (!in) throw rcg::ConfigError("cannot open config file '" + path + "'");
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      line = rcg::detail::trim(line);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw rcg::ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
      std::string key = rcg::detail::trim(line.substr(0, eq));
      std::string value = rcg::detail::trim(line.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      std::replace(key.begin(), key.end(), '_', '-');
      from_file.push_back("--" + key);
      from_file.push_back(value);
    }
  }
  if (!from_file.empty() && insert_at == 0) throw rcg::ConfigError("--config must follow a subcommand");
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(insert_at), from_file.begin(), from_file.end());
  return out;
}

rcg::RawLayout parse_raw_layout(const std::string& s) {
  if (s == "none") return rcg::RawLayout::none;
  if (s == "paired") return rcg::RawLayout::paired;
  if (s == "long") return rcg::RawLayout::long_format;
  throw rcg::ConfigError("unknown raw layout '" + s + "' (expected none, paired or long)");
}

int run_fit(const FitArgs& a) {
  rcg::PipelineConfig cfg;
  cfg.model = rcg::parse_model_kind(a.model);
  cfg.fit.step_length = a.step_length;
  cfg.fit.max_iter = a.max_iter;
  cfg.clamp_eps = a.clamp_eps;
  cfg.workers = a.workers;
  cfg.fit.validate();
  if (!(a.clamp_eps > 0.0 && a.clamp_eps < 0.5)) throw rcg::ConfigError("--clamp-eps must lie in (0, 0.5)");
  if (!(a.offset >= 0.0)) throw rcg::ConfigError("--offset must be non-negative");
  const rcg::ResultFormat format = rcg::parse_result_format(a.format);

  rcg::LoadOptions load;
  load.raw = parse_raw_layout(a.raw);
  load.offset_a = a.offset;
  const rcg::LoadedInputs in = rcg::load_inputs(a.meth, a.cov, load);
  for (const auto& w : in.warnings) std::cerr << "warning: " << w << '\n';

  const auto results = rcg::run_sitewise(in.meth, in.covs, cfg);
  rcg::write_results(results, a.out, format);

  std::size_t failed = 0;
  for (const auto& r : results) failed += r.converged ? 0 : 1;
  std::cerr << "fitted " << results.size() << " site(s) on " << in.meth.sample_ids.size() << " sample(s)";
  if (failed) std::cerr << ", " << failed << " without convergence";
  std::cerr << '\n';
  return kExitOk;
}

int run_simulate(const SimulateArgs& a) {
  rcg::SimSpec spec;
  spec.n_samples = a.n_samples;
  spec.n_sites = a.n_sites;
  spec.alpha = a.alpha;
  spec.rho = a.rho;
  spec.covariates = rcg::parse_covariate_spec(a.covariates);
  spec.gamma = parse_vector(a.gamma, "--gamma");
  if (!a.zeta_u.empty()) spec.zeta_u = parse_vector(a.zeta_u, "--zeta-u");
  spec.offset_a = a.offset;
  spec.seed = a.seed;
  const rcg::SimulatedData sim = rcg::simulate_dataset(spec);

  rcg::write_beta_csv(sim.meth, a.out_prefix + "_beta.csv");
  rcg::write_covariates_csv(sim.covs, a.out_prefix + "_cov.csv");
  rcg::write_intensity_csvs(sim.meth, a.out_prefix);
  std::ofstream truth(a.out_prefix + "_truth.json");
  if (!truth) throw std::runtime_error("cannot write '" + a.out_prefix + "_truth.json'");
  nlohmann::json j = rcg::to_json(sim.truth);
  j["zeta_m"] = std::vector<double>(sim.zeta_m.data(), sim.zeta_m.data() + sim.zeta_m.size());
  truth << j.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ratio-of-correlated-gammas regression for methylation beta values"};
  app.require_subcommand(1);

  FitArgs fa;
  CLI::App* fit = app.add_subcommand("fit", "Fit one regression per site and write a result table");
  fit->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  fit->add_option("--config", config_path, "key=value file; command-line flags take precedence");
  fit->add_option("--meth", fa.meth, "Methylation CSV (beta values, or intensities with --raw)")->required();
  fit->add_option("--cov", fa.cov, "Covariate CSV, first column sample_id")->required();
  fit->add_option("--model", fa.model, "rcg, mvalue or betareg")->capture_default_str();
  fit->add_option("--out", fa.out, "Output table path")->required();
  fit->add_option("--format", fa.format, "tsv or csv")->capture_default_str();
  fit->add_option("--workers", fa.workers, "Worker threads")->capture_default_str();
  fit->add_option("--offset", fa.offset, "Offset a in b = M/(M+U+a), raw input only")->capture_default_str();
  fit->add_option("--clamp-eps", fa.clamp_eps, "Clamp beta values into [e, 1-e]")->capture_default_str();
  fit->add_option("--step-length", fa.step_length, "Boosting step length")->capture_default_str();
  fit->add_option("--max-iter", fa.max_iter, "Boosting iteration cap")->capture_default_str();
  fit->add_option("--seed", fa.seed, "Accepted for interface symmetry; fits are deterministic")->capture_default_str();
  fit->add_option("--raw", fa.raw, "Raw intensity layout: none, paired (<prefix>_M.csv/_U.csv) or long")
      ->capture_default_str();

  SimulateArgs sa;
  CLI::App* sim = app.add_subcommand("simulate", "Write a synthetic dataset");
  sim->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  sim->add_option("--config", config_path, "key=value file; command-line flags take precedence");
  sim->add_option("--n-samples", sa.n_samples)->capture_default_str();
  sim->add_option("--n-sites", sa.n_sites)->capture_default_str();
  sim->add_option("--alpha", sa.alpha)->capture_default_str();
  sim->add_option("--rho", sa.rho)->capture_default_str();
  sim->add_option("--gamma", sa.gamma, "Comma list, intercept first")->capture_default_str();
  sim->add_option("--zeta-u", sa.zeta_u, "Comma list for log(lambda_u); default zeros");
  sim->add_option("--covariates", sa.covariates, "e.g. normal,bernoulli:0.5,fixed:0;1")->capture_default_str();
  sim->add_option("--offset", sa.offset)->capture_default_str();
  sim->add_option("--seed", sa.seed)->capture_default_str();
  sim->add_option("--out-prefix", sa.out_prefix)->required();

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const rcg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);

  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (fit->parsed()) return run_fit(fa);
    return run_simulate(sa);
  } catch (const rcg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const rcg::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitParse;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
