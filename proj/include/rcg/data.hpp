#pragma once

// Methylation and covariate tables and their CSV representations.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rcg/error.hpp"

namespace rcg {

enum class MethylationMode { beta, raw_intensity };

/// Sites x samples. `values` always holds beta values (NaN marks a missing
/// cell); in raw mode `m` and `u` keep the intensities they were computed from.
struct MethylationMatrix {
  std::vector<std::string> site_ids;
  std::vector<std::string> sample_ids;
  Eigen::MatrixXd values;
  MethylationMode mode = MethylationMode::beta;
  double offset_a = 0.0;
  Eigen::MatrixXd m;
  Eigen::MatrixXd u;

  Eigen::Index n_sites() const { return values.rows(); }
  Eigen::Index n_samples() const { return values.cols(); }

  void validate() const {
    if (static_cast<Eigen::Index>(site_ids.size()) != values.rows() ||
        static_cast<Eigen::Index>(sample_ids.size()) != values.cols())
      throw DomainError("MethylationMatrix: id vectors do not match value dimensions");
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      const double v = values.data()[i];
      if (std::isfinite(v) && (v < 0.0 || v > 1.0)) throw DomainError("MethylationMatrix: beta value outside [0, 1]");
    }
    if (mode == MethylationMode::raw_intensity) {
      if (m.rows() != values.rows() || m.cols() != values.cols() || u.rows() != values.rows() ||
          u.cols() != values.cols())
        throw DomainError("MethylationMatrix: intensity matrices do not match value dimensions");
      if ((m.array() < 0.0).any() || (u.array() < 0.0).any())
        throw DomainError("MethylationMatrix: negative intensity");
      if (!(offset_a >= 0.0)) throw DomainError("MethylationMatrix: offset must be non-negative");
    }
  }
};

/// Beta values b = M / (M + U + a); cells with a zero denominator or missing
/// intensity become NaN.
inline MethylationMatrix from_intensities(std::vector<std::string> site_ids, std::vector<std::string> sample_ids,
                                          Eigen::MatrixXd m, Eigen::MatrixXd u, double offset_a) {
  if (!(offset_a >= 0.0)) throw DomainError("offset must be non-negative");
  MethylationMatrix out;
  out.site_ids = std::move(site_ids);
  out.sample_ids = std::move(sample_ids);
  out.mode = MethylationMode::raw_intensity;
  out.offset_a = offset_a;
  out.values.resize(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double denom = m(r, c) + u(r, c) + offset_a;
      out.values(r, c) = denom > 0.0 ? m(r, c) / denom : std::numeric_limits<double>::quiet_NaN();
    }
  }
  out.m = std::move(m);
  out.u = std::move(u);
  out.validate();
  return out;
}

/// Design matrix with the intercept column first, one row per sample.
struct CovariateTable {
  std::vector<std::string> sample_ids;
  Eigen::MatrixXd design;
  std::vector<std::string> names;

  Eigen::Index n_samples() const { return design.rows(); }
};

// CSV ---------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, delim)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

inline bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "." || s == "null";
}

}  // namespace detail

/// Reads a comma- or tab-separated file. Blank lines and lines starting with
/// '#' are skipped; every data row must have as many cells as the header.
inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  char delim = ',';
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!have_header) {
      if (line.find(',') == std::string::npos && line.find('\t') != std::string::npos) delim = '\t';
      table.header = detail::split_line(line, delim);
      have_header = true;
      continue;
    }
    auto cells = detail::split_line(line, delim);
    if (cells.size() != table.header.size())
      throw ParseError(path + ": expected " + std::to_string(table.header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw ParseError(path + ": empty file");
  return table;
}

/// Numeric cell; missing tokens (empty, NA, NaN) give NaN.
inline double parse_cell(const std::string& s, const std::string& path, std::size_t line) {
  if (detail::is_missing_token(s)) return std::numeric_limits<double>::quiet_NaN();
  if (s == "Inf" || s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-Inf" || s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s[0] == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError(path + ": non-numeric cell '" + s + "'", line);
  return v;
}

/// Shortest round-trippable text for a double; NaN is written as NA.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace detail {

struct WideMatrix {
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  Eigen::MatrixXd values;
};

inline WideMatrix read_wide_matrix(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 2) throw ParseError(path + ": need a site_id column and at least one sample column", 1);
  WideMatrix w;
  w.col_ids.assign(t.header.begin() + 1, t.header.end());
  w.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(w.col_ids.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    w.row_ids.push_back(t.rows[r][0]);
    for (std::size_t c = 1; c < t.header.size(); ++c)
      w.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) =
          parse_cell(t.rows[r][c], path, t.line_numbers[r]);
  }
  return w;
}

inline void write_wide_matrix(const std::string& path, const std::string& corner,
                              const std::vector<std::string>& row_ids, const std::vector<std::string>& col_ids,
                              const Eigen::MatrixXd& values) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << corner;
  for (const auto& c : col_ids) out << ',' << c;
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out << row_ids[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < values.cols(); ++c) out << ',' << format_double(values(r, c));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace detail

inline MethylationMatrix read_beta_csv(const std::string& path) {
  detail::WideMatrix w = detail::read_wide_matrix(path);
  MethylationMatrix m;
  m.site_ids = std::move(w.row_ids);
  m.sample_ids = std::move(w.col_ids);
  m.values = std::move(w.values);
  for (Eigen::Index i = 0; i < m.values.size(); ++i) {
    const double v = m.values.data()[i];
    if (!std::isnan(v) && !(v >= 0.0 && v <= 1.0)) throw ParseError(path + ": beta value outside [0, 1]");
  }
  return m;
}

/// Paired raw intensities: `<prefix>_M.csv` and `<prefix>_U.csv` with identical
/// layout. A path that already ends in `_M.csv` is accepted as the M file.
inline MethylationMatrix read_paired_intensities(const std::string& meth_path, double offset_a) {
  std::string prefix = meth_path;
  const std::string suffix = "_M.csv";
  if (prefix.size() > suffix.size() && prefix.compare(prefix.size() - suffix.size(), suffix.size(), suffix) == 0)
    prefix.resize(prefix.size() - suffix.size());
  detail::WideMatrix m = detail::read_wide_matrix(prefix + "_M.csv");
  detail::WideMatrix u = detail::read_wide_matrix(prefix + "_U.csv");
  if (m.row_ids != u.row_ids || m.col_ids != u.col_ids)
    throw ParseError("paired intensity files disagree on site or sample ids");
  if ((m.values.array() < 0.0).any() || (u.values.array() < 0.0).any())
    throw ParseError("negative intensity in paired intensity files");
  return from_intensities(std::move(m.row_ids), std::move(m.col_ids), std::move(m.values), std::move(u.values),
                          offset_a);
}

/// Long-format raw intensities with columns site_id, sample_id, M, U. Absent
/// (site, sample) pairs become missing cells.
inline MethylationMatrix read_long_intensities(const std::string& path, double offset_a) {
  const CsvTable t = read_csv(path);
  if (t.header.size() != 4) throw ParseError(path + ": long format needs columns site_id,sample_id,M,U", 1);
  std::vector<std::string> sites;
  std::vector<std::string> samples;
  std::unordered_map<std::string, Eigen::Index> site_idx;
  std::unordered_map<std::string, Eigen::Index> sample_idx;
  struct Cell {
    Eigen::Index site, sample;
    double m, u;
  };
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    auto [si, s_new] = site_idx.emplace(row[0], static_cast<Eigen::Index>(sites.size()));
    if (s_new) sites.push_back(row[0]);
    auto [pi, p_new] = sample_idx.emplace(row[1], static_cast<Eigen::Index>(samples.size()));
    if (p_new) samples.push_back(row[1]);
    const double m = parse_cell(row[2], path, t.line_numbers[r]);
    const double u = parse_cell(row[3], path, t.line_numbers[r]);
    if (m < 0.0 || u < 0.0) throw ParseError(path + ": negative intensity", t.line_numbers[r]);
    cells.push_back({si->second, pi->second, m, u});
  }
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd mm = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(sites.size()),
                                                 static_cast<Eigen::Index>(samples.size()), nan);
  Eigen::MatrixXd uu = mm;
  for (const auto& c : cells) {
    mm(c.site, c.sample) = c.m;
    uu(c.site, c.sample) = c.u;
  }
  // Missing intensities propagate as NaN beta values; keep the intensity
  // matrices non-negative for validation by zero-filling.
  MethylationMatrix out = from_intensities(sites, samples, mm.unaryExpr([](double v) { return std::isnan(v) ? 0.0 : v; }),
                                           uu.unaryExpr([](double v) { return std::isnan(v) ? 0.0 : v; }), offset_a);
  for (Eigen::Index i = 0; i < mm.size(); ++i)
    if (std::isnan(mm.data()[i]) || std::isnan(uu.data()[i])) out.values.data()[i] = nan;
  return out;
}

/// Covariate CSV: first column sample_id, remaining numeric columns. Rows with
/// any missing value are dropped (complete-case); their count is returned.
inline std::pair<CovariateTable, std::size_t> read_covariates_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header.empty()) throw ParseError(path + ": missing header", 1);
  const std::size_t p = t.header.size() - 1;
  CovariateTable cov;
  cov.names.emplace_back("(Intercept)");
  cov.names.insert(cov.names.end(), t.header.begin() + 1, t.header.end());
  std::vector<std::vector<double>> kept;
  std::size_t dropped = 0;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::vector<double> row(p);
    bool complete = true;
    for (std::size_t c = 0; c < p; ++c) {
      row[c] = parse_cell(t.rows[r][c + 1], path, t.line_numbers[r]);
      if (!std::isfinite(row[c])) complete = false;
    }
    if (!seen.insert(t.rows[r][0]).second)
      throw ParseError(path + ": duplicate sample id '" + t.rows[r][0] + "'", t.line_numbers[r]);
    if (!complete) {
      ++dropped;
      continue;
    }
    cov.sample_ids.push_back(t.rows[r][0]);
    kept.push_back(std::move(row));
  }
  cov.design.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(p + 1));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    cov.design(ri, 0) = 1.0;
    for (std::size_t c = 0; c < p; ++c) cov.design(ri, static_cast<Eigen::Index>(c + 1)) = kept[r][c];
  }
  return {std::move(cov), dropped};
}

inline void write_beta_csv(const MethylationMatrix& m, const std::string& path) {
  detail::write_wide_matrix(path, "site_id", m.site_ids, m.sample_ids, m.values);
}

inline void write_intensity_csvs(const MethylationMatrix& m, const std::string& prefix) {
  if (m.mode != MethylationMode::raw_intensity) throw DomainError("write_intensity_csvs: matrix has no intensities");
  detail::write_wide_matrix(prefix + "_M.csv", "site_id", m.site_ids, m.sample_ids, m.m);
  detail::write_wide_matrix(prefix + "_U.csv", "site_id", m.site_ids, m.sample_ids, m.u);
}

/// Writes the covariates without the intercept column.
inline void write_covariates_csv(const CovariateTable& cov, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "sample_id";
  for (std::size_t j = 1; j < cov.names.size(); ++j) out << ',' << cov.names[j];
  out << '\n';
  for (Eigen::Index r = 0; r < cov.design.rows(); ++r) {
    out << cov.sample_ids[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 1; c < cov.design.cols(); ++c) out << ',' << format_double(cov.design(r, c));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// Loading and joining -----------------------------------------------------

enum class RawLayout { none, paired, long_format };

struct LoadOptions {
  RawLayout raw = RawLayout::none;
  double offset_a = 100.0;
};

struct LoadedInputs {
  MethylationMatrix meth;
  CovariateTable covs;
  std::vector<std::string> warnings;
};

/// Restricts both tables to the samples they share, in methylation-file order.
inline LoadedInputs join_inputs(MethylationMatrix meth, const CovariateTable& covs, std::vector<std::string> warnings = {}) {
  std::unordered_map<std::string, Eigen::Index> cov_row;
  for (std::size_t i = 0; i < covs.sample_ids.size(); ++i) cov_row.emplace(covs.sample_ids[i], static_cast<Eigen::Index>(i));
  std::vector<Eigen::Index> meth_cols;
  std::vector<Eigen::Index> cov_rows;
  std::set<std::string> meth_seen;
  for (std::size_t j = 0; j < meth.sample_ids.size(); ++j) {
    if (!meth_seen.insert(meth.sample_ids[j]).second)
      throw ParseError("duplicate sample id '" + meth.sample_ids[j] + "' in methylation file");
    const auto it = cov_row.find(meth.sample_ids[j]);
    if (it == cov_row.end()) continue;
    meth_cols.push_back(static_cast<Eigen::Index>(j));
    cov_rows.push_back(it->second);
  }
  if (meth_cols.empty()) throw ParseError("methylation and covariate files share no samples");
  const std::size_t meth_only = meth.sample_ids.size() - meth_cols.size();
  const std::size_t cov_only = covs.sample_ids.size() - cov_rows.size();
  if (meth_only > 0)
    warnings.push_back(std::to_string(meth_only) + " sample(s) without covariates dropped");
  if (cov_only > 0)
    warnings.push_back(std::to_string(cov_only) + " covariate row(s) without methylation data dropped");

  LoadedInputs out;
  out.meth.site_ids = meth.site_ids;
  out.meth.mode = meth.mode;
  out.meth.offset_a = meth.offset_a;
  const auto nsel = static_cast<Eigen::Index>(meth_cols.size());
  out.meth.values.resize(meth.values.rows(), nsel);
  if (meth.mode == MethylationMode::raw_intensity) {
    out.meth.m.resize(meth.values.rows(), nsel);
    out.meth.u.resize(meth.values.rows(), nsel);
  }
  out.covs.names = covs.names;
  out.covs.design.resize(nsel, covs.design.cols());
  for (Eigen::Index j = 0; j < nsel; ++j) {
    const auto src = meth_cols[static_cast<std::size_t>(j)];
    out.meth.sample_ids.push_back(meth.sample_ids[static_cast<std::size_t>(src)]);
    out.meth.values.col(j) = meth.values.col(src);
    if (meth.mode == MethylationMode::raw_intensity) {
      out.meth.m.col(j) = meth.m.col(src);
      out.meth.u.col(j) = meth.u.col(src);
    }
    const auto row = cov_rows[static_cast<std::size_t>(j)];
    out.covs.sample_ids.push_back(covs.sample_ids[static_cast<std::size_t>(row)]);
    out.covs.design.row(j) = covs.design.row(row);
  }
  out.warnings = std::move(warnings);
  return out;
}

inline LoadedInputs load_inputs(const std::string& meth_path, const std::string& cov_path, const LoadOptions& options = {}) {
  MethylationMatrix meth;
  switch (options.raw) {
    case RawLayout::none:
      meth = read_beta_csv(meth_path);
      break;
    case RawLayout::paired:
      meth = read_paired_intensities(meth_path, options.offset_a);
      break;
    case RawLayout::long_format:
      meth = read_long_intensities(meth_path, options.offset_a);
      break;
  }
  auto [covs, dropped] = read_covariates_csv(cov_path);
  std::vector<std::string> warnings;
  if (dropped > 0) warnings.push_back(std::to_string(dropped) + " covariate row(s) with missing values dropped");
  return join_inputs(std::move(meth), covs, std::move(warnings));
}

}  // namespace rcg
