#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rcg {

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A quantity that must be positive (log argument, D2 term, ...) was not.
/// Carries the observation index when raised from a likelihood sum.
class NumericalDomainError : public std::runtime_error {
 public:
  explicit NumericalDomainError(const std::string& what, std::ptrdiff_t index = -1)
      : std::runtime_error(index < 0 ? what : what + " (observation " + std::to_string(index) + ")"),
        index_(index) {}

  std::ptrdiff_t index() const noexcept { return index_; }

 private:
  std::ptrdiff_t index_;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankDeficiencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularInformationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Line numbers are 1-based; 0 means unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : what + " (line " + std::to_string(line) + ")"),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rcg
