#pragma once

// Small derivative-free and quasi-Newton minimizers used by the fitters.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rcg::optim {

struct ScalarMinimum {
  double x;
  double f;
};

/// Golden-section search for a minimum of f on [lo, hi]. Non-finite values of
/// f are treated as +inf.
template <class F>
ScalarMinimum golden_section_minimize(F&& f, double lo, double hi, double tol = 1e-7) {
  constexpr double kInvPhi = 0.6180339887498949;
  auto eval = [&](double x) {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = eval(c);
  double fd = eval(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = eval(d);
    }
  }
  return fc <= fd ? ScalarMinimum{c, fc} : ScalarMinimum{d, fd};
}

struct BfgsOptions {
  int max_iter = 1000;
  /// Convergence when the projected gradient's infinity norm drops below this.
  double grad_tol = 1e-6;
  /// Optional box constraints; empty means unbounded.
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  /// Largest allowed step in any coordinate.
  double max_step = 5.0;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;
  int iterations = 0;
  bool converged = false;
  std::string message;
  std::vector<double> trace;
};

/// BFGS on the inverse Hessian with Armijo backtracking and simple bound
/// projection. `objective(x, grad)` returns f(x) and fills grad; it may return
/// +inf (grad then ignored) outside the region where f is defined.
template <class Objective>
BfgsResult bfgs_minimize(Objective&& objective, Eigen::VectorXd x0, const BfgsOptions& opt = {}) {
  const Eigen::Index dim = x0.size();
  const bool bounded = opt.lower.size() == dim && opt.upper.size() == dim;
  auto project = [&](Eigen::VectorXd& v) {
    if (bounded) v = v.cwiseMax(opt.lower).cwiseMin(opt.upper);
  };
  // Zero gradient components that push against an active bound.
  auto projected = [&](const Eigen::VectorXd& x, Eigen::VectorXd g) {
    if (!bounded) return g;
    for (Eigen::Index i = 0; i < dim; ++i) {
      if ((x[i] <= opt.lower[i] && g[i] > 0.0) || (x[i] >= opt.upper[i] && g[i] < 0.0)) g[i] = 0.0;
    }
    return g;
  };

  BfgsResult res;
  project(x0);
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd g(dim);
  double f = objective(x, g);
  if (!std::isfinite(f)) {
    res.x = x;
    res.message = "objective not finite at start";
    return res;
  }
  res.trace.push_back(f);
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(dim, dim);
  bool h_is_identity = true;
  Eigen::VectorXd g_new(dim);

  int iter = 0;
  for (; iter < opt.max_iter; ++iter) {
    const Eigen::VectorXd pg = projected(x, g);
    if (pg.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = -(h * pg);
    for (Eigen::Index i = 0; i < dim; ++i)
      if (pg[i] == 0.0) dir[i] = 0.0;
    if (dir.dot(pg) >= 0.0) {
      h.setIdentity();
      h_is_identity = true;
      dir = -pg;
    }
    const double longest = dir.lpNorm<Eigen::Infinity>();
    if (longest > opt.max_step) dir *= opt.max_step / longest;

    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
      x_new = x + step * dir;
      project(x_new);
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!h_is_identity) {
        h.setIdentity();
        h_is_identity = true;
        continue;
      }
      // No descent possible along the gradient: we are at numerical precision.
      res.converged = pg.lpNorm<Eigen::Infinity>() < 10.0 * opt.grad_tol;
      res.message = "line search failed";
      break;
    }
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    x = x_new;
    g = g_new;
    const bool stalled = std::abs(f - f_new) <= 1e-15 * std::max(1.0, std::abs(f)) && s.lpNorm<Eigen::Infinity>() < 1e-14;
    f = f_new;
    res.trace.push_back(f);
    if (stalled) {
      const Eigen::VectorXd pg_now = projected(x, g);
      res.converged = pg_now.lpNorm<Eigen::Infinity>() < 10.0 * opt.grad_tol;
      res.message = "stalled";
      ++iter;
      break;
    }
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (h_is_identity) h *= sy / y.squaredNorm();
      const double r = 1.0 / sy;
      const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(dim, dim) - r * s * y.transpose();
      h = left * h * left.transpose() + r * s * s.transpose();
      h_is_identity = false;
    }
  }
  if (iter >= opt.max_iter && res.message.empty()) res.message = "iteration limit reached";
  res.x = x;
  res.f = f;
  res.grad = g;
  res.iterations = iter;
  return res;
}

}  // namespace rcg::optim
