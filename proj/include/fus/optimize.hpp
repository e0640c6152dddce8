#ifndef FUS_OPTIMIZE_HPP
#define FUS_OPTIMIZE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>

namespace fus {

struct MinimizeOptions {
  int max_iter = 500;
  double grad_tol = 1e-8;
  double f_tol = 1e-12;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Dense BFGS with Armijo backtracking. The objective may return +inf for
/// infeasible points; the line search backs off until the step is feasible.
inline MinimizeResult bfgs_minimize(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
    const Eigen::VectorXd& x0, const MinimizeOptions& opts = {}) {
  const auto n = x0.size();
  const double inf = std::numeric_limits<double>::infinity();

  MinimizeResult res;
  res.x = x0;
  res.f = f(x0);
  if (!std::isfinite(res.f)) return res;

  Eigen::VectorXd g = grad(res.x);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);

  for (int it = 0; it < opts.max_iter; ++it) {
    res.iterations = it + 1;
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      return res;
    }

    Eigen::VectorXd dir = -(H * g);
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {  // not a descent direction, reset
      H.setIdentity();
      dir = -g;
      slope = g.dot(dir);
    }

    // backtracking line search
    double alpha = 1.0;
    double f_new = inf;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = res.x + alpha * dir;
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.converged = g.lpNorm<Eigen::Infinity>() < 1e-4;
      return res;
    }

    Eigen::VectorXd g_new = grad(x_new);
    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd y = g_new - g;
    double sy = s.dot(y);
    if (sy > 1e-12) {
      Eigen::VectorXd Hy = H * y;
      double yHy = y.dot(Hy);
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose());
      H -= (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }

    double f_prev = res.f;
    res.x = x_new;
    res.f = f_new;
    g = g_new;

    if (std::abs(f_prev - f_new) < opts.f_tol * (1.0 + std::abs(f_new))) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

}  // namespace fus

#endif  // FUS_OPTIMIZE_HPP
