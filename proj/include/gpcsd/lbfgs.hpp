#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

namespace gpcsd {

// Limited-memory BFGS minimizer with a strong-Wolfe line search
// (Nocedal & Wright, algorithms 3.5/3.6). The objective callback returns
// f(x) and fills the gradient.
struct LbfgsOptions {
  int max_iters = 500;
  double grad_tol = 1e-5;     // sup-norm of the gradient
  double rel_obj_tol = 1e-9;  // relative objective change
  int memory = 10;
  double c1 = 1e-4, c2 = 0.9;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

using ObjFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct WolfeResult {
  double alpha = 0.0, f = 0.0;
  Eigen::VectorXd x, g;
  bool ok = false;
};

inline WolfeResult wolfe_line_search(const ObjFn& fn, const Eigen::VectorXd& x0, double f0,
                                     const Eigen::VectorXd& g0, const Eigen::VectorXd& dir,
                                     double c1, double c2, double alpha_init) {
  WolfeResult res;
  const double d0 = g0.dot(dir);
  if (!(d0 < 0.0)) return res;  // not a descent direction

  auto eval = [&](double a, double& f, Eigen::VectorXd& x, Eigen::VectorXd& g) {
    x = x0 + a * dir;
    f = fn(x, g);
    return g.dot(dir);
  };

  auto zoom = [&](double alo, double flo, double dlo, double ahi, double fhi) {
    double f_a;
    Eigen::VectorXd x_a, g_a;
    for (int it = 0; it < 40; ++it) {
      // Quadratic interpolation, guarded toward the interval center.
      double a = alo - 0.5 * dlo * (ahi - alo) * (ahi - alo) /
                           (fhi - flo - dlo * (ahi - alo));
      const double lo = std::min(alo, ahi), hi = std::max(alo, ahi);
      if (!std::isfinite(a) || a <= lo + 0.1 * (hi - lo) || a >= hi - 0.1 * (hi - lo))
        a = 0.5 * (alo + ahi);
      const double d_a = eval(a, f_a, x_a, g_a);
      if (!std::isfinite(f_a) || f_a > f0 + c1 * a * d0 || f_a >= flo) {
        ahi = a;
        fhi = f_a;
      } else {
        if (std::abs(d_a) <= -c2 * d0) {
          res = {a, f_a, x_a, g_a, true};
          return;
        }
        if (d_a * (ahi - alo) >= 0.0) {
          ahi = alo;
          fhi = flo;
        }
        alo = a;
        flo = f_a;
        dlo = d_a;
      }
      if (std::abs(ahi - alo) < 1e-16 * std::max(1.0, std::abs(alo))) break;
    }
    // Fall back to the best sufficient-decrease point found.
    if (alo > 0.0 && std::isfinite(flo) && flo < f0) {
      eval(alo, f_a, x_a, g_a);
      res = {alo, f_a, x_a, g_a, true};
    }
  };

  double a_prev = 0.0, f_prev = f0, d_prev = d0;
  double a = alpha_init;
  double f_a;
  Eigen::VectorXd x_a, g_a;
  for (int it = 0; it < 30; ++it) {
    const double d_a = eval(a, f_a, x_a, g_a);
    if (!std::isfinite(f_a) || f_a > f0 + c1 * a * d0 || (it > 0 && f_a >= f_prev)) {
      zoom(a_prev, f_prev, d_prev, a, f_a);
      return res;
    }
    if (std::abs(d_a) <= -c2 * d0) {
      res = {a, f_a, x_a, g_a, true};
      return res;
    }
    if (d_a >= 0.0) {
      zoom(a, f_a, d_a, a_prev, f_prev);
      return res;
    }
    a_prev = a;
    f_prev = f_a;
    d_prev = d_a;
    a *= 2.5;
  }
  return res;
}

}  // namespace detail

inline LbfgsResult lbfgs_minimize(const detail::ObjFn& fn, const Eigen::VectorXd& x0,
                                  const LbfgsOptions& opts = {}) {
  const int n = static_cast<int>(x0.size());
  LbfgsResult res;
  res.x = x0;
  res.grad.resize(n);
  res.f = fn(res.x, res.grad);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    res.iterations = iter;
    if (res.grad.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      return res;
    }

    // Two-loop recursion.
    Eigen::VectorXd q = res.grad;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd dir = -q;

    double alpha_init = 1.0;
    if (s_hist.empty()) {
      const double gnorm = res.grad.norm();
      alpha_init = std::min(1.0, 1.0 / std::max(gnorm, 1e-12));
    }
    auto ls = detail::wolfe_line_search(fn, res.x, res.f, res.grad, dir, opts.c1, opts.c2,
                                        alpha_init);
    if (!ls.ok) {
      // Retry with steepest descent before giving up.
      dir = -res.grad;
      ls = detail::wolfe_line_search(fn, res.x, res.f, res.grad, dir, opts.c1, opts.c2,
                                     alpha_init);
      if (!ls.ok) return res;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    const Eigen::VectorXd s = ls.x - res.x;
    const Eigen::VectorXd y = ls.g - res.grad;
    const double f_old = res.f;
    res.x = ls.x;
    res.f = ls.f;
    res.grad = ls.g;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    if (std::abs(f_old - res.f) <= opts.rel_obj_tol * (std::abs(res.f) + 1e-12)) {
      res.iterations = iter + 1;
      res.converged = true;
      return res;
    }
  }
  res.iterations = opts.max_iters;
  return res;
}

}  // namespace gpcsd
