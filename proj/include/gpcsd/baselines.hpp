#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <vector>

#include "gpcsd/electrodes.hpp"
#include "gpcsd/errors.hpp"
#include "gpcsd/forward.hpp"

namespace gpcsd {

// Traditional CSD: negative second spatial difference over a uniform 1D
// grid, defined at the interior electrodes only.
inline Eigen::MatrixXd tcsd(const Eigen::MatrixXd& lfp, double pitch) {
  const int M = static_cast<int>(lfp.rows());
  if (M < 3) throw validation_error("tcsd: need at least 3 channels");
  if (!(pitch > 0.0)) throw validation_error("tcsd: pitch must be positive");
  Eigen::MatrixXd csd(M - 2, lfp.cols());
  const double inv_h2 = 1.0 / (pitch * pitch);
  for (int i = 1; i + 1 < M; ++i)
    csd.row(i - 1) = -(lfp.row(i - 1) - 2.0 * lfp.row(i) + lfp.row(i + 1)) * inv_h2;
  return csd;
}

inline Eigen::MatrixXd tcsd(const Eigen::MatrixXd& lfp, const ElectrodeArray& electrodes) {
  const auto pitch = electrodes.uniform_pitch();
  if (!pitch) throw validation_error("tcsd: electrode spacing is not uniform");
  if (lfp.rows() != electrodes.count())
    throw validation_error("tcsd: channel count mismatch");
  return tcsd(lfp, *pitch);
}

// 1D kernel CSD: Gaussian source bases forward-projected through the
// cylinder model, ridge-regularized, with basis width and lambda chosen by
// leave-one-electrode-out cross-validation over a grid. Trials are
// concatenated for CV; at most max_cv_trials are used.
struct KcsdConfig {
  int basis_count = 1000;
  std::vector<double> widths;   // microns
  std::vector<double> lambdas;  // ridge weights, applied to the normalized kernel
  double R = 100.0;             // forward radius, supplied not estimated
  double span_margin = 0.0;     // basis/integration extension beyond the electrodes
  int max_cv_trials = 5;
  int quad_points = 1024;

  static std::vector<double> default_widths() {
    std::vector<double> w(15);
    for (int i = 0; i < 15; ++i) w[i] = 100.0 + (800.0 - 100.0) * i / 14.0;
    return w;
  }
  static std::vector<double> default_lambdas() {
    std::vector<double> l(25);
    for (int i = 0; i < 25; ++i) l[i] = std::pow(10.0, -15.0 + 15.0 * i / 24.0);
    return l;
  }

  static KcsdConfig defaults(double R) {
    KcsdConfig c;
    c.R = R;
    c.widths = default_widths();
    c.lambdas = default_lambdas();
    return c;
  }

  void validate() const {
    if (basis_count < 2 || widths.empty() || lambdas.empty())
      throw validation_error("kcsd: empty configuration grids");
    for (double w : widths)
      if (!(w > 0.0)) throw validation_error("kcsd: widths must be positive");
    for (double l : lambdas)
      if (l < 0.0) throw validation_error("kcsd: lambdas must be nonnegative");
    if (!std::is_sorted(widths.begin(), widths.end()) ||
        !std::is_sorted(lambdas.begin(), lambdas.end()))
      throw validation_error("kcsd: grids must be sorted ascending");
    if (!(R > 0.0)) throw validation_error("kcsd: R must be positive");
  }
};

struct KcsdResult {
  std::vector<Eigen::MatrixXd> csd;  // per trial, pred locations x time
  double width = 0.0, lambda = 0.0;
  Eigen::MatrixXd cv_error;  // widths x lambdas
  bool boundary_selection = false;
  std::vector<Eigen::MatrixXd> fitted_lfp;  // per trial, electrodes x time
};

namespace detail {

struct KcsdOperators {
  Eigen::MatrixXd K;   // M x M, normalized F F^T
  Eigen::MatrixXd Kc;  // P x M, normalized G F^T
};

inline KcsdOperators kcsd_operators(const Eigen::VectorXd& elec_z, const Eigen::VectorXd& pred_z,
                                    const KcsdConfig& cfg, double width) {
  const double lo = elec_z.minCoeff() - cfg.span_margin;
  const double hi = elec_z.maxCoeff() + cfg.span_margin;
  const QuadratureGrid grid = QuadratureGrid::trapezoid({{lo, hi}}, cfg.quad_points);
  ForwardParams params;
  params.R = cfg.R;
  params.bounds = {{lo, hi}};
  const Eigen::MatrixXd A = operator_matrix(grid, Eigen::MatrixXd(elec_z), params);

  const Eigen::VectorXd centers = Eigen::VectorXd::LinSpaced(cfg.basis_count, lo, hi);
  auto basis_at = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd B(x.size(), cfg.basis_count);
    for (int i = 0; i < x.size(); ++i)
      for (int j = 0; j < cfg.basis_count; ++j) {
        const double r = (x[i] - centers[j]) / width;
        B(i, j) = std::exp(-0.5 * r * r);
      }
    return B;
  };

  const Eigen::MatrixXd F = A * basis_at(grid.nodes.col(0));  // M x n_bases
  const Eigen::MatrixXd G = basis_at(pred_z);                 // P x n_bases

  KcsdOperators ops;
  ops.K = F * F.transpose();
  ops.Kc = G * F.transpose();
  // Normalize to unit mean diagonal so the pinned lambda grid has a
  // scale-free meaning.
  const double scale = ops.K.diagonal().mean();
  if (!(scale > 0.0)) throw numerical_error("kcsd: degenerate kernel");
  ops.K /= scale;
  ops.Kc /= scale;
  return ops;
}

inline Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& K, double lambda,
                                   const Eigen::MatrixXd& rhs) {
  Eigen::MatrixXd Kl = K;
  Kl.diagonal().array() += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Kl);
  Eigen::MatrixXd sol;
  if (ldlt.info() == Eigen::Success) sol = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !sol.allFinite())
    throw numerical_error("kcsd: singular ridge system; increase lambda");
  return sol;
}

}  // namespace detail

inline KcsdResult kcsd_1d(const std::vector<Eigen::MatrixXd>& cv_trials,
                          const std::vector<Eigen::MatrixXd>& predict_trials,
                          const ElectrodeArray& electrodes, const KcsdConfig& cfg,
                          const Eigen::VectorXd& pred_z) {
  cfg.validate();
  electrodes.validate();
  if (electrodes.dim != 1) throw validation_error("kcsd_1d: 1D arrays only");
  if (cv_trials.empty() || predict_trials.empty())
    throw validation_error("kcsd_1d: no trials");
  const int M = electrodes.count();
  for (const auto* set : {&cv_trials, &predict_trials})
    for (const auto& t : *set)
      if (t.rows() != M) throw validation_error("kcsd_1d: trial channel mismatch");

  const Eigen::VectorXd elec_z = electrodes.coords.col(0);
  const int n_cv = std::min<int>(cfg.max_cv_trials, static_cast<int>(cv_trials.size()));
  int total_cols = 0;
  for (int r = 0; r < n_cv; ++r) total_cols += static_cast<int>(cv_trials[r].cols());
  Eigen::MatrixXd V(M, total_cols);
  for (int r = 0, c = 0; r < n_cv; ++r) {
    V.middleCols(c, cv_trials[r].cols()) = cv_trials[r];
    c += static_cast<int>(cv_trials[r].cols());
  }

  const int nw = static_cast<int>(cfg.widths.size());
  const int nl = static_cast<int>(cfg.lambdas.size());
  Eigen::MatrixXd cv_err(nw, nl);

  for (int wi = 0; wi < nw; ++wi) {
    const auto ops = detail::kcsd_operators(elec_z, elec_z, cfg, cfg.widths[wi]);
    for (int li = 0; li < nl; ++li) {
      double err = 0.0;
      for (int m = 0; m < M; ++m) {
        // Leave electrode m out.
        Eigen::MatrixXd Km(M - 1, M - 1);
        Eigen::VectorXd km(M - 1);
        Eigen::MatrixXd Vm(M - 1, total_cols);
        for (int i = 0, ii = 0; i < M; ++i) {
          if (i == m) continue;
          km[ii] = ops.K(m, i);
          Vm.row(ii) = V.row(i);
          for (int j = 0, jj = 0; j < M; ++j) {
            if (j == m) continue;
            Km(ii, jj) = ops.K(i, j);
            ++jj;
          }
          ++ii;
        }
        const Eigen::MatrixXd sol = detail::ridge_solve(Km, cfg.lambdas[li], Vm);
        const Eigen::RowVectorXd vhat = km.transpose() * sol;
        err += (vhat - V.row(m)).squaredNorm();
      }
      cv_err(wi, li) = err;
    }
  }

  // Smallest error wins; exact ties go to the larger lambda.
  int best_w = 0, best_l = 0;
  for (int wi = 0; wi < nw; ++wi)
    for (int li = 0; li < nl; ++li) {
      const double e = cv_err(wi, li);
      const double b = cv_err(best_w, best_l);
      if (e < b || (e == b && cfg.lambdas[li] > cfg.lambdas[best_l])) {
        best_w = wi;
        best_l = li;
      }
    }

  KcsdResult res;
  res.cv_error = cv_err;
  res.width = cfg.widths[best_w];
  res.lambda = cfg.lambdas[best_l];
  res.boundary_selection = (nw > 1 && (best_w == 0 || best_w == nw - 1)) ||
                           (nl > 1 && (best_l == 0 || best_l == nl - 1));
  if (res.boundary_selection)
    std::cerr << "warning: kcsd cross-validation selected a grid boundary (width="
              << res.width << ", lambda=" << res.lambda << ")\n";

  const auto ops = detail::kcsd_operators(elec_z, pred_z, cfg, res.width);
  for (const auto& trial : predict_trials) {
    const Eigen::MatrixXd sol = detail::ridge_solve(ops.K, res.lambda, trial);
    res.csd.push_back(ops.Kc * sol);
    res.fitted_lfp.push_back(ops.K * sol);
  }
  return res;
}

inline KcsdResult kcsd_1d(const std::vector<Eigen::MatrixXd>& trials,
                          const ElectrodeArray& electrodes, const KcsdConfig& cfg,
                          const Eigen::VectorXd& pred_z) {
  return kcsd_1d(trials, trials, electrodes, cfg, pred_z);
}

}  // namespace gpcsd
