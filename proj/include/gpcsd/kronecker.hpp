#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <vector>

#include "gpcsd/errors.hpp"
#include "gpcsd/kernels.hpp"

namespace gpcsd {

// Kronecker-structured inference engine.
//
// The observed-LFP covariance is Sigma = Ks (x) Kt + noise * I with
// Ks = A K A^T (M x M) and Kt = Kt_fast + Kt_slow (T x T). With
// eigendecompositions Ks = Qs Ls Qs^T and Kt = Qt Lt Qt^T,
//   Sigma^{-1} = (Qs (x) Qt) diag(1 / (Ls (x) Lt + noise)) (Qs (x) Qt)^T,
// so one likelihood evaluation costs O(M^3 + T^3 + MT) and never forms an
// MT x MT matrix. Vectorization is space-major, time-minor throughout:
// for a data matrix Phi (M x T), (B (x) C) vec(Phi) = vec(B Phi C^T).
struct KroneckerModel {
  Eigen::MatrixXd Qs, Qt;
  Eigen::VectorXd lambda_s, lambda_t;  // clipped from below at 1e-12 * max
  double noise_var = 0.0;
  Eigen::MatrixXd Dinv;  // M x T, 1 / (lambda_s_i * lambda_t_j + noise_var)
  double logdetD = 0.0;
  double jitter_s = 0.0, jitter_t = 0.0;

  int M() const { return static_cast<int>(Qs.rows()); }
  int T() const { return static_cast<int>(Qt.rows()); }

  // Builds from raw covariance blocks; adds jitter_rel * mean(diag) to each
  // block before factorization.
  static KroneckerModel build(const Eigen::MatrixXd& Ks, const Eigen::MatrixXd& Kt,
                              double noise_var, double jitter_rel = 1e-8) {
    KroneckerModel m;
    m.noise_var = noise_var;
    m.jitter_s = jitter_rel * Ks.diagonal().mean();
    m.jitter_t = jitter_rel * Kt.diagonal().mean();
    m.decompose(Ks, m.jitter_s, m.Qs, m.lambda_s);
    m.decompose(Kt, m.jitter_t, m.Qt, m.lambda_t);
    const int M = m.M(), T = m.T();
    m.Dinv.resize(M, T);
    m.logdetD = 0.0;
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < T; ++j) {
        const double d = m.lambda_s[i] * m.lambda_t[j] + noise_var;
        if (!(d > 0.0)) throw numerical_error("kronecker: nonpositive diagonal entry");
        m.Dinv(i, j) = 1.0 / d;
        m.logdetD += std::log(d);
      }
    return m;
  }

  // Qs^T Phi Qt: coordinates of vec(Phi) in the joint eigenbasis.
  Eigen::MatrixXd whiten(const Eigen::MatrixXd& phi) const {
    return Qs.transpose() * phi * Qt;
  }

  // Sigma^{-1} vec(Phi), returned in matrix form.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& phi) const {
    return Qs * (whiten(phi).cwiseProduct(Dinv)) * Qt.transpose();
  }

  // vec(Phi)^T Sigma^{-1} vec(Phi).
  double quad_form(const Eigen::MatrixXd& phi) const {
    const Eigen::MatrixXd w = whiten(phi);
    return (w.array().square() * Dinv.array()).sum();
  }

 private:
  static void decompose(const Eigen::MatrixXd& K, double jitter, Eigen::MatrixXd& Q,
                        Eigen::VectorXd& lambda) {
    Eigen::MatrixXd Kj = 0.5 * (K + K.transpose());
    Kj.diagonal().array() += jitter;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Kj);
    if (eig.info() != Eigen::Success)
      throw numerical_error("kronecker: eigendecomposition failed");
    lambda = eig.eigenvalues();
    Q = eig.eigenvectors();
    const double lmax = lambda.maxCoeff();
    const double raw_min = lambda.minCoeff() - jitter;
    const double raw_max = lmax - jitter;
    if (raw_min < -1e-8 * std::max(raw_max, 0.0))
      throw numerical_error(
          "kronecker: covariance has a negative eigenvalue beyond tolerance; "
          "increase jitter");
    lambda = lambda.cwiseMax(lmax * 1e-12);
  }
};

// Geometry shared by likelihood, fitting and prediction: observation
// locations and times plus the quadrature realization of the forward model.
struct GpcsdGeometry {
  ElectrodeArray electrodes;
  Eigen::VectorXd times;  // ms
  QuadratureGrid grid;
  ForwardParams base_params;  // carries tau and bounds; R is taken from theta

  void validate() const {
    electrodes.validate();
    grid.validate();
    if (times.size() < 2) throw validation_error("geometry: need at least 2 time points");
  }
};

inline KroneckerModel build_model(const Hyperparameters& theta, const GpcsdGeometry& geom,
                                  const CovMatrices& cov) {
  (void)geom;
  return KroneckerModel::build(cov.Ks_lfp, cov.Kt_sum, theta.noise_var);
}

namespace detail {

inline void check_trials(const std::vector<Eigen::MatrixXd>& trials, int M, int T) {
  if (trials.empty()) throw validation_error("no trials supplied");
  for (const auto& phi : trials) {
    if (phi.rows() != M || phi.cols() != T)
      throw validation_error("trial shape does not match electrodes x times");
    if (phi.hasNaN()) throw validation_error("NaN in LFP data");
  }
}

}  // namespace detail

// Log marginal likelihood of the trials under the model, including the
// Gaussian normalizing constant.
inline double log_marginal_likelihood(const KroneckerModel& km,
                                      const std::vector<Eigen::MatrixXd>& trials) {
  detail::check_trials(trials, km.M(), km.T());
  const double n = static_cast<double>(trials.size());
  double quad = 0.0;
  for (const auto& phi : trials) quad += km.quad_form(phi);
  const double log2pi = 1.8378770664093454835606594728112;
  return -0.5 * n * km.M() * km.T() * log2pi - 0.5 * n * km.logdetD - 0.5 * quad;
}

inline double log_marginal_likelihood(const Hyperparameters& theta, const GpcsdGeometry& geom,
                                      const std::vector<Eigen::MatrixXd>& trials) {
  const CovMatrices cov = build_cov(theta, geom.electrodes, geom.times, geom.grid,
                                    geom.base_params);
  return log_marginal_likelihood(build_model(theta, geom, cov), trials);
}

// Log marginal likelihood together with its gradient in theta
// (order given by Hyperparameters::to_vector). Uses
//   d logL = -(N/2) tr(Sigma^{-1} dSigma) + (1/2) sum_r a_r^T dSigma a_r,
// with dSigma in Kronecker factor form, so no eigenvector derivatives are
// needed. The jitter terms are differentiated as well since they scale with
// the kernel diagonals.
struct LikelihoodEval {
  double loglik = 0.0;
  Eigen::VectorXd grad;
};

inline LikelihoodEval log_marginal_likelihood_grad(const Hyperparameters& theta,
                                                   const GpcsdGeometry& geom,
                                                   const std::vector<Eigen::MatrixXd>& trials) {
  const int D = theta.spatial_dim();
  const int np = theta.n_params();
  const double jitter_rel = 1e-8;

  ForwardParams params = geom.base_params;
  params.R = theta.R;
  const Eigen::MatrixXd A = operator_matrix(geom.grid, geom.electrodes, params);
  const Eigen::MatrixXd K = se_matrix(geom.grid.nodes, geom.grid.nodes, theta.ell_s);
  const Eigen::MatrixXd AK = A * K;
  Eigen::MatrixXd Ks = AK * A.transpose();
  Ks = 0.5 * (Ks + Ks.transpose()).eval();

  const Eigen::VectorXd& t = geom.times;
  const Eigen::MatrixXd Ktf =
      theta.var_fast > 0.0 ? temporal_exp_matrix(t, t, theta.var_fast, theta.ell_t_fast)
                           : Eigen::MatrixXd::Zero(t.size(), t.size());
  const Eigen::MatrixXd Kts = temporal_se_matrix(t, t, theta.var_slow, theta.ell_t_slow);
  const Eigen::MatrixXd Kt = Ktf + Kts;

  const KroneckerModel km = KroneckerModel::build(Ks, Kt, theta.noise_var, jitter_rel);
  const int M = km.M(), T = km.T();
  detail::check_trials(trials, M, T);
  const double N = static_cast<double>(trials.size());

  // Jittered model matrices, as factorized.
  Eigen::MatrixXd Ks_j = Ks;
  Ks_j.diagonal().array() += km.jitter_s;
  Eigen::MatrixXd Kt_j = Kt;
  Kt_j.diagonal().array() += km.jitter_t;

  double quad_sum = 0.0;
  Eigen::MatrixXd Gs = Eigen::MatrixXd::Zero(M, M);  // sum_r a_r Kt a_r^T
  Eigen::MatrixXd Gt = Eigen::MatrixXd::Zero(T, T);  // sum_r a_r^T Ks a_r
  double Saa = 0.0;                                  // sum_r |a_r|^2
  for (const auto& phi : trials) {
    const Eigen::MatrixXd w = km.whiten(phi);
    quad_sum += (w.array().square() * km.Dinv.array()).sum();
    const Eigen::MatrixXd alpha = km.Qs * (w.cwiseProduct(km.Dinv)) * km.Qt.transpose();
    Gs += alpha * Kt_j * alpha.transpose();
    Gt += alpha.transpose() * Ks_j * alpha;
    Saa += alpha.squaredNorm();
  }

  LikelihoodEval out;
  const double log2pi = 1.8378770664093454835606594728112;
  out.loglik = -0.5 * N * M * T * log2pi - 0.5 * N * km.logdetD - 0.5 * quad_sum;
  out.grad.setZero(np);

  const Eigen::VectorXd dinv_lt = km.Dinv * km.lambda_t;       // M
  const Eigen::VectorXd ls_dinv = km.Dinv.transpose() * km.lambda_s;  // T

  auto spatial_grad = [&](const Eigen::MatrixXd& dKs) {
    const double djit = jitter_rel * dKs.trace() / M;
    const Eigen::MatrixXd B = dKs * km.Qs;
    Eigen::VectorXd ds(M);
    for (int i = 0; i < M; ++i) ds[i] = km.Qs.col(i).dot(B.col(i)) + djit;
    const double tr = ds.dot(dinv_lt);
    const double quad = (dKs.array() * Gs.array()).sum() + djit * Gs.trace();
    return -0.5 * N * tr + 0.5 * quad;
  };
  auto temporal_grad = [&](const Eigen::MatrixXd& dKt) {
    const double djit = jitter_rel * dKt.trace() / T;
    const Eigen::MatrixXd B = dKt * km.Qt;
    Eigen::VectorXd dt(T);
    for (int j = 0; j < T; ++j) dt[j] = km.Qt.col(j).dot(B.col(j)) + djit;
    const double tr = dt.dot(ls_dinv);
    const double quad = (dKt.array() * Gt.array()).sum() + djit * Gt.trace();
    return -0.5 * N * tr + 0.5 * quad;
  };

  // dKs/dR: entries of A differentiate to -(w/2) R / sqrt(r^2 + R^2) in 1D
  // and -(w/4pi) / sqrt((R+tau)^2 + r^2) in 2D.
  {
    const int n = geom.grid.size();
    Eigen::MatrixXd dA(M, n);
    if (geom.grid.dim() == 1) {
      for (int i = 0; i < M; ++i)
        for (int j = 0; j < n; ++j) {
          const double r = geom.electrodes.coords(i, 0) - geom.grid.nodes(j, 0);
          dA(i, j) = -0.5 * geom.grid.weights[j] * theta.R / std::sqrt(r * r + theta.R * theta.R);
        }
    } else {
      const double Rt = theta.R + params.tau;
      for (int i = 0; i < M; ++i)
        for (int j = 0; j < n; ++j) {
          const double ry = geom.electrodes.coords(i, 0) - geom.grid.nodes(j, 0);
          const double rz = geom.electrodes.coords(i, 1) - geom.grid.nodes(j, 1);
          dA(i, j) = -kPrefactor2d * geom.grid.weights[j] / std::sqrt(Rt * Rt + ry * ry + rz * rz);
        }
    }
    const Eigen::MatrixXd S = dA * K * A.transpose();
    out.grad[0] = spatial_grad(S + S.transpose());
  }

  for (int d = 0; d < D; ++d) {
    const double ell = theta.ell_s[d];
    const Eigen::MatrixXd dK =
        K.cwiseProduct(detail::sqdiff_matrix(geom.grid.nodes, geom.grid.nodes, d)) /
        (ell * ell * ell);
    const Eigen::MatrixXd dKs = A * dK * A.transpose();
    out.grad[1 + d] = spatial_grad(0.5 * (dKs + dKs.transpose()));
  }

  const int o = 1 + D;
  if (theta.var_fast > 0.0) {
    Eigen::MatrixXd absdt(T, T);
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < T; ++j) absdt(i, j) = std::abs(t[i] - t[j]);
    out.grad[o] = temporal_grad(
        Ktf.cwiseProduct(absdt) / (theta.ell_t_fast * theta.ell_t_fast));  // d/d ell_t_fast
    out.grad[o + 2] = temporal_grad(Ktf / theta.var_fast);                 // d/d var_fast
  }
  {
    const Eigen::MatrixXd sq = detail::sqdiff_matrix(t, t, 0);
    const double l3 = theta.ell_t_slow * theta.ell_t_slow * theta.ell_t_slow;
    out.grad[o + 1] = temporal_grad(Kts.cwiseProduct(sq) / l3);  // d/d ell_t_slow
    out.grad[o + 3] = temporal_grad(Kts / theta.var_slow);       // d/d var_slow
  }
  out.grad[o + 4] = -0.5 * N * km.Dinv.sum() + 0.5 * Saa;  // d/d noise_var

  return out;
}

// Conditional-mean CSD prediction with the slow/fast split. The total field
// is formed as mean + slow + fast so the decomposition identity is exact.
struct CsdPrediction {
  Eigen::MatrixXd grid;   // P x dim
  Eigen::VectorXd times;  // T'
  std::vector<Eigen::MatrixXd> total, slow, fast;  // per trial, P x T'
  Eigen::MatrixXd mean;   // P x T'
};

inline CsdPrediction predict(const Hyperparameters& theta, const GpcsdGeometry& geom,
                             const std::vector<Eigen::MatrixXd>& trials,
                             const Eigen::MatrixXd& pred_grid, const Eigen::VectorXd& pred_times,
                             const Eigen::MatrixXd& mean_pred = Eigen::MatrixXd(),
                             const Eigen::MatrixXd& mean_elec = Eigen::MatrixXd()) {
  for (size_t d = 0; d < geom.grid.bounds.size(); ++d) {
    const auto& [a, b] = geom.grid.bounds[d];
    if ((pred_grid.col(d).array() < a).any() || (pred_grid.col(d).array() > b).any()) {
      std::cerr << "warning: prediction grid extends outside integration bounds "
                   "(extrapolating)\n";
      break;
    }
  }
  const CovMatrices cov =
      build_cov(theta, geom.electrodes, geom.times, geom.grid, geom.base_params, pred_grid);
  const KroneckerModel km = build_model(theta, geom, cov);
  detail::check_trials(trials, km.M(), km.T());

  const Eigen::MatrixXd Ktc_slow =
      temporal_se_matrix(pred_times, geom.times, theta.var_slow, theta.ell_t_slow);
  const Eigen::MatrixXd Ktc_fast =
      theta.var_fast > 0.0
          ? temporal_exp_matrix(pred_times, geom.times, theta.var_fast, theta.ell_t_fast)
          : Eigen::MatrixXd::Zero(pred_times.size(), geom.times.size());

  const int P = static_cast<int>(pred_grid.rows());
  const int Tp = static_cast<int>(pred_times.size());
  CsdPrediction out;
  out.grid = pred_grid;
  out.times = pred_times;
  out.mean = mean_pred.size() ? mean_pred : Eigen::MatrixXd::Zero(P, Tp);

  for (const auto& phi : trials) {
    const Eigen::MatrixXd resid = mean_elec.size() ? (phi - mean_elec).eval() : phi;
    const Eigen::MatrixXd alpha = km.solve(resid);
    Eigen::MatrixXd cross_alpha = cov.Ks_cross * alpha;  // P x T, shared by both components
    Eigen::MatrixXd s = cross_alpha * Ktc_slow.transpose();
    Eigen::MatrixXd f = cross_alpha * Ktc_fast.transpose();
    out.total.push_back(out.mean + s + f);
    out.slow.push_back(std::move(s));
    out.fast.push_back(std::move(f));
  }
  return out;
}

// Posterior mean of the noiseless LFP at the electrodes.
inline std::vector<Eigen::MatrixXd> predict_lfp(const Hyperparameters& theta,
                                                const GpcsdGeometry& geom,
                                                const std::vector<Eigen::MatrixXd>& trials,
                                                const Eigen::MatrixXd& mean_elec =
                                                    Eigen::MatrixXd()) {
  const CovMatrices cov =
      build_cov(theta, geom.electrodes, geom.times, geom.grid, geom.base_params);
  const KroneckerModel km = build_model(theta, geom, cov);
  detail::check_trials(trials, km.M(), km.T());
  std::vector<Eigen::MatrixXd> out;
  for (const auto& phi : trials) {
    const Eigen::MatrixXd resid = mean_elec.size() ? (phi - mean_elec).eval() : phi;
    const Eigen::MatrixXd alpha = km.solve(resid);
    Eigen::MatrixXd p = cov.Ks_lfp * alpha * cov.Kt_sum.transpose();
    if (mean_elec.size()) p += mean_elec;
    out.push_back(std::move(p));
  }
  return out;
}

// Mean-function objective: vec(mu)^T Sigma^{-1} vec(ybar)
//   - (1/2) vec(mu)^T Sigma^{-1} vec(mu), with ybar the trial mean.
inline double mean_loglik(const Eigen::MatrixXd& mu, const KroneckerModel& km,
                          const std::vector<Eigen::MatrixXd>& trials) {
  detail::check_trials(trials, km.M(), km.T());
  if (mu.rows() != km.M() || mu.cols() != km.T())
    throw validation_error("mean_loglik: mean shape mismatch");
  Eigen::MatrixXd ybar = Eigen::MatrixXd::Zero(km.M(), km.T());
  for (const auto& phi : trials) ybar += phi;
  ybar /= static_cast<double>(trials.size());
  return (mu.array() * km.solve(ybar).array()).sum() -
         0.5 * (mu.array() * km.solve(mu).array()).sum();
}

inline double mean_loglik(const Eigen::MatrixXd& mu, const Hyperparameters& theta,
                          const GpcsdGeometry& geom,
                          const std::vector<Eigen::MatrixXd>& trials) {
  const CovMatrices cov =
      build_cov(theta, geom.electrodes, geom.times, geom.grid, geom.base_params);
  return mean_loglik(mu, build_model(theta, geom, cov), trials);
}

}  // namespace gpcsd
