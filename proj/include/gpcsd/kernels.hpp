#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "gpcsd/electrodes.hpp"
#include "gpcsd/errors.hpp"
#include "gpcsd/forward.hpp"
#include "gpcsd/quadrature.hpp"

namespace gpcsd {

// Model hyperparameters theta = [R, {ell_s,d}, ell_t_fast, ell_t_slow,
// sigma1^2, sigma2^2, sigma^2]. Spatial lengthscales in microns, temporal
// in milliseconds. var_fast == 0 denotes a model without the fast
// (exponential) component, used by the single-SE fit variant.
struct Hyperparameters {
  double R = 100.0;
  Eigen::VectorXd ell_s;  // length D
  double ell_t_fast = 1.0;
  double ell_t_slow = 10.0;
  double var_fast = 1.0;   // sigma_1^2, exponential component
  double var_slow = 1.0;   // sigma_2^2, SE component
  double noise_var = 1e-4; // sigma^2

  int spatial_dim() const { return static_cast<int>(ell_s.size()); }
  int n_params() const { return spatial_dim() + 6; }

  // Order: R, ell_s..., ell_t_fast, ell_t_slow, var_fast, var_slow, noise_var.
  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd v(n_params());
    v[0] = R;
    for (int d = 0; d < spatial_dim(); ++d) v[1 + d] = ell_s[d];
    const int o = 1 + spatial_dim();
    v[o] = ell_t_fast;
    v[o + 1] = ell_t_slow;
    v[o + 2] = var_fast;
    v[o + 3] = var_slow;
    v[o + 4] = noise_var;
    return v;
  }

  static Hyperparameters from_vector(const Eigen::VectorXd& v, int spatial_dim) {
    Hyperparameters h;
    h.R = v[0];
    h.ell_s = v.segment(1, spatial_dim);
    const int o = 1 + spatial_dim;
    h.ell_t_fast = v[o];
    h.ell_t_slow = v[o + 1];
    h.var_fast = v[o + 2];
    h.var_slow = v[o + 3];
    h.noise_var = v[o + 4];
    return h;
  }

  static std::vector<std::string> param_names(int spatial_dim) {
    std::vector<std::string> names{"R"};
    for (int d = 0; d < spatial_dim; ++d)
      names.push_back(spatial_dim == 1 ? "ell_s" : "ell_s_" + std::to_string(d));
    names.insert(names.end(), {"ell_t_fast", "ell_t_slow", "var_fast", "var_slow", "noise_var"});
    return names;
  }

  // enforce_order applies the fast <= slow initialization convention.
  void validate(bool enforce_order = true) const {
    if (!(R > 0.0)) throw validation_error("theta: R must be positive");
    if (spatial_dim() < 1 || spatial_dim() > 2)
      throw validation_error("theta: spatial dim must be 1 or 2");
    if ((ell_s.array() <= 0.0).any())
      throw validation_error("theta: spatial lengthscales must be positive");
    if (!(ell_t_fast > 0.0) || !(ell_t_slow > 0.0))
      throw validation_error("theta: temporal lengthscales must be positive");
    if (var_fast < 0.0 || !(var_slow > 0.0) || !(noise_var > 0.0))
      throw validation_error("theta: variances must be positive");
    if (enforce_order && var_fast > 0.0 && ell_t_fast > ell_t_slow)
      throw validation_error("theta: ell_t_fast must not exceed ell_t_slow");
  }
};

// Unit-variance squared exponential over 1 or 2 spatial dims.
inline double k_spatial_se(const Eigen::RowVectorXd& s, const Eigen::RowVectorXd& s_prime,
                           const Eigen::VectorXd& ell_s) {
  if ((ell_s.array() <= 0.0).any())
    throw validation_error("k_spatial_se: lengthscale must be positive");
  double q = 0.0;
  for (int d = 0; d < ell_s.size(); ++d) {
    const double r = (s[d] - s_prime[d]) / ell_s[d];
    q += r * r;
  }
  return std::exp(-0.5 * q);
}

inline double k_temporal_se(double t, double t_prime, double var_slow, double ell_t_slow) {
  const double r = (t - t_prime) / ell_t_slow;
  return var_slow * std::exp(-0.5 * r * r);
}

inline double k_temporal_exp(double t, double t_prime, double var_fast, double ell_t_fast) {
  return var_fast * std::exp(-std::abs(t - t_prime) / ell_t_fast);
}

namespace detail {

// Squared differences along dimension d for all point pairs.
inline Eigen::MatrixXd sqdiff_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int d) {
  Eigen::MatrixXd out(x.rows(), y.rows());
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < y.rows(); ++j) {
      const double r = x(i, d) - y(j, d);
      out(i, j) = r * r;
    }
  return out;
}

}  // namespace detail

inline Eigen::MatrixXd se_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                 const Eigen::VectorXd& ell_s) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(x.rows(), y.rows());
  for (int d = 0; d < ell_s.size(); ++d)
    q += detail::sqdiff_matrix(x, y, d) / (ell_s[d] * ell_s[d]);
  return (-0.5 * q.array()).exp();
}

inline Eigen::MatrixXd temporal_se_matrix(const Eigen::VectorXd& t, const Eigen::VectorXd& tp,
                                          double var, double ell) {
  Eigen::MatrixXd out(t.size(), tp.size());
  for (int i = 0; i < t.size(); ++i)
    for (int j = 0; j < tp.size(); ++j) out(i, j) = k_temporal_se(t[i], tp[j], var, ell);
  return out;
}

inline Eigen::MatrixXd temporal_exp_matrix(const Eigen::VectorXd& t, const Eigen::VectorXd& tp,
                                           double var, double ell) {
  Eigen::MatrixXd out(t.size(), tp.size());
  for (int i = 0; i < t.size(); ++i)
    for (int j = 0; j < tp.size(); ++j) out(i, j) = k_temporal_exp(t[i], tp[j], var, ell);
  return out;
}

// Covariance blocks of the separable LFP/CSD model. The forward operator is
// folded into the spatial block as A K A^T (and K A^T for the cross block);
// these products are formed before any eigendecomposition.
struct CovMatrices {
  Eigen::MatrixXd Ks_lfp;    // M x M, A K A^T at electrodes
  Eigen::MatrixXd Ks_cross;  // P x M, K(pred, nodes) A^T; empty if no pred grid
  Eigen::MatrixXd Kt_fast;   // T x T
  Eigen::MatrixXd Kt_slow;   // T x T
  Eigen::MatrixXd Kt_sum;    // fast + slow, exactly
};

inline CovMatrices build_cov(const Hyperparameters& theta, const ElectrodeArray& electrodes,
                             const Eigen::VectorXd& times, const QuadratureGrid& grid,
                             const ForwardParams& base_params,
                             const Eigen::MatrixXd& pred_grid = Eigen::MatrixXd()) {
  ForwardParams params = base_params;
  params.R = theta.R;
  const Eigen::MatrixXd A = operator_matrix(grid, electrodes, params);
  const Eigen::MatrixXd K = se_matrix(grid.nodes, grid.nodes, theta.ell_s);

  CovMatrices cov;
  Eigen::MatrixXd AK = A * K;
  cov.Ks_lfp = AK * A.transpose();
  cov.Ks_lfp = 0.5 * (cov.Ks_lfp + cov.Ks_lfp.transpose()).eval();
  if (pred_grid.rows() > 0)
    cov.Ks_cross = se_matrix(pred_grid, grid.nodes, theta.ell_s) * A.transpose();
  cov.Kt_fast = theta.var_fast > 0.0
                    ? temporal_exp_matrix(times, times, theta.var_fast, theta.ell_t_fast)
                    : Eigen::MatrixXd::Zero(times.size(), times.size());
  cov.Kt_slow = temporal_se_matrix(times, times, theta.var_slow, theta.ell_t_slow);
  cov.Kt_sum = cov.Kt_fast + cov.Kt_slow;
  return cov;
}

}  // namespace gpcsd
