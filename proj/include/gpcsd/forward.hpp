#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "gpcsd/electrodes.hpp"
#include "gpcsd/errors.hpp"
#include "gpcsd/quadrature.hpp"

namespace gpcsd {

// Biophysical forward models mapping current source density to field
// potential, for unit conductivity.
//
// 1D cylinder model:   phi(z) = -(R/2) Int g(z') a_1d(z, z'; R) dz'
//   with a_1d(z,z';R) = sqrt(((z-z')/R)^2 + 1) - sqrt(((z-z')/R)^2).
// 2D planar model:     phi(y,z) = -(1/4pi) Int g(y',z') a_2d(...) dy' dz'
//   with a_2d = log( (R + tau + sqrt((R+tau)^2 + r^2)) /
//                    (tau + sqrt(tau^2 + r^2)) ),  r^2 = (y-y')^2 + (z-z')^2.
// The scalar prefactors are irrelevant to comparisons of rescaled CSDs but
// are applied so amplitudes are consistent across the codebase.

inline constexpr double kPrefactor2d = 1.0 / (4.0 * M_PI);

// Dimensionless cylinder weight, symmetric in (z, z'), in (0, 1].
inline double weight_1d(double z, double z_prime, double R) {
  if (!std::isfinite(z) || !std::isfinite(z_prime) || !std::isfinite(R))
    throw validation_error("weight_1d: non-finite input");
  if (!(R > 0.0)) throw validation_error("weight_1d: R must be positive");
  const double rho = (z - z_prime) / R;
  const double rho2 = rho * rho;
  return std::sqrt(rho2 + 1.0) - std::sqrt(rho2);
}

// Planar probe weight with standoff tau; singular at tau = 0, r = 0.
inline double weight_2d(double y, double y_prime, double z, double z_prime, double R,
                        double tau) {
  if (!std::isfinite(y) || !std::isfinite(y_prime) || !std::isfinite(z) ||
      !std::isfinite(z_prime) || !std::isfinite(R) || !std::isfinite(tau))
    throw validation_error("weight_2d: non-finite input");
  if (!(R > 0.0)) throw validation_error("weight_2d: R must be positive");
  if (tau < 0.0) throw validation_error("weight_2d: tau must be nonnegative");
  const double ry = y - y_prime, rz = z - z_prime;
  const double r2 = ry * ry + rz * rz;
  if (tau == 0.0 && r2 == 0.0)
    throw numerical_error("weight_2d: singular at tau = 0 with zero offset");
  const double Rt = R + tau;
  return std::log((Rt + std::sqrt(Rt * Rt + r2)) / (tau + std::sqrt(tau * tau + r2)));
}

struct ForwardParams {
  double R = 100.0;   // cylinder radius / slab depth, microns
  double tau = 0.0;   // standoff distance, microns (2D only)
  std::vector<std::pair<double, double>> bounds;  // integration domain per dim

  void validate(int dim) const {
    if (!(R > 0.0)) throw config_error("forward: R must be positive");
    if (tau < 0.0) throw config_error("forward: tau must be nonnegative");
    if (static_cast<int>(bounds.size()) != dim)
      throw config_error("forward: bounds dimension mismatch");
    for (const auto& [a, b] : bounds)
      if (!(a < b)) throw config_error("forward: invalid bounds");
  }
};

namespace detail {

inline void check_grid_covers(const QuadratureGrid& grid, const ForwardParams& params) {
  if (grid.bounds.size() != params.bounds.size())
    throw config_error("forward: grid/params dimension mismatch");
  for (size_t d = 0; d < params.bounds.size(); ++d) {
    const double span = params.bounds[d].second - params.bounds[d].first;
    if (std::abs(grid.bounds[d].first - params.bounds[d].first) > 1e-6 * span ||
        std::abs(grid.bounds[d].second - params.bounds[d].second) > 1e-6 * span)
      throw config_error("forward: quadrature grid does not cover integration bounds");
  }
}

}  // namespace detail

// Matrix A with A(i,j) = prefactor * w_j * a(target_i, node_j), so that
// apply_forward(g) == A * g. Rows may cover electrodes or any prediction
// locations; prediction rows reuse the same quadrature grid.
inline Eigen::MatrixXd operator_matrix(const QuadratureGrid& sources,
                                       const Eigen::MatrixXd& targets,
                                       const ForwardParams& params) {
  detail::check_grid_covers(sources, params);
  const int m = static_cast<int>(targets.rows());
  const int n = sources.size();
  Eigen::MatrixXd A(m, n);
  if (sources.dim() == 1) {
    const double pref = -0.5 * params.R;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        A(i, j) = pref * sources.weights[j] *
                  weight_1d(targets(i, 0), sources.nodes(j, 0), params.R);
  } else {
    const double pref = -kPrefactor2d;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        A(i, j) = pref * sources.weights[j] *
                  weight_2d(targets(i, 0), sources.nodes(j, 0), targets(i, 1),
                            sources.nodes(j, 1), params.R, params.tau);
  }
  return A;
}

inline Eigen::MatrixXd operator_matrix(const QuadratureGrid& sources,
                                       const ElectrodeArray& targets,
                                       const ForwardParams& params) {
  return operator_matrix(sources, targets.coords, params);
}

// Quadrature projection of a CSD field (nodes x time) to potentials
// (targets x time). Plain accumulation loops in a fixed order, so repeated
// runs are bit-identical; agrees with operator_matrix * field to rounding.
inline Eigen::MatrixXd apply_forward(const QuadratureGrid& sources, const ForwardParams& params,
                                     const Eigen::MatrixXd& targets,
                                     const Eigen::MatrixXd& csd_field) {
  detail::check_grid_covers(sources, params);
  if (csd_field.rows() != sources.size())
    throw validation_error("apply_forward: field rows must match quadrature nodes");
  if (!csd_field.allFinite()) throw validation_error("apply_forward: non-finite field");
  const int m = static_cast<int>(targets.rows());
  const int n = sources.size();
  const int T = static_cast<int>(csd_field.cols());
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(m, T);
  Eigen::VectorXd row(n);
  const double pref = sources.dim() == 1 ? -0.5 * params.R : -kPrefactor2d;
  for (int i = 0; i < m; ++i) {
    if (sources.dim() == 1)
      for (int j = 0; j < n; ++j)
        row[j] = sources.weights[j] * weight_1d(targets(i, 0), sources.nodes(j, 0), params.R);
    else
      for (int j = 0; j < n; ++j)
        row[j] = sources.weights[j] * weight_2d(targets(i, 0), sources.nodes(j, 0),
                                                targets(i, 1), sources.nodes(j, 1), params.R,
                                                params.tau);
    for (int t = 0; t < T; ++t) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += row[j] * csd_field(j, t);
      phi(i, t) = pref * acc;
    }
  }
  return phi;
}

inline Eigen::MatrixXd apply_forward(const QuadratureGrid& sources, const ForwardParams& params,
                                     const ElectrodeArray& targets,
                                     const Eigen::MatrixXd& csd_field) {
  return apply_forward(sources, params, targets.coords, csd_field);
}

}  // namespace gpcsd
