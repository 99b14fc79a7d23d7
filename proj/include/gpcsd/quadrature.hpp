#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "gpcsd/errors.hpp"

namespace gpcsd {

enum class QuadScheme { gauss_legendre, trapezoid };

namespace detail {

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
inline void gauss_legendre_unit(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    w[n - 1 - i] = w[i];
  }
}

}  // namespace detail

// Quadrature nodes and weights over a 1D interval or a 2D rectangle.
// Realizes the discretization sum_i w_i f(u_i) of the forward integrals.
struct QuadratureGrid {
  Eigen::MatrixXd nodes;    // n x dim
  Eigen::VectorXd weights;  // n, all positive
  QuadScheme scheme = QuadScheme::gauss_legendre;
  int n_per_dim = 0;
  std::vector<std::pair<double, double>> bounds;  // per dim

  int size() const { return static_cast<int>(nodes.rows()); }
  int dim() const { return static_cast<int>(nodes.cols()); }

  double domain_measure() const {
    double m = 1.0;
    for (const auto& [a, b] : bounds) m *= (b - a);
    return m;
  }

  void validate() const {
    if (nodes.rows() != weights.size())
      throw validation_error("quadrature: node/weight count mismatch");
    if ((weights.array() <= 0.0).any())
      throw validation_error("quadrature: nonpositive weight");
    if (static_cast<int>(bounds.size()) != dim())
      throw validation_error("quadrature: bounds dimension mismatch");
    for (int d = 0; d < dim(); ++d) {
      const auto& [a, b] = bounds[d];
      if (!(a < b)) throw validation_error("quadrature: empty bounds");
      if ((nodes.col(d).array() < a - 1e-9 * (b - a)).any() ||
          (nodes.col(d).array() > b + 1e-9 * (b - a)).any())
        throw validation_error("quadrature: node outside bounds");
    }
    const double m = domain_measure();
    if (std::abs(weights.sum() - m) > 1e-9 * m)
      throw validation_error("quadrature: weights do not sum to domain measure");
  }

  static QuadratureGrid gauss_legendre(const std::vector<std::pair<double, double>>& bounds,
                                       int n_per_dim) {
    std::vector<double> xu, wu;
    detail::gauss_legendre_unit(n_per_dim, xu, wu);
    std::vector<Eigen::VectorXd> xs, ws;
    for (const auto& [a, b] : bounds) {
      Eigen::VectorXd x(n_per_dim), w(n_per_dim);
      for (int i = 0; i < n_per_dim; ++i) {
        x[i] = 0.5 * (b - a) * xu[i] + 0.5 * (a + b);
        w[i] = 0.5 * (b - a) * wu[i];
      }
      xs.push_back(x);
      ws.push_back(w);
    }
    return tensorize(xs, ws, QuadScheme::gauss_legendre, n_per_dim, bounds);
  }

  static QuadratureGrid trapezoid(const std::vector<std::pair<double, double>>& bounds,
                                  int n_per_dim) {
    if (n_per_dim < 2) throw validation_error("trapezoid rule needs at least 2 nodes");
    std::vector<Eigen::VectorXd> xs, ws;
    for (const auto& [a, b] : bounds) {
      Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n_per_dim, a, b);
      xs.push_back(x);
      ws.push_back(trapezoid_weights(x));
    }
    return tensorize(xs, ws, QuadScheme::trapezoid, n_per_dim, bounds);
  }

  // Trapezoid rule over an arbitrary sorted 1D node set (used when a
  // simulation grid must include the electrode positions exactly).
  static QuadratureGrid trapezoid_at(const Eigen::VectorXd& sorted_nodes) {
    const int n = static_cast<int>(sorted_nodes.size());
    if (n < 2) throw validation_error("trapezoid rule needs at least 2 nodes");
    for (int i = 1; i < n; ++i)
      if (!(sorted_nodes[i] > sorted_nodes[i - 1]))
        throw validation_error("trapezoid_at: nodes not strictly increasing");
    QuadratureGrid g;
    g.nodes = sorted_nodes;
    g.weights = trapezoid_weights(sorted_nodes);
    g.scheme = QuadScheme::trapezoid;
    g.n_per_dim = n;
    g.bounds = {{sorted_nodes[0], sorted_nodes[n - 1]}};
    return g;
  }

 private:
  static Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& x) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd w(n);
    w[0] = 0.5 * (x[1] - x[0]);
    for (int i = 1; i + 1 < n; ++i) w[i] = 0.5 * (x[i + 1] - x[i - 1]);
    w[n - 1] = 0.5 * (x[n - 1] - x[n - 2]);
    return w;
  }

  static QuadratureGrid tensorize(const std::vector<Eigen::VectorXd>& xs,
                                  const std::vector<Eigen::VectorXd>& ws, QuadScheme scheme,
                                  int n_per_dim,
                                  const std::vector<std::pair<double, double>>& bounds) {
    QuadratureGrid g;
    g.scheme = scheme;
    g.n_per_dim = n_per_dim;
    g.bounds = bounds;
    const int dim = static_cast<int>(xs.size());
    if (dim == 1) {
      g.nodes = xs[0];
      g.weights = ws[0];
    } else if (dim == 2) {
      const int n0 = static_cast<int>(xs[0].size()), n1 = static_cast<int>(xs[1].size());
      g.nodes.resize(n0 * n1, 2);
      g.weights.resize(n0 * n1);
      int k = 0;
      for (int i = 0; i < n0; ++i)
        for (int j = 0; j < n1; ++j, ++k) {
          g.nodes(k, 0) = xs[0][i];
          g.nodes(k, 1) = xs[1][j];
          g.weights[k] = ws[0][i] * ws[1][j];
        }
    } else {
      throw validation_error("quadrature supports 1 or 2 dimensions");
    }
    return g;
  }
};

}  // namespace gpcsd
