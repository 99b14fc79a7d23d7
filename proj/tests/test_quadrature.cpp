#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "gpcsd/quadrature.hpp"

using namespace gpcsd;

TEST_CASE("gauss-legendre weights sum to the interval length") {
  for (int n : {2, 5, 20, 100}) {
    const auto g = QuadratureGrid::gauss_legendre({{-3.0, 7.5}}, n);
    g.validate();
    REQUIRE(g.size() == n);
    REQUIRE(g.weights.sum() == Catch::Approx(10.5).epsilon(1e-12));
  }
}

TEST_CASE("gauss-legendre integrates polynomials up to degree 2n-1 exactly") {
  const auto g = QuadratureGrid::gauss_legendre({{0.0, 2.0}}, 4);
  // Integral of x^7 over [0,2] is 2^8/8 = 32.
  double acc = 0.0;
  for (int i = 0; i < g.size(); ++i) acc += g.weights[i] * std::pow(g.nodes(i, 0), 7);
  REQUIRE(acc == Catch::Approx(32.0).epsilon(1e-12));
}

TEST_CASE("trapezoid rule over a uniform grid") {
  const auto g = QuadratureGrid::trapezoid({{0.0, 1.0}}, 101);
  g.validate();
  double acc = 0.0;
  for (int i = 0; i < g.size(); ++i) acc += g.weights[i] * g.nodes(i, 0) * g.nodes(i, 0);
  REQUIRE(acc == Catch::Approx(1.0 / 3.0).epsilon(1e-4));
}

TEST_CASE("trapezoid_at handles nonuniform sorted nodes") {
  Eigen::VectorXd z(5);
  z << 0.0, 0.5, 1.5, 1.75, 4.0;
  const auto g = QuadratureGrid::trapezoid_at(z);
  g.validate();
  REQUIRE(g.weights.sum() == Catch::Approx(4.0).epsilon(1e-12));
  Eigen::VectorXd bad(3);
  bad << 0.0, 2.0, 2.0;
  REQUIRE_THROWS_AS(QuadratureGrid::trapezoid_at(bad), validation_error);
}

TEST_CASE("2D tensor grid covers the rectangle measure") {
  const auto g = QuadratureGrid::gauss_legendre({{0.0, 40.0}, {-10.0, 10.0}}, 12);
  g.validate();
  REQUIRE(g.size() == 144);
  REQUIRE(g.dim() == 2);
  REQUIRE(g.weights.sum() == Catch::Approx(800.0).epsilon(1e-12));
}

TEST_CASE("nodes stay inside bounds") {
  const auto g = QuadratureGrid::gauss_legendre({{100.0, 2300.0}}, 100);
  REQUIRE(g.nodes.col(0).minCoeff() >= 100.0);
  REQUIRE(g.nodes.col(0).maxCoeff() <= 2300.0);
}
