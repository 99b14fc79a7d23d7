#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "gpcsd/fit.hpp"
#include "gpcsd/lbfgs.hpp"
#include "gpcsd/rng.hpp"

using namespace gpcsd;

TEST_CASE("lbfgs minimizes a quadratic") {
  auto fn = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    Eigen::VectorXd c(3);
    c << 1.0, -2.0, 0.5;
    g = 2.0 * (x - c);
    return (x - c).squaredNorm();
  };
  const LbfgsResult r = lbfgs_minimize(fn, Eigen::VectorXd::Zero(3));
  REQUIRE(r.converged);
  REQUIRE(r.f < 1e-10);
}

TEST_CASE("lbfgs minimizes rosenbrock") {
  auto fn = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  const LbfgsResult r = lbfgs_minimize(fn, x0);
  REQUIRE(r.converged);
  REQUIRE(std::abs(r.x[0] - 1.0) < 1e-5);
  REQUIRE(std::abs(r.x[1] - 1.0) < 1e-5);
}

namespace {

struct FitFixture {
  GpcsdGeometry geom;
  Hyperparameters truth;
  std::vector<Eigen::MatrixXd> trials;
  PriorSet priors;

  static FitFixture make(int n_trials, std::uint64_t seed) {
    FitFixture f;
    const int M = 6, T = 12;
    f.geom.electrodes =
        ElectrodeArray::linear(Eigen::VectorXd::LinSpaced(M, 0.0, 1000.0));
    f.geom.grid = QuadratureGrid::gauss_legendre({{0.0, 1000.0}}, 30);
    f.geom.base_params.bounds = {{0.0, 1000.0}};
    f.geom.times = Eigen::VectorXd::LinSpaced(T, 0.0, T - 1.0);

    f.truth.R = 170.0;
    f.truth.ell_s = Eigen::VectorXd::Constant(1, 280.0);
    f.truth.ell_t_fast = 1.0;
    f.truth.ell_t_slow = 3.5;
    f.truth.var_fast = 2e-7;
    f.truth.var_slow = 6e-7;
    f.truth.noise_var = 1e-4;

    // Draw trials from the model itself via a dense factor.
    const CovMatrices cov = build_cov(f.truth, f.geom.electrodes, f.geom.times, f.geom.grid,
                                      f.geom.base_params);
    Eigen::MatrixXd S(M * T, M * T);
    for (int m = 0; m < M; ++m)
      for (int t = 0; t < T; ++t)
        for (int m2 = 0; m2 < M; ++m2)
          for (int t2 = 0; t2 < T; ++t2)
            S(m * T + t, m2 * T + t2) = cov.Ks_lfp(m, m2) * cov.Kt_sum(t, t2);
    S.diagonal().array() += f.truth.noise_var;
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    REQUIRE(llt.info() == Eigen::Success);
    Rng rng(seed);
    for (int r = 0; r < n_trials; ++r) {
      Eigen::VectorXd z(M * T);
      for (int i = 0; i < M * T; ++i) z[i] = rng.normal();
      const Eigen::VectorXd y = Eigen::MatrixXd(llt.matrixL()) * z;
      Eigen::MatrixXd phi(M, T);
      for (int m = 0; m < M; ++m)
        for (int t = 0; t < T; ++t) phi(m, t) = y[m * T + t];
      f.trials.push_back(std::move(phi));
    }
    f.priors = default_priors(f.geom.electrodes, f.geom.times);
    return f;
  }
};

}  // namespace

TEST_CASE("fit_map improves every restart and retains the best objective") {
  FitFixture f = FitFixture::make(4, 11);
  FitSettings settings;
  settings.n_restarts = 3;
  settings.seed = 7;
  const FitReport rep = fit_map(f.geom, f.trials, f.priors, settings);

  REQUIRE(rep.restarts.size() == 3);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : rep.restarts) {
    REQUIRE(r.obj_final >= r.obj_init);  // monotone improvement
    best = std::max(best, r.obj_final);
  }
  REQUIRE(rep.best_objective == best);
  for (const auto& r : rep.restarts) REQUIRE(rep.best_objective >= r.obj_init);

  // Returned parameters sit strictly inside the prior support.
  const Eigen::VectorXd v = rep.best.to_vector();
  for (int i = 0; i < 7; ++i) {
    REQUIRE(v[i] > f.priors.params[i].lower);
    REQUIRE(v[i] < f.priors.params[i].upper);
  }
}

TEST_CASE("fit_map is deterministic for a fixed seed") {
  FitFixture f = FitFixture::make(3, 19);
  FitSettings settings;
  settings.n_restarts = 2;
  settings.seed = 99;
  const FitReport a = fit_map(f.geom, f.trials, f.priors, settings);
  const FitReport b = fit_map(f.geom, f.trials, f.priors, settings);
  REQUIRE(a.best_objective == b.best_objective);
  REQUIRE(a.best_restart == b.best_restart);
  REQUIRE((a.best.to_vector() - b.best.to_vector()).cwiseAbs().maxCoeff() == 0.0);
  for (size_t r = 0; r < a.restarts.size(); ++r) {
    REQUIRE(a.restarts[r].obj_final == b.restarts[r].obj_final);
    REQUIRE((a.restarts[r].theta_final - b.restarts[r].theta_final).cwiseAbs().maxCoeff() ==
            0.0);
  }
}

TEST_CASE("boundary hits are flagged and warned") {
  FitFixture f = FitFixture::make(3, 23);
  // Cap every variance route far below the data variance so the fit must
  // press against at least one ceiling.
  for (auto& p : f.priors.params) {
    if (p.name == "noise_var") p.upper = 1e-6;
    if (p.name == "var_fast" || p.name == "var_slow") p.upper = 1e-10;
  }
  FitSettings settings;
  settings.n_restarts = 1;
  settings.seed = 3;
  const FitReport rep = fit_map(f.geom, f.trials, f.priors, settings);
  bool hit = false;
  for (const auto& h : rep.boundary_hits) hit = hit || h.ends_with(":upper");
  REQUIRE(hit);
}

TEST_CASE("single-SE variant never activates the fast component") {
  FitFixture f = FitFixture::make(3, 29);
  FitSettings settings;
  settings.n_restarts = 1;
  settings.seed = 5;
  settings.temporal_model = TemporalModel::se_only;
  const FitReport rep = fit_map(f.geom, f.trials, f.priors, settings);
  REQUIRE(rep.best.var_fast == 0.0);
}

TEST_CASE("fit report serializes with seed and prior provenance") {
  FitFixture f = FitFixture::make(2, 31);
  FitSettings settings;
  settings.n_restarts = 1;
  settings.seed = 12345;
  const FitReport rep = fit_map(f.geom, f.trials, f.priors, settings);
  const auto j = fit_report_to_json(rep, f.priors);
  REQUIRE(j.at("seed").get<std::uint64_t>() == 12345);
  REQUIRE(j.at("priors").size() == 7);
  REQUIRE(j.at("restarts").size() == 1);
  const Hyperparameters round = theta_from_json(j.at("theta"));
  REQUIRE(round.R == rep.best.R);
  REQUIRE(round.noise_var == rep.best.noise_var);
}
