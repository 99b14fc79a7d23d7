#include <catch2/catch_amalgamated.hpp>
#include <chrono>
#include <cmath>
#include <fstream>
#include <string>

#include "gpcsd/fit.hpp"
#include "gpcsd/kronecker.hpp"
#include "gpcsd/priors.hpp"
#include "gpcsd/rng.hpp"

using namespace gpcsd;

namespace {

// Space-major Kronecker product of the covariance blocks, as a dense
// MT x MT matrix: index = m * T + t.
Eigen::MatrixXd dense_sigma(const Eigen::MatrixXd& Ks, const Eigen::MatrixXd& Kt,
                            double noise_var) {
  const int M = static_cast<int>(Ks.rows()), T = static_cast<int>(Kt.rows());
  Eigen::MatrixXd S(M * T, M * T);
  for (int m = 0; m < M; ++m)
    for (int t = 0; t < T; ++t)
      for (int m2 = 0; m2 < M; ++m2)
        for (int t2 = 0; t2 < T; ++t2) S(m * T + t, m2 * T + t2) = Ks(m, m2) * Kt(t, t2);
  S.diagonal().array() += noise_var;
  return S;
}

Eigen::VectorXd vec_space_major(const Eigen::MatrixXd& phi) {
  Eigen::VectorXd v(phi.size());
  for (int m = 0; m < phi.rows(); ++m)
    for (int t = 0; t < phi.cols(); ++t) v[m * phi.cols() + t] = phi(m, t);
  return v;
}

// Dense multivariate-normal log-density via Cholesky; the independent
// inversion path checked against the Kronecker identity.
double dense_loglik(const Eigen::MatrixXd& Ks_j, const Eigen::MatrixXd& Kt_j, double noise_var,
                    const std::vector<Eigen::MatrixXd>& trials) {
  const Eigen::MatrixXd S = dense_sigma(Ks_j, Kt_j, noise_var);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  REQUIRE(llt.info() == Eigen::Success);
  double logdet = 0.0;
  for (int i = 0; i < S.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  double acc = 0.0;
  for (const auto& phi : trials) {
    const Eigen::VectorXd y = vec_space_major(phi);
    acc += y.dot(llt.solve(y));
  }
  const double log2pi = 1.8378770664093454835606594728112;
  return -0.5 * trials.size() * S.rows() * log2pi - 0.5 * trials.size() * logdet - 0.5 * acc;
}

struct Setup {
  GpcsdGeometry geom;
  Hyperparameters theta;

  static Setup make(int M, int T, double spacing = 300.0) {
    Setup s;
    s.geom.electrodes =
        ElectrodeArray::linear(Eigen::VectorXd::LinSpaced(M, 0.0, spacing * (M - 1)));
    const double span = spacing * (M - 1);
    s.geom.grid = QuadratureGrid::gauss_legendre({{0.0, span}}, 40);
    s.geom.base_params.bounds = {{0.0, span}};
    s.geom.times = Eigen::VectorXd::LinSpaced(T, 0.0, T - 1.0);
    s.theta.R = 0.4 * spacing;
    s.theta.ell_s = Eigen::VectorXd::Constant(1, 0.5 * spacing);
    s.theta.ell_t_fast = 0.9;
    s.theta.ell_t_slow = 2.2;
    s.theta.var_fast = 0.5;
    s.theta.var_slow = 1.1;
    s.theta.noise_var = 1e-3;
    return s;
  }

  CovMatrices cov() const {
    return build_cov(theta, geom.electrodes, geom.times, geom.grid, geom.base_params);
  }

  // Covariance blocks with the same jitter the model applies.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> jittered() const {
    CovMatrices c = cov();
    Eigen::MatrixXd Ks = c.Ks_lfp, Kt = c.Kt_sum;
    Ks.diagonal().array() += 1e-8 * Ks.diagonal().mean();
    Kt.diagonal().array() += 1e-8 * Kt.diagonal().mean();
    return {Ks, Kt};
  }

  std::vector<Eigen::MatrixXd> random_trials(int n, Rng& rng, double scale = 1.0) const {
    std::vector<Eigen::MatrixXd> trials;
    for (int r = 0; r < n; ++r) {
      Eigen::MatrixXd phi(geom.electrodes.count(), geom.times.size());
      for (int i = 0; i < phi.rows(); ++i)
        for (int j = 0; j < phi.cols(); ++j) phi(i, j) = scale * rng.normal();
      trials.push_back(std::move(phi));
    }
    return trials;
  }
};

long vm_hwm_kb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("VmHWM:", 0) == 0) return std::stol(line.substr(6));
  return -1;
}

}  // namespace

TEST_CASE("structured log-likelihood equals the dense Gaussian log-density") {
  Rng rng(99);
  for (int rep = 0; rep < 20; ++rep) {
    const int M = 3 + static_cast<int>(rng.uniform() * 4) % 4;  // 3..6
    const int T = 4 + static_cast<int>(rng.uniform() * 5) % 5;  // 4..8
    Setup s = Setup::make(M, T);
    const auto trials = s.random_trials(2, rng, 0.3);
    const double structured = log_marginal_likelihood(s.theta, s.geom, trials);
    const auto [Ks, Kt] = s.jittered();
    const double dense = dense_loglik(Ks, Kt, s.theta.noise_var, trials);
    REQUIRE(std::abs(structured - dense) < 1e-8);
  }
}

TEST_CASE("structured inverse identity matches the dense inverse") {
  Rng rng(5);
  Setup s = Setup::make(5, 6);
  const auto [Ks, Kt] = s.jittered();
  const KroneckerModel km = KroneckerModel::build(s.cov().Ks_lfp, s.cov().Kt_sum,
                                                  s.theta.noise_var);
  const Eigen::MatrixXd S = dense_sigma(Ks, Kt, s.theta.noise_var);
  const Eigen::MatrixXd Sinv = S.inverse();
  // Apply the structured solve to each unit matrix column.
  const int MT = static_cast<int>(S.rows());
  for (int c = 0; c < MT; ++c) {
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(5, 6);
    E(c / 6, c % 6) = 1.0;
    const Eigen::VectorXd col = vec_space_major(km.solve(E));
    REQUIRE((col - Sinv.col(c)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("very large noise reduces to the iid log-density") {
  Rng rng(17);
  Setup s = Setup::make(4, 5);
  // Ks_lfp carries the micron-scale quadrature weights, so "large" noise
  // must dominate eigenvalue products of order 1e7.
  s.theta.noise_var = 1e14;
  const auto trials = s.random_trials(3, rng, 10.0);
  const double structured = log_marginal_likelihood(s.theta, s.geom, trials);
  const double log2pi = 1.8378770664093454835606594728112;
  double iid = 0.0;
  for (const auto& phi : trials)
    iid += -0.5 * phi.size() * (log2pi + std::log(s.theta.noise_var)) -
           0.5 * phi.squaredNorm() / s.theta.noise_var;
  REQUIRE(std::abs(structured - iid) < 1e-4);
}

TEST_CASE("duplicating the trials doubles the log-likelihood") {
  Rng rng(23);
  Setup s = Setup::make(4, 6);
  auto trials = s.random_trials(3, rng, 0.5);
  const double base = log_marginal_likelihood(s.theta, s.geom, trials);
  auto doubled = trials;
  doubled.insert(doubled.end(), trials.begin(), trials.end());
  const double twice = log_marginal_likelihood(s.theta, s.geom, doubled);
  REQUIRE(twice == Catch::Approx(2.0 * base).epsilon(1e-12));
}

TEST_CASE("MAP gradient matches central finite differences") {
  Rng rng(31);
  Setup s = Setup::make(4, 6);
  const auto trials = s.random_trials(2, rng, 0.4);
  const PriorSet priors = default_priors(s.geom.electrodes, s.geom.times);

  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd th(7);
    for (int i = 0; i < 7; ++i) th[i] = priors.params[i].sample_within(rng);
    if (th[1] > s.geom.electrodes.max_span() * 0.6) th[1] *= 0.5;
    Hyperparameters theta = Hyperparameters::from_vector(th, 1);
    if (theta.ell_t_fast > theta.ell_t_slow) std::swap(theta.ell_t_fast, theta.ell_t_slow);

    const LikelihoodEval ev = log_map_objective_grad(theta, s.geom, trials, priors);
    const Eigen::VectorXd v = theta.to_vector();
    for (int i = 0; i < 7; ++i) {
      const double h = 1e-5 * v[i];
      Eigen::VectorXd vp = v, vm = v;
      vp[i] += h;
      vm[i] -= h;
      const double fp = log_map_objective(Hyperparameters::from_vector(vp, 1), s.geom, trials,
                                          priors);
      const double fm = log_map_objective(Hyperparameters::from_vector(vm, 1), s.geom, trials,
                                          priors);
      const double fd = (fp - fm) / (2.0 * h);
      const double rel = std::abs(ev.grad[i] - fd) / std::max(std::abs(fd), 1e-6);
      INFO("param " << i << " analytic " << ev.grad[i] << " fd " << fd);
      REQUIRE(rel < 1e-4);
    }
  }
}

TEST_CASE("flat priors reduce the MAP objective to the likelihood") {
  Rng rng(41);
  Setup s = Setup::make(4, 5);
  const auto trials = s.random_trials(2, rng, 0.4);
  // Wide uniform-like box: half-normal with enormous sd is flat up to a
  // constant; compare differences instead of absolute values.
  const PriorSet priors = default_priors(s.geom.electrodes, s.geom.times);
  const double ll = log_marginal_likelihood(s.theta, s.geom, trials);
  const double lmap = log_map_objective(s.theta, s.geom, trials, priors);
  REQUIRE(lmap == Catch::Approx(ll + priors.log_density(s.theta.to_vector())).epsilon(1e-12));

  Hyperparameters outside = s.theta;
  outside.R = priors.params[0].upper * 2.0;
  REQUIRE(log_map_objective(outside, s.geom, trials, priors) ==
          -std::numeric_limits<double>::infinity());
}

TEST_CASE("prior density is lower at the 1% quantile than at the median") {
  const InverseGamma ig = invgamma_from_quantiles(100.0, 1150.0);
  REQUIRE(ig.logpdf(ig.quantile(0.01)) < ig.logpdf(ig.quantile(0.5)));
}

TEST_CASE("prediction is zero for zero data and linear in the data") {
  Rng rng(53);
  Setup s = Setup::make(5, 6);
  const Eigen::MatrixXd pred_grid = Eigen::VectorXd::LinSpaced(9, 100.0, 1100.0);
  const auto trials = s.random_trials(2, rng, 0.5);

  std::vector<Eigen::MatrixXd> zeros{Eigen::MatrixXd::Zero(5, 6)};
  const CsdPrediction p0 = predict(s.theta, s.geom, zeros, pred_grid, s.geom.times);
  REQUIRE(p0.total[0].cwiseAbs().maxCoeff() == 0.0);

  const CsdPrediction p1 = predict(s.theta, s.geom, {trials[0]}, pred_grid, s.geom.times);
  const CsdPrediction p3 = predict(s.theta, s.geom, {(3.0 * trials[0]).eval()}, pred_grid,
                                   s.geom.times);
  REQUIRE((p3.total[0] - 3.0 * p1.total[0]).cwiseAbs().maxCoeff() <=
          1e-12 * p1.total[0].cwiseAbs().maxCoeff());
}

TEST_CASE("slow + fast + mean equals total exactly") {
  Rng rng(61);
  for (int rep = 0; rep < 10; ++rep) {
    Setup s = Setup::make(4, 5);
    const auto trials = s.random_trials(3, rng, 0.7);
    const Eigen::MatrixXd pred_grid = Eigen::VectorXd::LinSpaced(6, 0.0, 900.0);
    Eigen::MatrixXd mean_pred(6, 5), mean_elec(4, 5);
    for (int i = 0; i < mean_pred.size(); ++i) mean_pred.data()[i] = rng.normal();
    for (int i = 0; i < mean_elec.size(); ++i) mean_elec.data()[i] = rng.normal();
    const CsdPrediction p =
        predict(s.theta, s.geom, trials, pred_grid, s.geom.times, mean_pred, mean_elec);
    for (size_t r = 0; r < trials.size(); ++r) {
      const Eigen::MatrixXd recon = p.mean + p.slow[r] + p.fast[r];
      REQUIRE((recon - p.total[r]).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("permuting trials permutes predictions") {
  Rng rng(71);
  Setup s = Setup::make(4, 5);
  const auto trials = s.random_trials(3, rng, 0.5);
  const Eigen::MatrixXd pred_grid = Eigen::VectorXd::LinSpaced(5, 0.0, 900.0);
  const CsdPrediction fwd = predict(s.theta, s.geom, trials, pred_grid, s.geom.times);
  const CsdPrediction rev = predict(
      s.theta, s.geom, {trials[2], trials[0], trials[1]}, pred_grid, s.geom.times);
  REQUIRE((fwd.total[0] - rev.total[1]).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((fwd.total[2] - rev.total[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("predict_lfp noise limits") {
  Rng rng(83);
  Setup s = Setup::make(4, 5);
  const auto trials = s.random_trials(1, rng, 0.5);

  Hyperparameters lo = s.theta;
  lo.noise_var = 1e-14;
  const auto denoised = predict_lfp(lo, s.geom, trials);
  REQUIRE((denoised[0] - trials[0]).cwiseAbs().maxCoeff() < 1e-6);

  Hyperparameters hi = s.theta;
  hi.noise_var = 1e18;
  const auto shrunk = predict_lfp(hi, s.geom, trials);
  REQUIRE(shrunk[0].cwiseAbs().maxCoeff() < 1e-6 * trials[0].cwiseAbs().maxCoeff());
}

TEST_CASE("mean_loglik basics and dense agreement") {
  Rng rng(97);
  Setup s = Setup::make(3, 4);
  const auto trials = s.random_trials(4, rng, 0.6);
  const CovMatrices cov = s.cov();
  const KroneckerModel km = KroneckerModel::build(cov.Ks_lfp, cov.Kt_sum, s.theta.noise_var);

  REQUIRE(mean_loglik(Eigen::MatrixXd::Zero(3, 4), km, trials) == 0.0);

  Eigen::MatrixXd ybar = Eigen::MatrixXd::Zero(3, 4);
  for (const auto& t : trials) ybar += t;
  ybar /= static_cast<double>(trials.size());

  // Quadratic in c with maximum at c = 1 when mu = c * ybar.
  const double at1 = mean_loglik(ybar, km, trials);
  for (double c : {0.25, 0.5, 0.9, 1.1, 2.0})
    REQUIRE(mean_loglik((c * ybar).eval(), km, trials) < at1);

  // Dense evaluation.
  const auto [Ks, Kt] = s.jittered();
  const Eigen::MatrixXd S = dense_sigma(Ks, Kt, s.theta.noise_var);
  Eigen::MatrixXd mu(3, 4);
  for (int i = 0; i < mu.size(); ++i) mu.data()[i] = rng.normal();
  const Eigen::VectorXd vmu = vec_space_major(mu), vy = vec_space_major(ybar);
  const Eigen::VectorXd Sivy = S.llt().solve(vy), Sivmu = S.llt().solve(vmu);
  const double dense = vmu.dot(Sivy) - 0.5 * vmu.dot(Sivmu);
  REQUIRE(mean_loglik(mu, km, trials) == Catch::Approx(dense).epsilon(1e-9));
}

TEST_CASE("forward of a dense-grid CSD prediction approximates predict_lfp") {
  // Dipole-like configuration with fixed plausible hyperparameters.
  GpcsdGeometry geom;
  geom.electrodes = ElectrodeArray::linear(Eigen::VectorXd::LinSpaced(24, 0.0, 2400.0));
  geom.grid = QuadratureGrid::gauss_legendre({{0.0, 2400.0}}, 100);
  geom.base_params.bounds = {{0.0, 2400.0}};
  geom.times = Eigen::VectorXd::LinSpaced(30, 0.0, 29.0);

  Hyperparameters theta;
  theta.R = 150.0;
  theta.ell_s = Eigen::VectorXd::Constant(1, 200.0);
  theta.ell_t_fast = 2.0;
  theta.ell_t_slow = 6.0;
  theta.var_fast = 0.1;
  theta.var_slow = 1.0;
  theta.noise_var = 1e-4;

  Rng rng(123);
  Eigen::MatrixXd phi(24, 30);
  for (int i = 0; i < phi.size(); ++i) phi.data()[i] = 0.05 * rng.normal();

  const CsdPrediction csd = predict(theta, geom, {phi}, geom.grid.nodes, geom.times);
  ForwardParams params = geom.base_params;
  params.R = theta.R;
  const Eigen::MatrixXd lfp_from_csd =
      apply_forward(geom.grid, params, geom.electrodes, csd.total[0]);
  const auto lfp_direct = predict_lfp(theta, geom, {phi});
  const double scale = lfp_direct[0].cwiseAbs().maxCoeff();
  REQUIRE((lfp_from_csd - lfp_direct[0]).cwiseAbs().maxCoeff() <= 0.02 * scale);
}

TEST_CASE("likelihood evaluation stays within Kronecker-sized objects") {
  const int M = 50, T = 500;
  Setup s = Setup::make(M, T, 50.0);
  Rng rng(7);
  const auto trials = s.random_trials(2, rng, 0.5);

  const long before_kb = vm_hwm_kb();
  const auto t0 = std::chrono::steady_clock::now();
  double acc = 0.0;
  for (int rep = 0; rep < 5; ++rep) acc += log_marginal_likelihood(s.theta, s.geom, trials);
  const auto t1 = std::chrono::steady_clock::now();
  const LikelihoodEval ev = log_marginal_likelihood_grad(s.theta, s.geom, trials);
  const long after_kb = vm_hwm_kb();

  REQUIRE(std::isfinite(acc));
  REQUIRE(std::isfinite(ev.loglik));
  // An MT x MT matrix would need (50*500)^2 * 8 bytes = 5 GB; the working
  // set must stay in the tens of megabytes.
  REQUIRE(before_kb > 0);
  REQUIRE(after_kb - before_kb < 200 * 1024);
  const double secs = std::chrono::duration<double>(t1 - t0).count();
  REQUIRE(secs < 20.0);

  const CovMatrices cov = s.cov();
  const KroneckerModel km = KroneckerModel::build(cov.Ks_lfp, cov.Kt_sum, s.theta.noise_var);
  REQUIRE(km.Dinv.rows() == M);
  REQUIRE(km.Dinv.cols() == T);
  REQUIRE(km.Qs.rows() * km.Qs.cols() == M * M);
  REQUIRE(km.Qt.rows() * km.Qt.cols() == T * T);
}
