#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <string>
#include <vector>

#include "gpcsd/electrodes.hpp"
#include "gpcsd/errors.hpp"
#include "gpcsd/forward.hpp"
#include "gpcsd/kernels.hpp"
#include "gpcsd/rng.hpp"

namespace gpcsd {

// ---------------------------------------------------------------------------
// Ground-truth generators
// ---------------------------------------------------------------------------

struct GaussianBump {
  double s_mean, t_mean, s_sd, t_sd, sign;
};

// Canonical dipole-like template: four signed Gaussian bumps on a
// 2400-point spatial grid over [0, 2400] microns and 50 integer time steps.
struct DipoleTemplate {
  std::vector<GaussianBump> bumps;

  Eigen::MatrixXd eval(const Eigen::VectorXd& z, const Eigen::VectorXd& t) const {
    Eigen::MatrixXd field = Eigen::MatrixXd::Zero(z.size(), t.size());
    for (const auto& b : bumps)
      for (int i = 0; i < z.size(); ++i) {
        const double gs = std::exp(-0.5 * std::pow((z[i] - b.s_mean) / b.s_sd, 2));
        for (int j = 0; j < t.size(); ++j)
          field(i, j) += b.sign * gs * std::exp(-0.5 * std::pow((t[j] - b.t_mean) / b.t_sd, 2));
      }
    return field;
  }

  static Eigen::VectorXd canonical_space() { return Eigen::VectorXd::LinSpaced(2400, 0.0, 2400.0); }
  static Eigen::VectorXd canonical_time() { return Eigen::VectorXd::LinSpaced(50, 0.0, 49.0); }
};

inline DipoleTemplate make_dipole() {
  DipoleTemplate d;
  d.bumps = {{200.0, 25.0, 150.0, 3.0, +1.0},
             {800.0, 25.0, 150.0, 3.0, -1.0},
             {1600.0, 30.0, 150.0, 4.0, +1.0},
             {2200.0, 30.0, 150.0, 4.0, -1.0}};
  return d;
}

// Temporal covariance mixture used by the Gaussian-process studies. The
// Matern component (smoothness 3/2) appears only as a data generator; the
// fitted model family stays SE + exponential.
struct TemporalComponent {
  enum class Kind { se, exponential, matern32 };
  Kind kind = Kind::se;
  double var = 1.0;
  double ell = 1.0;
};

struct GpFieldSpec {
  double ell_s = 200.0;  // spatial SE lengthscale, microns
  std::vector<TemporalComponent> temporal;

  void validate() const {
    if (!(ell_s > 0.0)) throw validation_error("gp spec: spatial lengthscale must be positive");
    if (temporal.empty()) throw validation_error("gp spec: no temporal components");
    for (const auto& c : temporal)
      if (c.var < 0.0 || !(c.ell > 0.0)) throw validation_error("gp spec: bad component");
  }
};

inline Eigen::MatrixXd temporal_matern32_matrix(const Eigen::VectorXd& t,
                                                const Eigen::VectorXd& tp, double var,
                                                double ell) {
  Eigen::MatrixXd out(t.size(), tp.size());
  const double c = std::sqrt(3.0) / ell;
  for (int i = 0; i < t.size(); ++i)
    for (int j = 0; j < tp.size(); ++j) {
      const double r = std::abs(t[i] - tp[j]) * c;
      out(i, j) = var * (1.0 + r) * std::exp(-r);
    }
  return out;
}

inline Eigen::MatrixXd temporal_mixture_matrix(const GpFieldSpec& spec, const Eigen::VectorXd& t,
                                               const Eigen::VectorXd& tp) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(t.size(), tp.size());
  for (const auto& c : spec.temporal) {
    switch (c.kind) {
      case TemporalComponent::Kind::se:
        out += temporal_se_matrix(t, tp, c.var, c.ell);
        break;
      case TemporalComponent::Kind::exponential:
        out += temporal_exp_matrix(t, tp, c.var, c.ell);
        break;
      case TemporalComponent::Kind::matern32:
        out += temporal_matern32_matrix(t, tp, c.var, c.ell);
        break;
    }
  }
  return out;
}

namespace detail {

// PSD square-root factor via symmetric eigendecomposition with negative
// eigenvalues clipped to zero.
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& K) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (K + K.transpose()));
  if (eig.info() != Eigen::Success) throw numerical_error("psd_factor: eigensolver failed");
  Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

}  // namespace detail

// Exact draws of CSD fields (nodes x time, one per trial) from the
// zero-mean separable model spec. Draw order is pinned: trials in sequence,
// each filled node-major then time.
inline std::vector<Eigen::MatrixXd> gen_gp_trials(const GpFieldSpec& spec,
                                                  const Eigen::VectorXd& nodes_z,
                                                  const Eigen::VectorXd& times, int n_trials,
                                                  Rng& rng) {
  spec.validate();
  Eigen::VectorXd ell(1);
  ell[0] = spec.ell_s;
  const Eigen::MatrixXd Ks = se_matrix(nodes_z, nodes_z, ell);
  const Eigen::MatrixXd Kt = temporal_mixture_matrix(spec, times, times);
  const Eigen::MatrixXd Ls = detail::psd_factor(Ks);
  const Eigen::MatrixXd Lt = detail::psd_factor(Kt);
  std::vector<Eigen::MatrixXd> fields;
  Eigen::MatrixXd Z(nodes_z.size(), times.size());
  for (int r = 0; r < n_trials; ++r) {
    for (int i = 0; i < Z.rows(); ++i)
      for (int j = 0; j < Z.cols(); ++j) Z(i, j) = rng.normal();
    fields.push_back(Ls * Z * Lt.transpose());
  }
  return fields;
}

// ---------------------------------------------------------------------------
// Forward projection with noise
// ---------------------------------------------------------------------------

struct GeneratedLfp {
  std::vector<Eigen::MatrixXd> noiseless;  // electrodes x time, per trial
  std::vector<Eigen::MatrixXd> noisy;
  double scale = 1.0;  // noiseless LFP was divided by this before noise
};

// Trapezoid-rule projection of ground-truth CSD fields to the electrodes.
// The noiseless LFP block is rescaled to unit maximum absolute value (one
// shared constant across trials) and white noise of variance noise_var is
// added after scaling, so noise_var is expressed relative to a unit-peak
// signal. Noise draw order is pinned: trial, then channel, then time.
inline GeneratedLfp gen_lfp(const std::vector<Eigen::MatrixXd>& csd_fields,
                            const QuadratureGrid& grid, double R, double noise_var,
                            const ElectrodeArray& electrodes, std::uint64_t seed,
                            bool rescale_to_unit_max = true) {
  if (csd_fields.empty()) throw validation_error("gen_lfp: no fields");
  ForwardParams params;
  params.R = R;
  params.bounds = grid.bounds;
  GeneratedLfp out;
  double peak = 0.0;
  for (const auto& field : csd_fields) {
    out.noiseless.push_back(apply_forward(grid, params, electrodes, field));
    peak = std::max(peak, out.noiseless.back().cwiseAbs().maxCoeff());
  }
  if (rescale_to_unit_max) {
    if (!(peak > 0.0)) peak = 1.0;
    out.scale = peak;
    for (auto& phi : out.noiseless) phi /= peak;
  }
  Rng rng(seed);
  const double sd = std::sqrt(noise_var);
  for (const auto& phi : out.noiseless) {
    Eigen::MatrixXd noisy = phi;
    for (int i = 0; i < noisy.rows(); ++i)
      for (int j = 0; j < noisy.cols(); ++j) noisy(i, j) += sd * rng.normal();
    out.noisy.push_back(std::move(noisy));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

// Rescale to unit maximum absolute value; idempotent and sign-preserving.
inline Eigen::MatrixXd rescale_unit_max(const Eigen::MatrixXd& x) {
  const double peak = x.cwiseAbs().maxCoeff();
  return peak > 0.0 ? Eigen::MatrixXd(x / peak) : x;
}

struct ScoreResult {
  Eigen::VectorXd per_trial_mse;
  double mean_mse = 0.0;
  Eigen::VectorXd per_location_mse;  // mean over trials and time
};

inline ScoreResult score(const std::vector<Eigen::MatrixXd>& predicted,
                         const std::vector<Eigen::MatrixXd>& truth, bool rescale = true) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw validation_error("score: trial count mismatch");
  const int P = static_cast<int>(truth[0].rows());
  const int T = static_cast<int>(truth[0].cols());
  ScoreResult res;
  res.per_trial_mse.resize(predicted.size());
  res.per_location_mse = Eigen::VectorXd::Zero(P);
  for (size_t r = 0; r < predicted.size(); ++r) {
    if (predicted[r].rows() != P || predicted[r].cols() != T)
      throw validation_error("score: shape mismatch at trial " + std::to_string(r));
    const Eigen::MatrixXd p = rescale ? rescale_unit_max(predicted[r]) : predicted[r];
    const Eigen::MatrixXd t = rescale ? rescale_unit_max(truth[r]) : truth[r];
    const Eigen::MatrixXd d = p - t;
    res.per_trial_mse[r] = d.array().square().mean();
    res.per_location_mse += d.array().square().rowwise().mean().matrix();
  }
  res.per_location_mse /= static_cast<double>(predicted.size());
  res.mean_mse = res.per_trial_mse.mean();
  return res;
}

struct PairedTTest {
  double t = 0.0;
  double p = 1.0;
  double mean_diff = 0.0;
};

// Two-sided paired t-test on per-trial scores.
inline PairedTTest paired_ttest(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw validation_error("paired_ttest: need matching samples of size >= 2");
  const Eigen::VectorXd d = a - b;
  const int n = static_cast<int>(d.size());
  PairedTTest res;
  res.mean_diff = d.mean();
  const double var = (d.array() - res.mean_diff).square().sum() / (n - 1);
  if (var == 0.0) {
    res.t = 0.0;
    res.p = 1.0;
    return res;
  }
  res.t = res.mean_diff / std::sqrt(var / n);
  boost::math::students_t dist(n - 1);
  res.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(res.t)));
  return res;
}

}  // namespace gpcsd
