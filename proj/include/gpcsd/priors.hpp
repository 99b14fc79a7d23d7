#pragma once

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "gpcsd/electrodes.hpp"
#include "gpcsd/errors.hpp"
#include "gpcsd/kernels.hpp"
#include "gpcsd/rng.hpp"

namespace gpcsd {

// Inverse-Gamma with shape alpha and scale beta:
//   p(x) propto x^{-alpha-1} exp(-beta / x),  x > 0.
struct InverseGamma {
  double alpha = 1.0, beta = 1.0;

  double logpdf(double x) const {
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
    return alpha * std::log(beta) - std::lgamma(alpha) - (alpha + 1.0) * std::log(x) -
           beta / x;
  }
  double dlogpdf(double x) const { return -(alpha + 1.0) / x + beta / (x * x); }
  double cdf(double x) const {
    if (!(x > 0.0)) return 0.0;
    return boost::math::gamma_q(alpha, beta / x);
  }
  double quantile(double p) const { return beta / boost::math::gamma_q_inv(alpha, p); }
  double sample(Rng& rng) const { return beta / rng.gamma(alpha); }
};

// Half-Normal on [0, inf) with scale sd.
struct HalfNormal {
  double sd = 1.0;

  double logpdf(double x) const {
    if (x < 0.0) return -std::numeric_limits<double>::infinity();
    return 0.5 * std::log(2.0 / M_PI) - std::log(sd) - 0.5 * x * x / (sd * sd);
  }
  double dlogpdf(double x) const { return -x / (sd * sd); }
  double sample(Rng& rng) const { return std::abs(sd * rng.normal()); }
};

using Prior = std::variant<InverseGamma, HalfNormal>;

inline double prior_logpdf(const Prior& p, double x) {
  return std::visit([x](const auto& d) { return d.logpdf(x); }, p);
}
inline double prior_dlogpdf(const Prior& p, double x) {
  return std::visit([x](const auto& d) { return d.dlogpdf(x); }, p);
}
inline double prior_sample(const Prior& p, Rng& rng) {
  return std::visit([&rng](const auto& d) { return d.sample(rng); }, p);
}

// Solves for the inverse-Gamma whose 1% and 99% quantiles equal the given
// values. Reduces to a 1D root problem in alpha: for fixed alpha the scale
// implied by each quantile is beta = q * gamma_q_inv(alpha, p), and the two
// must agree.
inline InverseGamma invgamma_from_quantiles(double q01_value, double q99_value) {
  if (!(q01_value > 0.0) || !(q99_value > q01_value))
    throw validation_error("invgamma_from_quantiles: need 0 < q01 < q99");

  auto mismatch = [&](double alpha) {
    const double beta_lo = q01_value * boost::math::gamma_q_inv(alpha, 0.01);
    const double beta_hi = q99_value * boost::math::gamma_q_inv(alpha, 0.99);
    return std::log(beta_lo) - std::log(beta_hi);
  };

  // The mismatch is positive for small alpha (beta ratio dominates) and
  // decreases to log(q01/q99) < 0 as alpha grows; bracket then bisect.
  double lo = 1e-2, hi = 1.0;
  while (mismatch(hi) > 0.0 && hi < 1e8) hi *= 2.0;
  while (mismatch(lo) < 0.0 && lo > 1e-10) lo *= 0.5;
  if (!(mismatch(lo) > 0.0) || !(mismatch(hi) < 0.0))
    throw numerical_error("invgamma_from_quantiles: failed to bracket alpha for quantiles (" +
                          std::to_string(q01_value) + ", " + std::to_string(q99_value) + ")");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mismatch(mid) > 0.0 ? lo : hi) = mid;
  }
  InverseGamma ig;
  ig.alpha = 0.5 * (lo + hi);
  ig.beta = q01_value * boost::math::gamma_q_inv(ig.alpha, 0.01);
  if (std::abs(ig.cdf(q01_value) - 0.01) > 1e-6 || std::abs(ig.cdf(q99_value) - 0.99) > 1e-6)
    throw numerical_error(
        "invgamma_from_quantiles: root solve did not reach 1e-6 quantile accuracy "
        "(alpha=" + std::to_string(ig.alpha) + ", beta=" + std::to_string(ig.beta) + ")");
  return ig;
}

// One model parameter's prior together with its optimization box.
struct BoundedPrior {
  std::string name;
  Prior prior;
  double lower = 0.0, upper = 0.0;

  void validate() const {
    if (!(lower > 0.0) || !(upper > lower) || !std::isfinite(upper))
      throw validation_error("prior bounds must satisfy 0 < lower < upper < inf: " + name);
  }

  // Rejection sampling inside the box; boxes with negligible prior mass
  // fall back to log-uniform within the box.
  double sample_within(Rng& rng) const {
    for (int it = 0; it < 10000; ++it) {
      const double x = prior_sample(prior, rng);
      if (x > lower && x < upper) return x;
    }
    const double u = rng.uniform();
    return std::exp(std::log(lower) + u * (std::log(upper) - std::log(lower)));
  }
};

// Priors and bounds for the full parameter vector, in Hyperparameters order.
struct PriorSet {
  std::vector<BoundedPrior> params;

  int size() const { return static_cast<int>(params.size()); }

  double log_density(const Eigen::VectorXd& theta) const {
    double acc = 0.0;
    for (int i = 0; i < size(); ++i) {
      const double x = theta[i];
      if (!(x >= params[i].lower) || !(x <= params[i].upper))
        return -std::numeric_limits<double>::infinity();
      acc += prior_logpdf(params[i].prior, x);
    }
    return acc;
  }

  Eigen::VectorXd dlog_density(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd g(size());
    for (int i = 0; i < size(); ++i) g[i] = prior_dlogpdf(params[i].prior, theta[i]);
    return g;
  }
};

// Variance parameters get fixed broad boxes; the paper's rules only bound R
// and the lengthscales.
inline constexpr double kVarLower = 1e-12;
inline constexpr double kVarUpper = 1e3;

// Default priors following the quantile rules: R quantiles at (min electrode
// distance, max distance / 2); lengthscale quantiles at (1.2 * min
// difference, 0.8 * max difference) in space and time; half-Normal(2) on the
// signal variances and half-Normal(0.5) on the noise variance.
inline PriorSet default_priors(const ElectrodeArray& electrodes, const Eigen::VectorXd& times) {
  electrodes.validate();
  if (times.size() < 2) throw validation_error("default_priors: need at least 2 time points");
  const double min_s = electrodes.min_spacing();
  const double max_s = electrodes.max_span();
  double min_dt = std::numeric_limits<double>::infinity();
  for (int i = 1; i < times.size(); ++i) min_dt = std::min(min_dt, times[i] - times[i - 1]);
  const double max_dt = times[times.size() - 1] - times[0];
  if (!(min_dt > 0.0)) throw validation_error("default_priors: times must be increasing");

  PriorSet ps;
  ps.params.push_back({"R", invgamma_from_quantiles(min_s, 0.5 * max_s), 0.5 * min_s,
                       0.8 * max_s});
  for (int d = 0; d < electrodes.dim; ++d) {
    const auto [lo_d, hi_d] = electrodes.diff_range(d);
    ps.params.push_back({Hyperparameters::param_names(electrodes.dim)[1 + d],
                         invgamma_from_quantiles(1.2 * lo_d, 0.8 * hi_d), 0.5 * lo_d, hi_d});
  }
  const InverseGamma ig_t = invgamma_from_quantiles(1.2 * min_dt, 0.8 * max_dt);
  ps.params.push_back({"ell_t_fast", ig_t, 0.5 * min_dt, max_dt});
  ps.params.push_back({"ell_t_slow", ig_t, 0.5 * min_dt, max_dt});
  ps.params.push_back({"var_fast", HalfNormal{2.0}, kVarLower, kVarUpper});
  ps.params.push_back({"var_slow", HalfNormal{2.0}, kVarLower, kVarUpper});
  ps.params.push_back({"noise_var", HalfNormal{0.5}, kVarLower, kVarUpper});
  for (const auto& p : ps.params) p.validate();
  return ps;
}

// Quantile overrides used for the steady-activity analyses: SE temporal
// lengthscale quantiles at (30, 100) ms, exponential at (1, 20) ms.
inline void apply_auditory_temporal_priors(PriorSet& ps) {
  for (auto& p : ps.params) {
    if (p.name == "ell_t_slow") p.prior = invgamma_from_quantiles(30.0, 100.0);
    if (p.name == "ell_t_fast") p.prior = invgamma_from_quantiles(1.0, 20.0);
  }
}

}  // namespace gpcsd
