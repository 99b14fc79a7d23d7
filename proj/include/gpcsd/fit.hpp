#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gpcsd/errors.hpp"
#include "gpcsd/kronecker.hpp"
#include "gpcsd/lbfgs.hpp"
#include "gpcsd/priors.hpp"

namespace gpcsd {

enum class TemporalModel { se_plus_exp, se_only };

struct FitSettings {
  int n_restarts = 10;
  std::uint64_t seed = 0;
  int max_iters = 500;
  double grad_tol = 1e-5;
  double rel_obj_tol = 1e-9;
  TemporalModel temporal_model = TemporalModel::se_plus_exp;
};

struct RestartRecord {
  Eigen::VectorXd theta_init, theta_final;
  double obj_init = 0.0, obj_final = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct FitReport {
  Hyperparameters best;
  double best_objective = 0.0;
  int best_restart = -1;
  std::vector<RestartRecord> restarts;
  std::vector<std::string> boundary_hits;  // "name:lower" / "name:upper"
  std::uint64_t seed = 0;
  TemporalModel temporal_model = TemporalModel::se_plus_exp;
};

struct fit_error : numerical_error {
  FitReport report;
  fit_error(const std::string& msg, FitReport r) : numerical_error(msg), report(std::move(r)) {}
};

inline nlohmann::ordered_json theta_to_json(const Hyperparameters& theta) {
  nlohmann::ordered_json j;
  j["R_microns"] = theta.R;
  j["ell_s_microns"] = std::vector<double>(theta.ell_s.data(),
                                           theta.ell_s.data() + theta.ell_s.size());
  j["ell_t_fast_ms"] = theta.ell_t_fast;
  j["ell_t_slow_ms"] = theta.ell_t_slow;
  j["var_fast"] = theta.var_fast;
  j["var_slow"] = theta.var_slow;
  j["noise_var"] = theta.noise_var;
  return j;
}

inline Hyperparameters theta_from_json(const nlohmann::json& j) {
  Hyperparameters theta;
  try {
    theta.R = j.at("R_microns").get<double>();
    const auto ell = j.at("ell_s_microns").get<std::vector<double>>();
    theta.ell_s = Eigen::Map<const Eigen::VectorXd>(ell.data(), ell.size());
    theta.ell_t_fast = j.at("ell_t_fast_ms").get<double>();
    theta.ell_t_slow = j.at("ell_t_slow_ms").get<double>();
    theta.var_fast = j.at("var_fast").get<double>();
    theta.var_slow = j.at("var_slow").get<double>();
    theta.noise_var = j.at("noise_var").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("bad hyperparameter document: ") + e.what());
  }
  return theta;
}

// MAP objective: log marginal likelihood plus log prior density, for
// maximization. Returns -inf outside the prior support.
inline double log_map_objective(const Hyperparameters& theta, const GpcsdGeometry& geom,
                                const std::vector<Eigen::MatrixXd>& trials,
                                const PriorSet& priors) {
  const double lp = priors.log_density(theta.to_vector());
  if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
  return log_marginal_likelihood(theta, geom, trials) + lp;
}

inline LikelihoodEval log_map_objective_grad(const Hyperparameters& theta,
                                             const GpcsdGeometry& geom,
                                             const std::vector<Eigen::MatrixXd>& trials,
                                             const PriorSet& priors) {
  LikelihoodEval ev = log_marginal_likelihood_grad(theta, geom, trials);
  ev.loglik += priors.log_density(theta.to_vector());
  ev.grad += priors.dlog_density(theta.to_vector());
  return ev;
}

namespace detail {

// Indices of the parameters actually optimized; the single-SE variant drops
// the fast component (var_fast pinned to 0).
inline std::vector<int> active_indices(int spatial_dim, TemporalModel model) {
  std::vector<int> idx;
  const int np = spatial_dim + 6;
  const int o = 1 + spatial_dim;
  for (int i = 0; i < np; ++i) {
    if (model == TemporalModel::se_only && (i == o || i == o + 2)) continue;
    idx.push_back(i);
  }
  return idx;
}

inline double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// Smooth box transform: theta = exp(log lo + (log hi - log lo) * s(u)).
// Keeps every iterate strictly inside the bounds while optimizing an
// unconstrained quasi-Newton problem in u (log-parameter space).
struct BoxTransform {
  Eigen::VectorXd llo, width;  // per active param

  static BoxTransform from(const PriorSet& priors, const std::vector<int>& idx) {
    BoxTransform t;
    t.llo.resize(idx.size());
    t.width.resize(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) {
      const auto& p = priors.params[idx[k]];
      t.llo[k] = std::log(p.lower);
      t.width[k] = std::log(p.upper) - std::log(p.lower);
    }
    return t;
  }

  Eigen::VectorXd to_theta(const Eigen::VectorXd& u) const {
    Eigen::VectorXd th(u.size());
    for (int k = 0; k < u.size(); ++k)
      th[k] = std::exp(llo[k] + width[k] * logistic(u[k]));
    return th;
  }

  Eigen::VectorXd from_theta(const Eigen::VectorXd& th) const {
    Eigen::VectorXd u(th.size());
    for (int k = 0; k < th.size(); ++k) {
      double frac = (std::log(th[k]) - llo[k]) / width[k];
      frac = std::min(std::max(frac, 1e-9), 1.0 - 1e-9);
      u[k] = std::log(frac / (1.0 - frac));
    }
    return u;
  }

  // d theta_k / d u_k.
  Eigen::VectorXd jacobian(const Eigen::VectorXd& u, const Eigen::VectorXd& th) const {
    Eigen::VectorXd jac(u.size());
    for (int k = 0; k < u.size(); ++k) {
      const double s = logistic(u[k]);
      jac[k] = th[k] * width[k] * s * (1.0 - s);
    }
    return jac;
  }
};

}  // namespace detail

// Multi-restart bounded MAP fit. Starting values are sampled from the
// priors (rejection within bounds, fast lengthscale not exceeding the slow
// one), optimization runs in transformed log-parameter space, and the
// restart with the largest posterior wins; ties within 1e-9 go to the
// lowest restart index.
inline FitReport fit_map(const GpcsdGeometry& geom, const std::vector<Eigen::MatrixXd>& trials,
                         const PriorSet& priors, const FitSettings& settings = {}) {
  geom.validate();
  if (settings.n_restarts < 1) throw validation_error("fit_map: need at least one restart");
  const int D = geom.electrodes.dim;
  if (priors.size() != D + 6) throw validation_error("fit_map: prior count mismatch");

  const std::vector<int> active = detail::active_indices(D, settings.temporal_model);
  const auto box = detail::BoxTransform::from(priors, active);
  const int o = 1 + D;

  // Template vector holding values for inactive parameters.
  Eigen::VectorXd base = Eigen::VectorXd::Zero(D + 6);
  if (settings.temporal_model == TemporalModel::se_only) {
    base[o] = 0.5 * (priors.params[o].lower + priors.params[o].upper);  // unused ell_t_fast
    base[o + 2] = 0.0;                                                  // var_fast
  }

  auto assemble = [&](const Eigen::VectorXd& th_act) {
    Eigen::VectorXd full = base;
    for (size_t k = 0; k < active.size(); ++k) full[active[k]] = th_act[k];
    return Hyperparameters::from_vector(full, D);
  };

  Rng rng(settings.seed);
  std::vector<Eigen::VectorXd> inits;
  for (int r = 0; r < settings.n_restarts; ++r) {
    Eigen::VectorXd th(active.size());
    for (int attempt = 0;; ++attempt) {
      for (size_t k = 0; k < active.size(); ++k)
        th[k] = priors.params[active[k]].sample_within(rng);
      const Hyperparameters h = assemble(th);
      if (settings.temporal_model == TemporalModel::se_only ||
          h.ell_t_fast <= h.ell_t_slow || attempt > 1000)
        break;
    }
    inits.push_back(th);
  }

  // Priors apply to the active parameters only; the pinned var_fast = 0 of
  // the single-SE variant lies outside each variance box by construction.
  auto objective = [&](const Eigen::VectorXd& u, Eigen::VectorXd& grad_u) {
    const Eigen::VectorXd th_act = box.to_theta(u);
    const Hyperparameters h = assemble(th_act);
    LikelihoodEval ev = log_marginal_likelihood_grad(h, geom, trials);
    for (size_t k = 0; k < active.size(); ++k) {
      const int i = active[k];
      ev.loglik += prior_logpdf(priors.params[i].prior, th_act[k]);
      ev.grad[i] += prior_dlogpdf(priors.params[i].prior, th_act[k]);
    }
    const Eigen::VectorXd jac = box.jacobian(u, th_act);
    grad_u.resize(u.size());
    for (size_t k = 0; k < active.size(); ++k) grad_u[k] = -ev.grad[active[k]] * jac[k];
    return -ev.loglik;
  };

  LbfgsOptions lopts;
  lopts.max_iters = settings.max_iters;
  lopts.grad_tol = settings.grad_tol;
  lopts.rel_obj_tol = settings.rel_obj_tol;

  FitReport report;
  report.seed = settings.seed;
  report.temporal_model = settings.temporal_model;
  bool any_converged = false;
  for (int r = 0; r < settings.n_restarts; ++r) {
    const Eigen::VectorXd u0 = box.from_theta(inits[r]);
    const LbfgsResult lr = lbfgs_minimize(objective, u0, lopts);
    RestartRecord rec;
    rec.theta_init = assemble(inits[r]).to_vector();
    rec.theta_final = assemble(box.to_theta(lr.x)).to_vector();
    {
      Eigen::VectorXd g;
      rec.obj_init = -objective(u0, g);
    }
    rec.obj_final = -lr.f;
    rec.converged = lr.converged;
    rec.iterations = lr.iterations;
    any_converged = any_converged || lr.converged;
    report.restarts.push_back(std::move(rec));
  }
  if (!any_converged)
    throw fit_error("fit_map: no restart converged", report);

  report.best_restart = 0;
  for (int r = 1; r < settings.n_restarts; ++r)
    if (report.restarts[r].obj_final > report.restarts[report.best_restart].obj_final + 1e-9)
      report.best_restart = r;
  report.best_objective = report.restarts[report.best_restart].obj_final;
  report.best = Hyperparameters::from_vector(report.restarts[report.best_restart].theta_final, D);

  const auto names = Hyperparameters::param_names(D);
  const Eigen::VectorXd bv = report.best.to_vector();
  for (int i : active) {
    const auto& p = priors.params[i];
    if (std::abs(bv[i] - p.lower) < 1e-6 * std::abs(p.lower))
      report.boundary_hits.push_back(names[i] + ":lower");
    else if (std::abs(bv[i] - p.upper) < 1e-6 * std::abs(p.upper))
      report.boundary_hits.push_back(names[i] + ":upper");
  }
  for (const auto& hit : report.boundary_hits)
    std::cerr << "warning: fitted parameter at bound: " << hit << "\n";
  return report;
}

inline nlohmann::ordered_json priors_to_json(const PriorSet& priors) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& p : priors.params) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    if (std::holds_alternative<InverseGamma>(p.prior)) {
      const auto& ig = std::get<InverseGamma>(p.prior);
      e["family"] = "inverse_gamma";
      e["shape"] = ig.alpha;
      e["scale"] = ig.beta;
    } else {
      e["family"] = "half_normal";
      e["sd"] = std::get<HalfNormal>(p.prior).sd;
    }
    e["lower"] = p.lower;
    e["upper"] = p.upper;
    arr.push_back(e);
  }
  return arr;
}

inline nlohmann::ordered_json fit_report_to_json(const FitReport& report,
                                                 const PriorSet& priors) {
  nlohmann::ordered_json j;
  j["theta"] = theta_to_json(report.best);
  j["objective"] = report.best_objective;
  j["best_restart"] = report.best_restart;
  j["seed"] = report.seed;
  j["temporal_model"] =
      report.temporal_model == TemporalModel::se_plus_exp ? "se_plus_exp" : "se_only";
  j["boundary_hits"] = report.boundary_hits;
  j["priors"] = priors_to_json(priors);
  nlohmann::ordered_json rs = nlohmann::ordered_json::array();
  for (const auto& r : report.restarts) {
    nlohmann::ordered_json e;
    e["theta_init"] = std::vector<double>(r.theta_init.data(),
                                          r.theta_init.data() + r.theta_init.size());
    e["theta_final"] = std::vector<double>(r.theta_final.data(),
                                           r.theta_final.data() + r.theta_final.size());
    e["objective_init"] = r.obj_init;
    e["objective_final"] = r.obj_final;
    e["converged"] = r.converged;
    e["iterations"] = r.iterations;
    rs.push_back(e);
  }
  j["restarts"] = rs;
  return j;
}

}  // namespace gpcsd
