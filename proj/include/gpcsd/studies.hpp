#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "gpcsd/dataset.hpp"
#include "gpcsd/errors.hpp"
#include "gpcsd/simulate.hpp"

namespace gpcsd {

// Shipped simulation studies. The dipole study follows the canonical
// template setup (grid, R, noise). The Gaussian-process studies pin their
// generating kernels here; these configs are the ground truth of record for
// the benchmark numbers.
struct StudySpec {
  std::string name;
  int n_electrodes = 24;
  double space_min = 0.0, space_max = 2400.0;
  int n_samples = 60;
  double sample_rate_hz = 1000.0;
  double R = 150.0;
  double noise_var = 7e-5;
  std::uint64_t seed = 1;
  int n_train = 50, n_test = 50;
  int gen_grid_points = 601;  // dense generation grid (union with electrodes)

  bool is_dipole = false;  // dipole template instead of GP draws
  GpFieldSpec gp;          // used when !is_dipole

  ElectrodeArray electrodes() const {
    return ElectrodeArray::linear(
        Eigen::VectorXd::LinSpaced(n_electrodes, space_min, space_max));
  }

  Eigen::VectorXd times_ms() const {
    Eigen::VectorXd t(n_samples);
    for (int i = 0; i < n_samples; ++i) t[i] = 1000.0 * i / sample_rate_hz;
    return t;
  }
};

inline StudySpec dipole_study_spec() {
  StudySpec s;
  s.name = "dipole";
  s.is_dipole = true;
  s.n_samples = 50;
  s.n_train = 1;
  s.n_test = 0;
  s.gen_grid_points = 2400;
  return s;
}

inline StudySpec gp_study_spec() {
  StudySpec s;
  s.name = "gp";
  s.gp.ell_s = 230.0;
  s.gp.temporal = {{TemporalComponent::Kind::se, 0.7, 20.0},
                   {TemporalComponent::Kind::exponential, 0.3, 5.0}};
  return s;
}

inline StudySpec misspec3_study_spec() {
  StudySpec s;
  s.name = "misspec3";
  s.gp.ell_s = 230.0;
  s.gp.temporal = {{TemporalComponent::Kind::se, 0.5, 10.0},
                   {TemporalComponent::Kind::se, 0.1, 100.0},
                   {TemporalComponent::Kind::matern32, 0.2, 2.0}};
  return s;
}

inline StudySpec study_by_name(const std::string& name) {
  if (name == "dipole") return dipole_study_spec();
  if (name == "gp") return gp_study_spec();
  if (name == "misspec3") return misspec3_study_spec();
  throw validation_error("unknown study: " + name);
}

inline std::string component_kind_name(TemporalComponent::Kind k) {
  switch (k) {
    case TemporalComponent::Kind::se: return "se";
    case TemporalComponent::Kind::exponential: return "exponential";
    case TemporalComponent::Kind::matern32: return "matern32";
  }
  return "?";
}

inline TemporalComponent::Kind component_kind_from_name(const std::string& s) {
  if (s == "se") return TemporalComponent::Kind::se;
  if (s == "exponential") return TemporalComponent::Kind::exponential;
  if (s == "matern32") return TemporalComponent::Kind::matern32;
  throw validation_error("unknown temporal component kind: " + s);
}

inline nlohmann::ordered_json study_spec_to_json(const StudySpec& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["n_electrodes"] = s.n_electrodes;
  j["space_min_microns"] = s.space_min;
  j["space_max_microns"] = s.space_max;
  j["n_samples"] = s.n_samples;
  j["sample_rate_hz"] = s.sample_rate_hz;
  j["R_microns"] = s.R;
  j["noise_var"] = s.noise_var;
  j["seed"] = s.seed;
  j["n_train"] = s.n_train;
  j["n_test"] = s.n_test;
  j["gen_grid_points"] = s.gen_grid_points;
  j["generator"] = s.is_dipole ? "dipole" : "gp";
  if (!s.is_dipole) {
    j["gp_ell_s_microns"] = s.gp.ell_s;
    nlohmann::ordered_json comps = nlohmann::ordered_json::array();
    for (const auto& c : s.gp.temporal)
      comps.push_back({{"kind", component_kind_name(c.kind)},
                       {"var", c.var},
                       {"ell_ms", c.ell}});
    j["gp_temporal"] = comps;
  }
  return j;
}

inline StudySpec study_spec_from_json(const nlohmann::json& j) {
  StudySpec s;
  try {
    s.name = j.at("name").get<std::string>();
    s.n_electrodes = j.at("n_electrodes").get<int>();
    s.space_min = j.at("space_min_microns").get<double>();
    s.space_max = j.at("space_max_microns").get<double>();
    s.n_samples = j.at("n_samples").get<int>();
    s.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    s.R = j.at("R_microns").get<double>();
    s.noise_var = j.at("noise_var").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.n_train = j.at("n_train").get<int>();
    s.n_test = j.at("n_test").get<int>();
    s.gen_grid_points = j.at("gen_grid_points").get<int>();
    s.is_dipole = j.at("generator").get<std::string>() == "dipole";
    if (!s.is_dipole) {
      s.gp.ell_s = j.at("gp_ell_s_microns").get<double>();
      s.gp.temporal.clear();
      for (const auto& c : j.at("gp_temporal"))
        s.gp.temporal.push_back({component_kind_from_name(c.at("kind").get<std::string>()),
                                 c.at("var").get<double>(), c.at("ell_ms").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("bad study spec: ") + e.what());
  }
  return s;
}

// Everything a benchmark needs: noisy LFP datasets, ground-truth CSD at the
// electrode positions, the LFP scale constant, and (when the generator lies
// inside the fitted family) the true hyperparameters in scaled-data units.
struct StudyOutput {
  StudySpec spec;
  LfpDataset train, test;                      // test empty when n_test == 0
  std::vector<Eigen::MatrixXd> truth_train;    // CSD at electrodes, original units
  std::vector<Eigen::MatrixXd> truth_test;
  std::vector<Eigen::MatrixXd> noiseless_train, noiseless_test;  // scaled LFP
  double lfp_scale = 1.0;
  bool has_theta_true = false;
  Hyperparameters theta_true;
};

namespace detail {

// Dense generation grid joined with the electrode depths so the truth is
// available at the electrodes exactly.
inline Eigen::VectorXd union_grid(const Eigen::VectorXd& dense, const Eigen::VectorXd& extra,
                                  std::vector<int>& extra_indices) {
  std::vector<double> all(dense.data(), dense.data() + dense.size());
  all.insert(all.end(), extra.data(), extra.data() + extra.size());
  std::sort(all.begin(), all.end());
  std::vector<double> dedup;
  for (double v : all)
    if (dedup.empty() || v - dedup.back() > 1e-9) dedup.push_back(v);
  extra_indices.clear();
  for (int i = 0; i < extra.size(); ++i) {
    const auto it = std::lower_bound(dedup.begin(), dedup.end(), extra[i] - 1e-9);
    extra_indices.push_back(static_cast<int>(it - dedup.begin()));
  }
  return Eigen::Map<const Eigen::VectorXd>(dedup.data(), dedup.size());
}

}  // namespace detail

inline StudyOutput run_study(const StudySpec& spec) {
  StudyOutput out;
  out.spec = spec;
  const ElectrodeArray electrodes = spec.electrodes();
  const Eigen::VectorXd times = spec.times_ms();
  const int n_total = spec.n_train + spec.n_test;

  std::vector<Eigen::MatrixXd> fields;
  QuadratureGrid grid;
  std::vector<int> elec_idx;
  if (spec.is_dipole) {
    const Eigen::VectorXd z = Eigen::VectorXd::LinSpaced(spec.gen_grid_points, spec.space_min,
                                                         spec.space_max);
    grid = QuadratureGrid::trapezoid_at(z);
    const DipoleTemplate tpl = make_dipole();
    for (int r = 0; r < n_total; ++r) fields.push_back(tpl.eval(z, times));
    for (int r = 0; r < n_total; ++r) {
      const Eigen::MatrixXd at_elec = tpl.eval(electrodes.coords.col(0), times);
      (r < spec.n_train ? out.truth_train : out.truth_test).push_back(at_elec);
    }
  } else {
    const Eigen::VectorXd dense = Eigen::VectorXd::LinSpaced(
        spec.gen_grid_points, spec.space_min, spec.space_max);
    const Eigen::VectorXd z = detail::union_grid(dense, electrodes.coords.col(0), elec_idx);
    grid = QuadratureGrid::trapezoid_at(z);
    Rng rng(spec.seed);
    fields = gen_gp_trials(spec.gp, z, times, n_total, rng);
    for (int r = 0; r < n_total; ++r) {
      Eigen::MatrixXd at_elec(electrodes.count(), times.size());
      for (int m = 0; m < electrodes.count(); ++m) at_elec.row(m) = fields[r].row(elec_idx[m]);
      (r < spec.n_train ? out.truth_train : out.truth_test).push_back(at_elec);
    }
  }

  const GeneratedLfp gen = gen_lfp(fields, grid, spec.R, spec.noise_var, electrodes,
                                   spec.seed + 1000003ull);
  out.lfp_scale = gen.scale;

  out.train.electrodes = electrodes;
  out.train.sample_rate_hz = spec.sample_rate_hz;
  out.test.electrodes = electrodes;
  out.test.sample_rate_hz = spec.sample_rate_hz;
  for (int r = 0; r < n_total; ++r) {
    (r < spec.n_train ? out.train : out.test).trials.push_back(gen.noisy[r]);
    (r < spec.n_train ? out.noiseless_train : out.noiseless_test).push_back(gen.noiseless[r]);
  }

  // When the generator is the SE + exponential family itself, the true
  // hyperparameters for the scaled data are known: variances divide by the
  // squared LFP scale, noise_var is already in scaled units.
  if (!spec.is_dipole && spec.gp.temporal.size() == 2 &&
      spec.gp.temporal[0].kind == TemporalComponent::Kind::se &&
      spec.gp.temporal[1].kind == TemporalComponent::Kind::exponential) {
    out.has_theta_true = true;
    out.theta_true.R = spec.R;
    out.theta_true.ell_s = Eigen::VectorXd::Constant(1, spec.gp.ell_s);
    out.theta_true.ell_t_slow = spec.gp.temporal[0].ell;
    out.theta_true.var_slow = spec.gp.temporal[0].var / (out.lfp_scale * out.lfp_scale);
    out.theta_true.ell_t_fast = spec.gp.temporal[1].ell;
    out.theta_true.var_fast = spec.gp.temporal[1].var / (out.lfp_scale * out.lfp_scale);
    out.theta_true.noise_var = spec.noise_var;
  }
  return out;
}

// Interior electrode rows (tCSD exists only there; methods are compared at
// these locations).
inline std::vector<Eigen::MatrixXd> interior_rows(const std::vector<Eigen::MatrixXd>& fields) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& f : fields) out.push_back(f.middleRows(1, f.rows() - 2));
  return out;
}

}  // namespace gpcsd
