#pragma once

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gpcsd/analysis.hpp"
#include "gpcsd/baselines.hpp"
#include "gpcsd/dataset.hpp"
#include "gpcsd/errors.hpp"
#include "gpcsd/fit.hpp"
#include "gpcsd/kronecker.hpp"
#include "gpcsd/priors.hpp"
#include "gpcsd/simulate.hpp"
#include "gpcsd/studies.hpp"

namespace gpcsd {

namespace cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Run configuration (JSON file, strict keys; see schemas/runconfig.schema.json)
// ---------------------------------------------------------------------------

struct RunConfig {
  // forward
  std::optional<double> tau;  // 2D standoff; default half the min column pitch
  double margin = 0.0;        // integration bounds extension beyond the array
  int n_per_dim = 100;
  QuadScheme scheme = QuadScheme::gauss_legendre;
  // priors
  std::string prior_profile = "default";  // "default" | "auditory"
  std::map<std::string, std::pair<double, double>> quantile_overrides;
  std::map<std::string, double> sd_overrides;
  // optimizer
  FitSettings fit;
  // preprocessing
  bool normalize = true;
  bool subtract_evoked = false;
};

namespace detail {

inline void reject_unknown(const json& j, const std::vector<std::string>& known,
                           const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw config_error("config: unknown key '" + key + "' in " + where);
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  detail::reject_unknown(
      j, {"forward", "priors", "optimizer", "normalize", "subtract_evoked"}, "top level");
  if (j.contains("forward")) {
    const auto& f = j.at("forward");
    detail::reject_unknown(f, {"tau", "margin", "n_per_dim", "scheme"}, "forward");
    if (f.contains("tau")) cfg.tau = f.at("tau").get<double>();
    if (f.contains("margin")) cfg.margin = f.at("margin").get<double>();
    if (f.contains("n_per_dim")) cfg.n_per_dim = f.at("n_per_dim").get<int>();
    if (f.contains("scheme")) {
      const auto s = f.at("scheme").get<std::string>();
      if (s == "gauss-legendre")
        cfg.scheme = QuadScheme::gauss_legendre;
      else if (s == "trapezoid")
        cfg.scheme = QuadScheme::trapezoid;
      else
        throw config_error("config: unknown quadrature scheme " + s);
    }
  }
  if (j.contains("priors")) {
    const auto& p = j.at("priors");
    detail::reject_unknown(p, {"profile", "overrides"}, "priors");
    if (p.contains("profile")) cfg.prior_profile = p.at("profile").get<std::string>();
    if (cfg.prior_profile != "default" && cfg.prior_profile != "auditory")
      throw config_error("config: unknown prior profile " + cfg.prior_profile);
    if (p.contains("overrides")) {
      for (const auto& [name, spec] : p.at("overrides").items()) {
        detail::reject_unknown(spec, {"q01", "q99", "sd"}, "priors.overrides." + name);
        if (spec.contains("sd"))
          cfg.sd_overrides[name] = spec.at("sd").get<double>();
        else
          cfg.quantile_overrides[name] = {spec.at("q01").get<double>(),
                                          spec.at("q99").get<double>()};
      }
    }
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    detail::reject_unknown(
        o, {"restarts", "seed", "max_iters", "grad_tol", "rel_obj_tol", "temporal_model"},
        "optimizer");
    if (o.contains("restarts")) cfg.fit.n_restarts = o.at("restarts").get<int>();
    if (o.contains("seed")) cfg.fit.seed = o.at("seed").get<std::uint64_t>();
    if (o.contains("max_iters")) cfg.fit.max_iters = o.at("max_iters").get<int>();
    if (o.contains("grad_tol")) cfg.fit.grad_tol = o.at("grad_tol").get<double>();
    if (o.contains("rel_obj_tol")) cfg.fit.rel_obj_tol = o.at("rel_obj_tol").get<double>();
    if (o.contains("temporal_model")) {
      const auto m = o.at("temporal_model").get<std::string>();
      if (m == "se_plus_exp")
        cfg.fit.temporal_model = TemporalModel::se_plus_exp;
      else if (m == "se_only")
        cfg.fit.temporal_model = TemporalModel::se_only;
      else
        throw config_error("config: unknown temporal_model " + m);
    }
  }
  if (j.contains("normalize")) cfg.normalize = j.at("normalize").get<bool>();
  if (j.contains("subtract_evoked"))
    cfg.subtract_evoked = j.at("subtract_evoked").get<bool>();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return parse_run_config(gpcsd::detail::load_json(path));
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

inline double default_tau(const ElectrodeArray& electrodes) {
  if (electrodes.dim != 2) return 0.0;
  const auto [min_dy, _] = electrodes.diff_range(0);
  return 0.5 * min_dy;
}

inline GpcsdGeometry make_geometry(const LfpDataset& ds, const RunConfig& cfg) {
  GpcsdGeometry geom;
  geom.electrodes = ds.electrodes;
  geom.times = ds.times_ms();
  std::vector<std::pair<double, double>> bounds;
  for (int d = 0; d < ds.electrodes.dim; ++d)
    bounds.push_back({ds.electrodes.coords.col(d).minCoeff() - cfg.margin,
                      ds.electrodes.coords.col(d).maxCoeff() + cfg.margin});
  geom.grid = cfg.scheme == QuadScheme::gauss_legendre
                  ? QuadratureGrid::gauss_legendre(bounds, cfg.n_per_dim)
                  : QuadratureGrid::trapezoid(bounds, cfg.n_per_dim);
  geom.base_params.bounds = bounds;
  geom.base_params.tau = cfg.tau.value_or(default_tau(ds.electrodes));
  return geom;
}

inline PriorSet make_priors(const LfpDataset& ds, const RunConfig& cfg) {
  PriorSet ps = default_priors(ds.electrodes, ds.times_ms());
  if (cfg.prior_profile == "auditory") apply_auditory_temporal_priors(ps);
  for (auto& p : ps.params) {
    if (const auto it = cfg.quantile_overrides.find(p.name);
        it != cfg.quantile_overrides.end())
      p.prior = invgamma_from_quantiles(it->second.first, it->second.second);
    if (const auto it = cfg.sd_overrides.find(p.name); it != cfg.sd_overrides.end())
      p.prior = HalfNormal{it->second};
  }
  return ps;
}

struct Preprocessed {
  std::vector<Eigen::MatrixXd> trials;
  double scale = 1.0;             // data were divided by this
  Eigen::MatrixXd evoked;         // subtracted mean (dataset units / scale), empty if none
};

inline Preprocessed preprocess(const LfpDataset& ds, bool normalize, bool subtract_evoked) {
  Preprocessed out;
  out.trials = ds.trials;
  if (subtract_evoked) {
    out.evoked = evoked_mean(out.trials);
    for (auto& t : out.trials) t -= out.evoked;
  }
  if (normalize) {
    double ss = 0.0;
    std::int64_t n = 0;
    for (const auto& t : out.trials) {
      ss += t.array().square().sum();
      n += t.size();
    }
    const double sd = std::sqrt(ss / std::max<std::int64_t>(n, 1));
    if (sd > 0.0) {
      out.scale = sd;
      for (auto& t : out.trials) t /= sd;
      if (out.evoked.size()) out.evoked /= sd;
    }
  }
  return out;
}

inline std::string join_invocation(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

inline void write_csv_matrix(const fs::path& path, const Eigen::MatrixXd& m,
                             const std::vector<std::string>& header_lines,
                             const std::string& col_prefix = "") {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot open for writing: " + path.string());
  for (const auto& line : header_lines) out << "# " << line << "\n";
  if (!col_prefix.empty()) {
    out << col_prefix;
    out << "\n";
  }
  char buf[64];
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
}

// theta with variances mapped back to dataset units (data were divided by
// scale, so variances multiply by scale^2).
inline Hyperparameters theta_in_dataset_units(const Hyperparameters& theta, double scale) {
  Hyperparameters out = theta;
  out.var_fast *= scale * scale;
  out.var_slow *= scale * scale;
  out.noise_var *= scale * scale;
  return out;
}

struct LoadedParams {
  Hyperparameters theta;  // normalized-data units
  double normalization_scale = 1.0;
  bool subtract_evoked = false;
  TemporalModel temporal_model = TemporalModel::se_plus_exp;
};

inline LoadedParams load_params(const std::string& path) {
  const json j = gpcsd::detail::load_json(path);
  LoadedParams p;
  p.theta = theta_from_json(j.at("theta"));
  if (j.contains("normalization_scale"))
    p.normalization_scale = j.at("normalization_scale").get<double>();
  if (j.contains("subtract_evoked")) p.subtract_evoked = j.at("subtract_evoked").get<bool>();
  if (j.contains("temporal_model") && j.at("temporal_model").get<std::string>() == "se_only")
    p.temporal_model = TemporalModel::se_only;
  return p;
}

inline Eigen::MatrixXd parse_grid_spec(const std::string& spec, const ElectrodeArray& e) {
  if (spec == "electrodes") return e.coords;
  if (spec == "interior-electrodes") {
    if (e.dim != 1)
      throw validation_error("interior-electrodes grid requires a 1D array");
    return e.coords.middleRows(1, e.count() - 2);
  }
  if (spec.rfind("list:", 0) == 0) {
    std::vector<double> vals;
    std::stringstream ss(spec.substr(5));
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.empty()) throw validation_error("empty grid list");
    Eigen::MatrixXd g(vals.size() / e.dim, e.dim);
    if (static_cast<int>(vals.size()) != g.rows() * e.dim)
      throw validation_error("grid list length must be a multiple of the dimension");
    for (int i = 0; i < g.rows(); ++i)
      for (int d = 0; d < e.dim; ++d) g(i, d) = vals[i * e.dim + d];
    return g;
  }
  if (spec.rfind("file:", 0) == 0) {
    std::ifstream in(spec.substr(5));
    if (!in) throw validation_error("cannot open grid file: " + spec.substr(5));
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
      rows.push_back(row);
    }
    if (rows.empty()) throw validation_error("empty grid file");
    Eigen::MatrixXd g(rows.size(), e.dim);
    for (size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<int>(rows[i].size()) != e.dim)
        throw validation_error("grid file row width must equal the dimension");
      for (int d = 0; d < e.dim; ++d) g(i, d) = rows[i][d];
    }
    return g;
  }
  throw validation_error("unknown grid spec: " + spec);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string study = "dipole";
  std::string spec_file;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double noise = -1.0;
  int n_train = -1, n_test = -1, samples = -1;
  std::string out;
};

inline int cmd_simulate(const SimulateArgs& a, const std::string& invocation) {
  StudySpec spec = a.spec_file.empty() ? study_by_name(a.study)
                                       : study_spec_from_json(gpcsd::detail::load_json(a.spec_file));
  if (a.seed_set) spec.seed = a.seed;
  if (a.noise >= 0.0) spec.noise_var = a.noise;
  if (a.n_train >= 0) spec.n_train = a.n_train;
  if (a.n_test >= 0) spec.n_test = a.n_test;
  if (a.samples > 0) spec.n_samples = a.samples;

  const StudyOutput study = run_study(spec);
  const fs::path out(a.out);
  fs::create_directories(out);

  ojson prov;
  prov["invocation"] = invocation;
  prov["seed"] = spec.seed;
  prov["study"] = study_spec_to_json(spec);

  write_bundle(out / "train", study.train, prov);
  if (spec.n_test > 0) write_bundle(out / "test", study.test, prov);

  auto truth_bundle = [&](const std::vector<Eigen::MatrixXd>& fields) {
    PredictionBundle pb;
    pb.grid = spec.electrodes().coords;
    pb.times = spec.times_ms();
    pb.sample_rate_hz = spec.sample_rate_hz;
    pb.total = fields;
    return pb;
  };
  write_prediction(out / "truth_train", truth_bundle(study.truth_train), prov);
  if (spec.n_test > 0)
    write_prediction(out / "truth_test", truth_bundle(study.truth_test), prov);

  ojson sj;
  sj["invocation"] = invocation;
  sj["seed"] = spec.seed;
  sj["spec"] = study_spec_to_json(spec);
  sj["lfp_scale"] = study.lfp_scale;
  sj["noise_seed"] = spec.seed + 1000003ull;
  if (study.has_theta_true) {
    sj["theta_true"] = theta_to_json(study.theta_true);
    sj["theta_true_units"] = "scaled LFP (noiseless LFP divided by lfp_scale)";
  }
  gpcsd::detail::save_json(out / "study.json", sj);
  return 0;
}

struct FitArgs {
  std::string data, config, out;
  int restarts = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string temporal_model;
  bool subtract_evoked = false;
  bool no_normalize = false;
  bool auditory_priors = false;
};

inline int cmd_fit(const FitArgs& a, const std::string& invocation) {
  RunConfig cfg = load_run_config(a.config);
  if (a.restarts > 0) cfg.fit.n_restarts = a.restarts;
  if (a.seed_set) cfg.fit.seed = a.seed;
  if (a.subtract_evoked) cfg.subtract_evoked = true;
  if (a.no_normalize) cfg.normalize = false;
  if (a.auditory_priors) cfg.prior_profile = "auditory";
  if (!a.temporal_model.empty()) {
    if (a.temporal_model == "se_plus_exp")
      cfg.fit.temporal_model = TemporalModel::se_plus_exp;
    else if (a.temporal_model == "se_only")
      cfg.fit.temporal_model = TemporalModel::se_only;
    else
      throw config_error("unknown temporal model: " + a.temporal_model);
  }

  const LfpDataset ds = read_bundle(a.data);
  const GpcsdGeometry geom = make_geometry(ds, cfg);
  const PriorSet priors = make_priors(ds, cfg);
  const Preprocessed prep = preprocess(ds, cfg.normalize, cfg.subtract_evoked);

  const FitReport report = fit_map(geom, prep.trials, priors, cfg.fit);

  ojson j = fit_report_to_json(report, priors);
  j["theta_dataset_units"] = theta_to_json(theta_in_dataset_units(report.best, prep.scale));
  j["normalization_scale"] = prep.scale;
  j["subtract_evoked"] = cfg.subtract_evoked;
  j["invocation"] = invocation;
  gpcsd::detail::save_json(a.out, j);
  return 0;
}

struct PredictArgs {
  std::string data, params, grid = "electrodes", out;
  bool split = false;
  std::string config;
};

inline int cmd_predict(const PredictArgs& a, const std::string& invocation) {
  const RunConfig cfg = load_run_config(a.config);
  const LfpDataset ds = read_bundle(a.data);
  const LoadedParams params = load_params(a.params);
  const GpcsdGeometry geom = make_geometry(ds, cfg);
  const Eigen::MatrixXd pred_grid = parse_grid_spec(a.grid, ds.electrodes);

  // Reapply the preprocessing recorded at fit time.
  Preprocessed prep;
  prep.trials = ds.trials;
  Eigen::MatrixXd mean_elec;
  if (params.subtract_evoked) {
    mean_elec = evoked_mean(prep.trials);
    for (auto& t : prep.trials) t -= mean_elec;
  }
  if (params.normalization_scale != 1.0)
    for (auto& t : prep.trials) t /= params.normalization_scale;

  const CsdPrediction pred =
      predict(params.theta, geom, prep.trials, pred_grid, geom.times);

  PredictionBundle pb;
  pb.grid = pred.grid;
  pb.times = pred.times;
  pb.sample_rate_hz = ds.sample_rate_hz;
  pb.total = pred.total;
  if (a.split) {
    pb.slow = pred.slow;
    pb.fast = pred.fast;
  }
  pb.mean = pred.mean;

  ojson prov;
  prov["invocation"] = invocation;
  prov["params_file"] = a.params;
  prov["normalization_scale"] = params.normalization_scale;
  prov["units"] = "CSD of the LFP divided by normalization_scale (arbitrary units)";
  write_prediction(a.out, pb, prov);
  return 0;
}

struct BaselineArgs {
  std::string method;  // tcsd | kcsd
  std::string data, out, params, cv_data;
  double R = -1.0;
  int max_trials = -1;
};

inline int cmd_baseline(const BaselineArgs& a, const std::string& invocation) {
  const LfpDataset ds = read_bundle(a.data);
  ojson prov;
  prov["invocation"] = invocation;

  if (a.method == "tcsd") {
    PredictionBundle pb;
    pb.grid = ds.electrodes.coords.middleRows(1, ds.electrodes.count() - 2);
    pb.times = ds.times_ms();
    pb.sample_rate_hz = ds.sample_rate_hz;
    for (const auto& t : ds.trials) pb.total.push_back(tcsd(t, ds.electrodes));
    write_prediction(a.out, pb, prov);
    return 0;
  }
  if (a.method != "kcsd") throw validation_error("unknown baseline: " + a.method);

  double R = a.R;
  if (!a.params.empty()) R = load_params(a.params).theta.R;
  if (!(R > 0.0))
    throw validation_error("kcsd requires --R or --params to supply the forward radius");
  KcsdConfig cfg = KcsdConfig::defaults(R);
  if (a.max_trials > 0) cfg.max_cv_trials = a.max_trials;

  const Eigen::VectorXd pred_z =
      ds.electrodes.coords.col(0).segment(1, ds.electrodes.count() - 2);
  const std::vector<Eigen::MatrixXd> cv_trials =
      a.cv_data.empty() ? ds.trials : read_bundle(a.cv_data).trials;
  const KcsdResult res = kcsd_1d(cv_trials, ds.trials, ds.electrodes, cfg, pred_z);

  PredictionBundle pb;
  pb.grid = pred_z;
  pb.times = ds.times_ms();
  pb.sample_rate_hz = ds.sample_rate_hz;
  pb.total = res.csd;
  prov["kcsd_width"] = res.width;
  prov["kcsd_lambda"] = res.lambda;
  write_prediction(a.out, pb, prov);

  ojson sel;
  sel["invocation"] = invocation;
  sel["width"] = res.width;
  sel["lambda"] = res.lambda;
  sel["boundary_selection"] = res.boundary_selection;
  sel["widths"] = cfg.widths;
  sel["lambdas"] = cfg.lambdas;
  gpcsd::detail::save_json(fs::path(a.out) / "kcsd_selection.json", sel);
  write_csv_matrix(fs::path(a.out) / "kcsd_cv_errors.csv", res.cv_error,
                   {"kcsd leave-one-electrode-out CV error", "rows: widths", "cols: lambdas"});
  return 0;
}

struct CompareArgs {
  std::vector<std::string> preds;
  std::string truth, out;
  bool no_rescale = false;
};

inline int cmd_compare(const CompareArgs& a, const std::string& invocation) {
  if (a.preds.empty() || a.preds.size() > 2)
    throw validation_error("compare takes one or two --pred bundles");
  const PredictionBundle truth = read_prediction(a.truth);

  std::vector<PredictionBundle> preds;
  std::vector<ScoreResult> scores;
  for (const auto& p : a.preds) {
    preds.push_back(read_prediction(p));
    // Align the truth to the prediction grid by matching coordinates.
    std::vector<Eigen::MatrixXd> truth_rows;
    std::vector<int> idx;
    for (int i = 0; i < preds.back().grid.rows(); ++i) {
      int found = -1;
      for (int j = 0; j < truth.grid.rows(); ++j)
        if ((truth.grid.row(j) - preds.back().grid.row(i)).norm() < 1e-6) found = j;
      if (found < 0)
        throw validation_error("prediction grid point not present in the truth bundle");
      idx.push_back(found);
    }
    for (size_t r = 0; r < preds.back().total.size(); ++r) {
      Eigen::MatrixXd t(idx.size(), truth.times.size());
      for (size_t i = 0; i < idx.size(); ++i) t.row(i) = truth.total[r].row(idx[i]);
      truth_rows.push_back(std::move(t));
    }
    scores.push_back(score(preds.back().total, truth_rows, !a.no_rescale));
  }

  const fs::path prefix(a.out);
  ojson j;
  j["invocation"] = invocation;
  j["rescaled_to_unit_max"] = !a.no_rescale;
  for (size_t k = 0; k < scores.size(); ++k) {
    ojson e;
    e["bundle"] = a.preds[k];
    e["mean_mse"] = scores[k].mean_mse;
    e["per_trial_mse"] = std::vector<double>(
        scores[k].per_trial_mse.data(),
        scores[k].per_trial_mse.data() + scores[k].per_trial_mse.size());
    j["methods"].push_back(e);
  }
  if (scores.size() == 2 && scores[0].per_trial_mse.size() >= 2) {
    const PairedTTest tt = paired_ttest(scores[0].per_trial_mse, scores[1].per_trial_mse);
    j["paired_ttest"] = {{"t", tt.t}, {"p", tt.p}, {"mean_diff", tt.mean_diff}};
  }
  gpcsd::detail::save_json(prefix.string() + "_summary.json", j);

  for (size_t k = 0; k < scores.size(); ++k) {
    Eigen::MatrixXd table(scores[k].per_trial_mse.size(), 1);
    table.col(0) = scores[k].per_trial_mse;
    write_csv_matrix(prefix.string() + "_mse_" + std::to_string(k) + ".csv", table,
                     {"per-trial MSE for " + a.preds[k]});
    Eigen::MatrixXd locmap(scores[k].per_location_mse.size(), 2);
    locmap.col(0) = preds[k].grid.col(0);
    locmap.col(1) = scores[k].per_location_mse;
    write_csv_matrix(prefix.string() + "_location_mse_" + std::to_string(k) + ".csv", locmap,
                     {"per-location mean MSE for " + a.preds[k], "cols: coord, mse"});
  }
  return 0;
}

struct SpectraArgs {
  std::string pred, out;
};

inline int cmd_spectra(const SpectraArgs& a, const std::string& invocation) {
  const PredictionBundle pb = read_prediction(a.pred);
  // Uniform sampling check.
  for (int i = 2; i < pb.times.size(); ++i) {
    const double d0 = pb.times[1] - pb.times[0];
    if (std::abs((pb.times[i] - pb.times[i - 1]) - d0) > 1e-9 * d0)
      throw validation_error("spectra: prediction time grid is not uniform");
  }
  auto emit = [&](const std::vector<Eigen::MatrixXd>& comp, const std::string& name) {
    if (comp.empty()) return;
    const Spectrum spec = periodogram(comp, pb.sample_rate_hz);
    Eigen::MatrixXd table(spec.freqs.size(), 1 + spec.power.rows());
    table.col(0) = spec.freqs;
    table.rightCols(spec.power.rows()) = spec.power.transpose();
    std::vector<std::string> hdr = {"trial-averaged periodogram: " + name,
                                    "invocation: " + invocation,
                                    "cols: freq_hz, then one column per node"};
    std::string coords = "node coords:";
    for (int i = 0; i < pb.grid.rows(); ++i)
      coords += " " + std::to_string(pb.grid(i, 0));
    hdr.push_back(coords);
    write_csv_matrix(a.out + "_" + name + ".csv", table, hdr);
  };
  emit(pb.total, "total");
  emit(pb.slow, "slow");
  emit(pb.fast, "fast");
  return 0;
}

struct PlvArgs {
  std::vector<std::string> preds;
  std::string band, out;
  int time_index = -1;
};

inline int cmd_plv(const PlvArgs& a, const std::string& invocation) {
  if (a.preds.empty() || a.preds.size() > 2)
    throw validation_error("plv takes one or two --pred bundles");
  double lo = 0.0, hi = 0.0;
  {
    std::stringstream ss(a.band);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 2) throw validation_error("--band expects lo,hi");
    lo = v[0];
    hi = v[1];
  }

  std::vector<PredictionBundle> bundles;
  for (const auto& p : a.preds) bundles.push_back(read_prediction(p));
  const int T = static_cast<int>(bundles[0].times.size());
  const size_t n_trials = bundles[0].total.size();
  int nodes = 0;
  for (const auto& b : bundles) {
    if (b.total.size() != n_trials)
      throw validation_error("plv: bundles disagree on trial count");
    if (static_cast<int>(b.times.size()) != T)
      throw validation_error("plv: bundles disagree on time axis");
    nodes += static_cast<int>(b.grid.rows());
  }

  // Concatenate nodes across bundles.
  std::vector<Eigen::MatrixXd> joined;
  for (size_t r = 0; r < n_trials; ++r) {
    Eigen::MatrixXd m(nodes, T);
    int row = 0;
    for (const auto& b : bundles) {
      m.middleRows(row, b.grid.rows()) = b.total[r];
      row += static_cast<int>(b.grid.rows());
    }
    joined.push_back(std::move(m));
  }

  const PhaseTensor tensor =
      phase_tensor(joined, lo, hi, bundles[0].sample_rate_hz, a.time_index);
  const Eigen::MatrixXd m = plv_matrix(tensor);

  std::vector<std::string> hdr = {
      "pairwise phase locking value",
      "invocation: " + invocation,
      "band_hz: " + std::to_string(lo) + "," + std::to_string(hi),
      "time_index: " + std::to_string(a.time_index)};
  std::string coords = "node coords:";
  for (const auto& b : bundles)
    for (int i = 0; i < b.grid.rows(); ++i) coords += " " + std::to_string(b.grid(i, 0));
  hdr.push_back(coords);
  write_csv_matrix(a.out, m, hdr);
  return 0;
}

struct ImportArgs {
  std::vector<std::string> csv;
  std::string coords, out;
  double rate = 1000.0;
};

inline int cmd_import(const ImportArgs& a, const std::string& invocation) {
  std::ifstream in(a.coords);
  if (!in) throw validation_error("cannot open coords file: " + a.coords);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  if (rows.empty()) throw validation_error("empty coords file");
  const int dim = static_cast<int>(rows[0].size());
  ElectrodeArray e;
  e.dim = dim;
  e.coords.resize(rows.size(), dim);
  for (size_t i = 0; i < rows.size(); ++i)
    for (int d = 0; d < dim; ++d) e.coords(i, d) = rows[i][d];
  e.validate();

  std::vector<fs::path> files(a.csv.begin(), a.csv.end());
  const LfpDataset ds = import_csv(files, e, a.rate);
  ojson prov;
  prov["invocation"] = invocation;
  write_bundle(a.out, ds, prov);
  return 0;
}

}  // namespace cli

inline int cli_main(int argc, char** argv) {
  using namespace cli;
  CLI::App app{"Gaussian-process current source density estimation"};
  app.require_subcommand(1);
  const std::string invocation = join_invocation(argc, argv);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "generate a benchmark study dataset");
  s->add_option("--study", sim.study, "dipole | gp | misspec3");
  s->add_option("--spec", sim.spec_file, "study spec JSON overriding --study");
  auto* seed_opt = s->add_option("--seed", sim.seed, "study seed");
  s->add_option("--noise", sim.noise, "white noise variance");
  s->add_option("--n-train", sim.n_train, "override training trial count");
  s->add_option("--n-test", sim.n_test, "override test trial count");
  s->add_option("--samples", sim.samples, "override samples per trial");
  s->add_option("--out", sim.out, "output directory")->required();

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "MAP-fit hyperparameters to a dataset bundle");
  f->add_option("--data", fit.data, "dataset bundle directory")->required();
  f->add_option("--restarts", fit.restarts, "optimizer restarts");
  auto* fseed = f->add_option("--seed", fit.seed, "restart sampling seed");
  f->add_option("--config", fit.config, "run-config JSON");
  f->add_option("--out", fit.out, "output params JSON")->required();
  f->add_option("--temporal-model", fit.temporal_model, "se_plus_exp | se_only");
  f->add_flag("--subtract-evoked", fit.subtract_evoked,
              "subtract the trial-average LFP before fitting");
  f->add_flag("--no-normalize", fit.no_normalize, "skip unit-variance normalization");
  f->add_flag("--auditory-priors", fit.auditory_priors,
              "temporal lengthscale quantiles (30,100) and (1,20) ms");

  PredictArgs pred;
  auto* p = app.add_subcommand("predict", "predict CSD from a fitted model");
  p->add_option("--data", pred.data, "dataset bundle directory")->required();
  p->add_option("--params", pred.params, "params JSON from fit")->required();
  p->add_option("--grid", pred.grid,
                "electrodes | interior-electrodes | list:z1,z2,... | file:PATH");
  p->add_flag("--split", pred.split, "emit slow/fast components too");
  p->add_option("--config", pred.config, "run-config JSON");
  p->add_option("--out", pred.out, "output bundle directory")->required();

  BaselineArgs base;
  auto* b = app.add_subcommand("baseline", "traditional or kernel CSD estimates");
  b->add_option("method", base.method, "tcsd | kcsd")->required();
  b->add_option("--data", base.data, "dataset bundle directory")->required();
  b->add_option("--out", base.out, "output bundle directory")->required();
  b->add_option("--R", base.R, "forward radius for kcsd");
  b->add_option("--params", base.params, "params JSON supplying R for kcsd");
  b->add_option("--max-trials", base.max_trials, "kcsd CV trial cap");
  b->add_option("--cv-data", base.cv_data,
                "bundle used for kcsd cross-validation (defaults to --data)");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "score predictions against ground truth");
  c->add_option("--pred", cmp.preds, "prediction bundle (repeatable, max 2)")->required();
  c->add_option("--truth", cmp.truth, "ground-truth bundle")->required();
  c->add_option("--out", cmp.out, "output file prefix")->required();
  c->add_flag("--no-rescale", cmp.no_rescale, "skip unit-max rescaling");

  SpectraArgs spec;
  auto* sp = app.add_subcommand("spectra", "trial-averaged periodograms per component");
  sp->add_option("--pred", spec.pred, "prediction bundle")->required();
  sp->add_option("--out", spec.out, "output file prefix")->required();

  PlvArgs plv;
  auto* pl = app.add_subcommand("plv", "pairwise phase locking value matrix");
  pl->add_option("--pred", plv.preds, "prediction bundle (repeatable, max 2)")->required();
  pl->add_option("--band", plv.band, "bandpass lo,hi in Hz")->required();
  pl->add_option("--time-index", plv.time_index, "sample index for phase readout")->required();
  pl->add_option("--out", plv.out, "output CSV")->required();

  ImportArgs imp;
  auto* im = app.add_subcommand("import-csv", "convert CSV trials to a dataset bundle");
  im->add_option("--csv", imp.csv, "one CSV per trial, rows = channels")->required();
  im->add_option("--coords", imp.coords, "electrode coordinates CSV")->required();
  im->add_option("--rate", imp.rate, "sample rate in Hz");
  im->add_option("--out", imp.out, "output bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    sim.seed_set = seed_opt->count() > 0;
    fit.seed_set = fseed->count() > 0;
    if (s->parsed()) return cmd_simulate(sim, invocation);
    if (f->parsed()) return cmd_fit(fit, invocation);
    if (p->parsed()) return cmd_predict(pred, invocation);
    if (b->parsed()) return cmd_baseline(base, invocation);
    if (c->parsed()) return cmd_compare(cmp, invocation);
    if (sp->parsed()) return cmd_spectra(spec, invocation);
    if (pl->parsed()) return cmd_plv(plv, invocation);
    if (im->parsed()) return cmd_import(imp, invocation);
  } catch (const validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const numerical_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace gpcsd
