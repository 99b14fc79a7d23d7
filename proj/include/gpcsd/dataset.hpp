#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gpcsd/electrodes.hpp"
#include "gpcsd/errors.hpp"
#include "gpcsd/kronecker.hpp"

namespace gpcsd {

static_assert(std::endian::native == std::endian::little,
              "bundle format is little-endian float64");

// Trials x channels x time voltage block with geometry and sample rate.
struct LfpDataset {
  ElectrodeArray electrodes;
  double sample_rate_hz = 1000.0;
  std::vector<Eigen::MatrixXd> trials;  // each channels x time

  int n_trials() const { return static_cast<int>(trials.size()); }
  int n_channels() const { return electrodes.count(); }
  int n_samples() const { return trials.empty() ? 0 : static_cast<int>(trials[0].cols()); }

  Eigen::VectorXd times_ms() const {
    Eigen::VectorXd t(n_samples());
    for (int i = 0; i < n_samples(); ++i) t[i] = 1000.0 * i / sample_rate_hz;
    return t;
  }

  void validate() const {
    electrodes.validate();
    if (!(sample_rate_hz > 0.0)) throw validation_error("dataset: bad sample rate");
    if (trials.empty()) throw validation_error("dataset: no trials");
    for (const auto& t : trials) {
      if (t.rows() != n_channels() || t.cols() != n_samples())
        throw validation_error("dataset: ragged trial shapes");
      if (!t.allFinite()) throw validation_error("dataset: non-finite sample");
    }
  }
};

namespace detail {

// Raw little-endian float64, layout: trial-major, then channel, then time.
inline void write_f64(const std::filesystem::path& path,
                      const std::vector<Eigen::MatrixXd>& blocks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw validation_error("cannot open for writing: " + path.string());
  for (const auto& b : blocks)
    for (int i = 0; i < b.rows(); ++i)
      for (int j = 0; j < b.cols(); ++j) {
        const double v = b(i, j);
        out.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
  if (!out) throw validation_error("write failed: " + path.string());
}

inline std::vector<Eigen::MatrixXd> read_f64(const std::filesystem::path& path, int n_blocks,
                                             int rows, int cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open: " + path.string());
  const auto actual = std::filesystem::file_size(path);
  const std::uintmax_t expected =
      static_cast<std::uintmax_t>(8) * n_blocks * rows * cols;
  if (actual != expected)
    throw validation_error("size mismatch for " + path.string() + ": expected " +
                           std::to_string(expected) + " bytes (" + std::to_string(n_blocks) +
                           " trials x " + std::to_string(rows) + " channels x " +
                           std::to_string(cols) + " samples x 8), found " +
                           std::to_string(actual));
  std::vector<Eigen::MatrixXd> blocks;
  for (int b = 0; b < n_blocks; ++b) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(double));
        m(i, j) = v;
      }
    blocks.push_back(std::move(m));
  }
  if (!in) throw validation_error("read failed: " + path.string());
  return blocks;
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("bad JSON in " + path.string() + ": " + e.what());
  }
}

inline void save_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

inline nlohmann::ordered_json coords_json(const ElectrodeArray& e) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (int i = 0; i < e.count(); ++i) {
    if (e.dim == 1)
      arr.push_back(e.coords(i, 0));
    else
      arr.push_back(std::vector<double>{e.coords(i, 0), e.coords(i, 1)});
  }
  return arr;
}

inline ElectrodeArray coords_from_json(const nlohmann::json& arr, int dim) {
  ElectrodeArray e;
  e.dim = dim;
  e.coords.resize(arr.size(), dim);
  for (size_t i = 0; i < arr.size(); ++i) {
    if (dim == 1)
      e.coords(i, 0) = arr[i].get<double>();
    else {
      e.coords(i, 0) = arr[i].at(0).get<double>();
      e.coords(i, 1) = arr[i].at(1).get<double>();
    }
  }
  e.validate();
  return e;
}

}  // namespace detail

// LFP dataset bundle: meta.json + lfp.bin. Provenance (invocation, seed,
// study spec) rides along in meta.json under "provenance".
inline void write_bundle(const std::filesystem::path& dir, const LfpDataset& ds,
                         const nlohmann::ordered_json& provenance = {}) {
  ds.validate();
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["schema_version"] = 1;
  meta["n_trials"] = ds.n_trials();
  meta["n_channels"] = ds.n_channels();
  meta["n_samples"] = ds.n_samples();
  meta["sample_rate_hz"] = ds.sample_rate_hz;
  meta["electrode_dim"] = ds.electrodes.dim;
  meta["electrode_coords_microns"] = detail::coords_json(ds.electrodes);
  meta["dtype"] = "float64";
  meta["byte_order"] = "little-endian";
  meta["layout"] = "trial-major, then channel, then time";
  if (!provenance.is_null() && !provenance.empty()) meta["provenance"] = provenance;
  detail::save_json(dir / "meta.json", meta);
  detail::write_f64(dir / "lfp.bin", ds.trials);
}

inline LfpDataset read_bundle(const std::filesystem::path& dir) {
  const auto meta = detail::load_json(dir / "meta.json");
  LfpDataset ds;
  try {
    if (meta.at("schema_version").get<int>() != 1)
      throw validation_error("bundle: unsupported schema_version");
    ds.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
    const int dim = meta.at("electrode_dim").get<int>();
    ds.electrodes = detail::coords_from_json(meta.at("electrode_coords_microns"), dim);
    const int n_trials = meta.at("n_trials").get<int>();
    const int n_channels = meta.at("n_channels").get<int>();
    const int n_samples = meta.at("n_samples").get<int>();
    if (n_channels != ds.electrodes.count())
      throw validation_error("bundle: electrode coordinate count != n_channels");
    ds.trials = detail::read_f64(dir / "lfp.bin", n_trials, n_channels, n_samples);
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("bundle meta.json: " + std::string(e.what()));
  }
  ds.validate();
  return ds;
}

// Prediction / ground-truth bundle: grid coordinates instead of electrodes;
// optional slow/fast/mean component files next to the total.
struct PredictionBundle {
  Eigen::MatrixXd grid;   // P x dim
  Eigen::VectorXd times;  // ms
  double sample_rate_hz = 1000.0;
  std::vector<Eigen::MatrixXd> total, slow, fast;  // per trial, P x T
  Eigen::MatrixXd mean;                            // P x T, may be empty
  bool has_split() const { return !slow.empty(); }
};

inline void write_prediction(const std::filesystem::path& dir, const PredictionBundle& pb,
                             const nlohmann::ordered_json& provenance = {}) {
  if (pb.total.empty()) throw validation_error("prediction bundle: no trials");
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["schema_version"] = 1;
  meta["kind"] = "csd";
  meta["n_trials"] = static_cast<int>(pb.total.size());
  meta["n_locations"] = static_cast<int>(pb.grid.rows());
  meta["n_samples"] = static_cast<int>(pb.times.size());
  meta["sample_rate_hz"] = pb.sample_rate_hz;
  meta["grid_dim"] = static_cast<int>(pb.grid.cols());
  {
    ElectrodeArray tmp;
    tmp.dim = static_cast<int>(pb.grid.cols());
    tmp.coords = pb.grid;
    meta["grid_coords_microns"] = detail::coords_json(tmp);
  }
  meta["times_ms"] = std::vector<double>(pb.times.data(), pb.times.data() + pb.times.size());
  meta["dtype"] = "float64";
  meta["byte_order"] = "little-endian";
  meta["layout"] = "trial-major, then location, then time";
  meta["split"] = pb.has_split();
  meta["has_mean"] = pb.mean.size() > 0;
  if (!provenance.is_null() && !provenance.empty()) meta["provenance"] = provenance;
  detail::save_json(dir / "meta.json", meta);
  detail::write_f64(dir / "csd.bin", pb.total);
  if (pb.has_split()) {
    detail::write_f64(dir / "csd_slow.bin", pb.slow);
    detail::write_f64(dir / "csd_fast.bin", pb.fast);
  }
  if (pb.mean.size() > 0) detail::write_f64(dir / "csd_mean.bin", {pb.mean});
}

inline PredictionBundle read_prediction(const std::filesystem::path& dir) {
  const auto meta = detail::load_json(dir / "meta.json");
  PredictionBundle pb;
  try {
    const int n_trials = meta.at("n_trials").get<int>();
    const int P = meta.at("n_locations").get<int>();
    const int T = meta.at("n_samples").get<int>();
    pb.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
    const int dim = meta.at("grid_dim").get<int>();
    const auto& arr = meta.at("grid_coords_microns");
    pb.grid.resize(arr.size(), dim);
    for (size_t i = 0; i < arr.size(); ++i) {
      if (dim == 1)
        pb.grid(i, 0) = arr[i].get<double>();
      else {
        pb.grid(i, 0) = arr[i].at(0).get<double>();
        pb.grid(i, 1) = arr[i].at(1).get<double>();
      }
    }
    const auto tv = meta.at("times_ms").get<std::vector<double>>();
    pb.times = Eigen::Map<const Eigen::VectorXd>(tv.data(), tv.size());
    pb.total = detail::read_f64(dir / "csd.bin", n_trials, P, T);
    if (meta.value("split", false)) {
      pb.slow = detail::read_f64(dir / "csd_slow.bin", n_trials, P, T);
      pb.fast = detail::read_f64(dir / "csd_fast.bin", n_trials, P, T);
    }
    if (meta.value("has_mean", false))
      pb.mean = detail::read_f64(dir / "csd_mean.bin", 1, P, T)[0];
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("prediction meta.json: " + std::string(e.what()));
  }
  return pb;
}

// One-row-per-channel CSV import, one file per trial.
inline LfpDataset import_csv(const std::vector<std::filesystem::path>& files,
                             const ElectrodeArray& electrodes, double sample_rate_hz) {
  LfpDataset ds;
  ds.electrodes = electrodes;
  ds.sample_rate_hz = sample_rate_hz;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw validation_error("cannot open: " + f.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw validation_error("empty CSV: " + f.string());
    Eigen::MatrixXd m(rows.size(), rows[0].size());
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size())
        throw validation_error("ragged CSV rows in " + f.string());
      for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    }
    ds.trials.push_back(std::move(m));
  }
  ds.validate();
  return ds;
}

}  // namespace gpcsd
