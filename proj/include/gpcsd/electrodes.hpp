#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>

#include "gpcsd/errors.hpp"

namespace gpcsd {

// Observation locations: depths z (microns) for a laminar probe, or (y, z)
// pairs for a planar probe.
struct ElectrodeArray {
  int dim = 1;
  Eigen::MatrixXd coords;  // M x dim, microns

  int count() const { return static_cast<int>(coords.rows()); }

  void validate() const {
    if (dim != 1 && dim != 2) throw validation_error("electrodes: dim must be 1 or 2");
    if (coords.cols() != dim) throw validation_error("electrodes: coords shape mismatch");
    if (!coords.allFinite()) throw validation_error("electrodes: non-finite coordinate");
    if (dim == 1) {
      if (count() < 3) throw validation_error("electrodes: need at least 3 for 1D");
      for (int i = 1; i < count(); ++i)
        if (!(coords(i, 0) > coords(i - 1, 0)))
          throw validation_error("electrodes: 1D coords must be strictly increasing");
    } else if (count() < 2) {
      throw validation_error("electrodes: need at least 2");
    }
  }

  // Minimum and maximum pairwise Euclidean distances.
  double min_spacing() const {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < count(); ++i)
      for (int j = i + 1; j < count(); ++j)
        best = std::min(best, (coords.row(i) - coords.row(j)).norm());
    return best;
  }

  double max_span() const {
    double best = 0.0;
    for (int i = 0; i < count(); ++i)
      for (int j = i + 1; j < count(); ++j)
        best = std::max(best, (coords.row(i) - coords.row(j)).norm());
    return best;
  }

  // Min/max absolute coordinate differences within one dimension
  // (distinct points only), used by the lengthscale prior rules.
  std::pair<double, double> diff_range(int d) const {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int i = 0; i < count(); ++i)
      for (int j = i + 1; j < count(); ++j) {
        const double delta = std::abs(coords(i, d) - coords(j, d));
        if (delta > 0.0) lo = std::min(lo, delta);
        hi = std::max(hi, delta);
      }
    if (!std::isfinite(lo)) throw validation_error("electrodes: degenerate dimension");
    return {lo, hi};
  }

  // Spacing if uniform along a 1D probe, otherwise empty.
  std::optional<double> uniform_pitch() const {
    if (dim != 1 || count() < 2) return std::nullopt;
    const double pitch = coords(1, 0) - coords(0, 0);
    for (int i = 1; i < count(); ++i)
      if (std::abs((coords(i, 0) - coords(i - 1, 0)) - pitch) > 1e-6 * std::abs(pitch))
        return std::nullopt;
    return pitch;
  }

  static ElectrodeArray linear(const Eigen::VectorXd& z) {
    ElectrodeArray a;
    a.dim = 1;
    a.coords = z;
    a.validate();
    return a;
  }

  static ElectrodeArray planar(const Eigen::MatrixXd& yz) {
    ElectrodeArray a;
    a.dim = 2;
    a.coords = yz;
    a.validate();
    return a;
  }
};

}  // namespace gpcsd
