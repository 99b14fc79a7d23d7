#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

#include "gpcsd/errors.hpp"

namespace gpcsd {

// Elementwise mean across trials.
inline Eigen::MatrixXd evoked_mean(const std::vector<Eigen::MatrixXd>& trials) {
  if (trials.empty()) throw validation_error("evoked_mean: no trials");
  Eigen::MatrixXd acc = trials[0];
  for (size_t r = 1; r < trials.size(); ++r) {
    if (trials[r].rows() != acc.rows() || trials[r].cols() != acc.cols())
      throw validation_error("evoked_mean: misaligned trials");
    acc += trials[r];
  }
  return acc / static_cast<double>(trials.size());
}

namespace detail {

inline std::vector<std::complex<double>> dft(const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  std::vector<std::complex<double>> X(n);
  const double w = -2.0 * M_PI / n;
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int t = 0; t < n; ++t) acc += x[t] * std::polar(1.0, w * k * t);
    X[k] = acc;
  }
  return X;
}

}  // namespace detail

// Trial-averaged one-sided periodogram. Normalized so that the sum over
// frequency bins equals the signal energy sum_n x[n]^2 (Parseval).
struct Spectrum {
  Eigen::VectorXd freqs;  // Hz
  Eigen::MatrixXd power;  // nodes x freqs, trial-averaged
};

inline Spectrum periodogram(const std::vector<Eigen::MatrixXd>& trials, double sample_rate_hz) {
  if (trials.empty()) throw validation_error("periodogram: no trials");
  if (!(sample_rate_hz > 0.0)) throw validation_error("periodogram: bad sample rate");
  const int nodes = static_cast<int>(trials[0].rows());
  const int n = static_cast<int>(trials[0].cols());
  const int nf = n / 2 + 1;
  Spectrum spec;
  spec.freqs.resize(nf);
  for (int k = 0; k < nf; ++k) spec.freqs[k] = k * sample_rate_hz / n;
  spec.power = Eigen::MatrixXd::Zero(nodes, nf);
  for (const auto& trial : trials) {
    if (trial.rows() != nodes || trial.cols() != n)
      throw validation_error("periodogram: misaligned trials");
    for (int i = 0; i < nodes; ++i) {
      const auto X = detail::dft(trial.row(i).transpose());
      for (int k = 0; k < nf; ++k) {
        double p = std::norm(X[k]) / n;
        if (k != 0 && !(n % 2 == 0 && k == n / 2)) p *= 2.0;
        spec.power(i, k) += p;
      }
    }
  }
  spec.power /= static_cast<double>(trials.size());
  return spec;
}

// ---------------------------------------------------------------------------
// Butterworth bandpass + zero-phase filtering
// ---------------------------------------------------------------------------

struct SosSection {
  double b0, b1, b2, a1, a2;  // a0 normalized to 1
};

// Bandpass from an order-n Butterworth analog prototype via the standard
// lowpass-to-bandpass transform and bilinear mapping with prewarping.
// Yields 2n poles arranged as n second-order sections, each carrying one
// zero at z = 1 and one at z = -1; overall gain is unity at the band
// center.
inline std::vector<SosSection> butter_bandpass(int order, double f_lo, double f_hi,
                                               double sample_rate_hz) {
  if (!(f_lo > 0.0) || !(f_hi > f_lo)) throw validation_error("butter: need 0 < lo < hi");
  if (!(f_hi < 0.5 * sample_rate_hz))
    throw validation_error("butter: band edge must be below Nyquist");
  const double fs2 = 2.0 * sample_rate_hz;
  const double wlo = fs2 * std::tan(M_PI * f_lo / sample_rate_hz);
  const double whi = fs2 * std::tan(M_PI * f_hi / sample_rate_hz);
  const double w0 = std::sqrt(wlo * whi);
  const double bw = whi - wlo;

  using cd = std::complex<double>;
  auto bilinear = [fs2](cd s) { return (cd(fs2, 0.0) + s) / (cd(fs2, 0.0) - s); };

  std::vector<SosSection> sos;
  for (int k = 0; k < order; ++k) {
    const double ang = M_PI * (2.0 * k + order + 1.0) / (2.0 * order);
    const cd p = std::polar(1.0, ang);
    if (p.imag() < -1e-12) continue;  // covered by the conjugate
    const cd s = 0.5 * bw * p;
    const cd disc = std::sqrt(s * s - cd(w0 * w0, 0.0));
    const cd z1 = bilinear(s + disc), z2 = bilinear(s - disc);
    if (std::abs(p.imag()) <= 1e-12) {
      // Real prototype pole (odd order): its two bandpass poles form one
      // conjugate or real pair.
      sos.push_back({1.0, 0.0, -1.0, -(z1 + z2).real(), (z1 * z2).real()});
    } else {
      // Complex prototype pole: each bandpass pole pairs with its mirror
      // from the conjugate prototype pole.
      sos.push_back({1.0, 0.0, -1.0, -2.0 * z1.real(), std::norm(z1)});
      sos.push_back({1.0, 0.0, -1.0, -2.0 * z2.real(), std::norm(z2)});
    }
  }

  // Normalize to unit gain at the (digital) center frequency.
  const double wc = 2.0 * std::atan(w0 / fs2);
  const cd z = std::polar(1.0, wc);
  const cd z2 = z * z;
  cd h(1.0, 0.0);
  for (const auto& s : sos) h *= (s.b0 * z2 + s.b1 * z + s.b2) / (z2 + s.a1 * z + s.a2);
  const double g = std::pow(1.0 / std::abs(h), 1.0 / sos.size());
  for (auto& s : sos) {
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
  }
  return sos;
}

namespace detail {

// Direct-form II transposed, one section, with initial state.
inline void sosfilt_section(const SosSection& s, Eigen::VectorXd& x, double z0, double z1) {
  for (int n = 0; n < x.size(); ++n) {
    const double xn = x[n];
    const double yn = s.b0 * xn + z0;
    z0 = s.b1 * xn - s.a1 * yn + z1;
    z1 = s.b2 * xn - s.a2 * yn;
    x[n] = yn;
  }
}

// Steady-state initial conditions for a constant input level, cascaded
// through the sections.
inline Eigen::VectorXd sosfilt(const std::vector<SosSection>& sos, const Eigen::VectorXd& x,
                               double ic_level) {
  Eigen::VectorXd y = x;
  double level = ic_level;
  for (const auto& s : sos) {
    const double denom = 1.0 + s.a1 + s.a2;
    const double K = denom != 0.0 ? (s.b0 + s.b1 + s.b2) / denom : 0.0;
    const double z0 = (K - s.b0) * level;
    const double z1 = (s.b2 - s.a2 * K) * level;
    sosfilt_section(s, y, z0, z1);
    level *= K;
  }
  return y;
}

}  // namespace detail

// Forward-backward (zero-phase) filtering with odd-reflection padding of
// length 3 * (2 * n_sections + 1), mirroring common practice.
inline Eigen::VectorXd sosfiltfilt(const std::vector<SosSection>& sos,
                                   const Eigen::VectorXd& x) {
  const int padlen = 3 * (2 * static_cast<int>(sos.size()) + 1);
  const int n = static_cast<int>(x.size());
  if (n <= padlen)
    throw validation_error("sosfiltfilt: signal shorter than padding length");
  Eigen::VectorXd ext(n + 2 * padlen);
  for (int i = 0; i < padlen; ++i) ext[i] = 2.0 * x[0] - x[padlen - i];
  ext.segment(padlen, n) = x;
  for (int i = 0; i < padlen; ++i) ext[padlen + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  Eigen::VectorXd y = detail::sosfilt(sos, ext, ext[0]);
  y.reverseInPlace();
  y = detail::sosfilt(sos, y, y[0]);
  y.reverseInPlace();
  return y.segment(padlen, n);
}

// Analytic signal via the DFT method; returns per-sample phase angles.
inline Eigen::VectorXd hilbert_phase(const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  const auto X = detail::dft(x);
  std::vector<std::complex<double>> H(n, {0.0, 0.0});
  H[0] = X[0];
  for (int k = 1; k < (n + 1) / 2; ++k) H[k] = 2.0 * X[k];
  if (n % 2 == 0) H[n / 2] = X[n / 2];
  Eigen::VectorXd phase(n);
  const double w = 2.0 * M_PI / n;
  for (int t = 0; t < n; ++t) {
    std::complex<double> acc(0.0, 0.0);
    for (int k = 0; k <= n / 2; ++k) acc += H[k] * std::polar(1.0, w * k * t);
    acc /= static_cast<double>(n);
    phase[t] = std::atan2(acc.imag(), acc.real());
  }
  return phase;
}

// Band (center +- half-width) -> zero-phase 4th-order Butterworth bandpass,
// then instantaneous phase from the Hilbert transform.
inline Eigen::VectorXd extract_phase(const Eigen::VectorXd& x, double f_lo, double f_hi,
                                     double sample_rate_hz) {
  const auto sos = butter_bandpass(4, f_lo, f_hi, sample_rate_hz);
  return hilbert_phase(sosfiltfilt(sos, x));
}

// ---------------------------------------------------------------------------
// Phase locking value
// ---------------------------------------------------------------------------

// Per-trial phase angles of every node at one (band, time index).
struct PhaseTensor {
  Eigen::MatrixXd phases;  // trials x nodes, angles in (-pi, pi]
  double band_lo = 0.0, band_hi = 0.0;
  int time_index = 0;
};

inline double plv(const Eigen::VectorXd& phases_a, const Eigen::VectorXd& phases_b) {
  if (phases_a.size() != phases_b.size() || phases_a.size() == 0)
    throw validation_error("plv: need matching nonempty trial vectors");
  std::complex<double> acc(0.0, 0.0);
  for (int r = 0; r < phases_a.size(); ++r)
    acc += std::polar(1.0, phases_a[r] - phases_b[r]);
  return std::abs(acc) / static_cast<double>(phases_a.size());
}

inline Eigen::MatrixXd plv_matrix(const PhaseTensor& tensor) {
  const int nodes = static_cast<int>(tensor.phases.cols());
  if (tensor.phases.rows() == 0) throw validation_error("plv_matrix: no trials");
  Eigen::MatrixXd out(nodes, nodes);
  for (int i = 0; i < nodes; ++i)
    for (int j = i; j < nodes; ++j) {
      const double v = plv(tensor.phases.col(i), tensor.phases.col(j));
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

// Builds the tensor by filtering each trial/node series and reading the
// phase at time_index. Indices within the first or last 5% of samples are
// rejected: Hilbert edge effects are excluded from phase statistics.
inline PhaseTensor phase_tensor(const std::vector<Eigen::MatrixXd>& trials, double f_lo,
                                double f_hi, double sample_rate_hz, int time_index) {
  if (trials.empty()) throw validation_error("phase_tensor: no trials");
  const int nodes = static_cast<int>(trials[0].rows());
  const int n = static_cast<int>(trials[0].cols());
  const int edge = static_cast<int>(std::ceil(0.05 * n));
  if (time_index < edge || time_index >= n - edge)
    throw validation_error("phase_tensor: time index falls in the excluded 5% edge region");
  PhaseTensor tensor;
  tensor.band_lo = f_lo;
  tensor.band_hi = f_hi;
  tensor.time_index = time_index;
  tensor.phases.resize(trials.size(), nodes);
  for (size_t r = 0; r < trials.size(); ++r) {
    if (trials[r].rows() != nodes || trials[r].cols() != n)
      throw validation_error("phase_tensor: misaligned trials");
    for (int i = 0; i < nodes; ++i) {
      const Eigen::VectorXd ph =
          extract_phase(trials[r].row(i).transpose(), f_lo, f_hi, sample_rate_hz);
      tensor.phases(r, i) = ph[time_index];
    }
  }
  return tensor;
}

}  // namespace gpcsd
