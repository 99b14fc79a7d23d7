#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "gpcsd/analysis.hpp"
#include "gpcsd/rng.hpp"

using namespace gpcsd;

TEST_CASE("evoked mean identities") {
  Rng rng(3);
  Eigen::MatrixXd x(4, 6);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();

  REQUIRE((evoked_mean({x}) - x).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(evoked_mean({x, (-x).eval()}).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd other(5, 6);
  REQUIRE_THROWS_AS(evoked_mean({x, other}), validation_error);
}

TEST_CASE("averaging noisy copies shrinks the deviation ~ sqrt(n)") {
  Rng rng(11);
  Eigen::MatrixXd tpl(3, 40);
  for (int i = 0; i < tpl.size(); ++i) tpl.data()[i] = std::sin(0.3 * i);
  std::vector<Eigen::MatrixXd> noisy;
  double single_rms = 0.0;
  for (int r = 0; r < 100; ++r) {
    Eigen::MatrixXd m = tpl;
    for (int i = 0; i < m.size(); ++i) m.data()[i] += rng.normal();
    if (r == 0) single_rms = std::sqrt((m - tpl).array().square().mean());
    noisy.push_back(std::move(m));
  }
  const double avg_rms =
      std::sqrt((evoked_mean(noisy) - tpl).array().square().mean());
  REQUIRE(single_rms / avg_rms == Catch::Approx(10.0).epsilon(0.35));
}

TEST_CASE("periodogram of an on-grid sinusoid concentrates in one bin") {
  const int N = 128;
  const double fs = 1000.0;
  Eigen::MatrixXd sig(1, N);
  const int kbin = 10;
  for (int t = 0; t < N; ++t) sig(0, t) = std::sin(2.0 * M_PI * kbin * t / N);
  const Spectrum spec = periodogram({sig}, fs);
  REQUIRE(spec.freqs.size() == N / 2 + 1);
  REQUIRE(spec.freqs[kbin] == Catch::Approx(kbin * fs / N));
  const double total = spec.power.row(0).sum();
  REQUIRE(spec.power(0, kbin) / total > 0.99);
}

TEST_CASE("periodogram satisfies Parseval's identity") {
  Rng rng(17);
  for (int N : {64, 101}) {
    Eigen::MatrixXd sig(2, N);
    for (int i = 0; i < sig.size(); ++i) sig.data()[i] = rng.normal();
    const Spectrum spec = periodogram({sig}, 500.0);
    for (int node = 0; node < 2; ++node) {
      const double energy = sig.row(node).array().square().sum();
      REQUIRE(spec.power.row(node).sum() == Catch::Approx(energy).epsilon(1e-8));
    }
  }
}

TEST_CASE("white-noise periodogram is approximately flat after trial averaging") {
  Rng rng(23);
  std::vector<Eigen::MatrixXd> trials;
  for (int r = 0; r < 200; ++r) {
    Eigen::MatrixXd m(1, 100);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    trials.push_back(std::move(m));
  }
  const Spectrum spec = periodogram(trials, 1000.0);
  // Skip the DC and Nyquist bins whose expected power differs by the
  // one-sided doubling.
  Eigen::VectorXd interior = spec.power.row(0).segment(1, spec.freqs.size() - 3);
  std::sort(interior.data(), interior.data() + interior.size());
  const double median = interior[interior.size() / 2];
  REQUIRE(interior.maxCoeff() / median < 5.0);
}

// The narrow band makes the filter transient long (pole radii ~0.996, so a
// ~250-sample e-folding); the interior for phase checks excludes 25% each
// side of a 4 s window.
TEST_CASE("in-band sinusoid phase advances at the expected rate") {
  const double fs = 1000.0, f = 10.0;
  const int N = 4000;
  Eigen::VectorXd x(N);
  for (int t = 0; t < N; ++t) x[t] = std::cos(2.0 * M_PI * f * t / fs);
  const Eigen::VectorXd ph = extract_phase(x, 8.0, 12.0, fs);
  const double step = 2.0 * M_PI * f / fs;
  for (int t = N / 4; t < N - N / 4 - 1; ++t) {
    double d = ph[t + 1] - ph[t];
    if (d < -M_PI) d += 2.0 * M_PI;
    REQUIRE(d == Catch::Approx(step).epsilon(0.01));
  }
}

TEST_CASE("cos and sin phases differ by pi/2") {
  const double fs = 1000.0, f = 10.0;
  const int N = 4000;
  Eigen::VectorXd c(N), s(N);
  for (int t = 0; t < N; ++t) {
    c[t] = std::cos(2.0 * M_PI * f * t / fs);
    s[t] = std::sin(2.0 * M_PI * f * t / fs);
  }
  const Eigen::VectorXd pc = extract_phase(c, 8.0, 12.0, fs);
  const Eigen::VectorXd ps = extract_phase(s, 8.0, 12.0, fs);
  for (int t = N / 4; t < N - N / 4; ++t) {
    double d = pc[t] - ps[t];
    while (d < -M_PI) d += 2.0 * M_PI;
    while (d > M_PI) d -= 2.0 * M_PI;
    REQUIRE(d == Catch::Approx(M_PI / 2.0).margin(0.02));
  }
}

TEST_CASE("out-of-band tones are attenuated by at least 20 dB") {
  const double fs = 1000.0;
  const int N = 2000;
  const auto sos = butter_bandpass(4, 8.0, 12.0, fs);
  // Twice the band-edge distance from the center: 10 +- 4 Hz.
  for (double f : {6.0, 14.0}) {
    Eigen::VectorXd x(N);
    for (int t = 0; t < N; ++t) x[t] = std::sin(2.0 * M_PI * f * t / fs);
    const Eigen::VectorXd y = sosfiltfilt(sos, x);
    double peak = 0.0;
    for (int t = N / 4; t < 3 * N / 4; ++t) peak = std::max(peak, std::abs(y[t]));
    REQUIRE(peak < 0.1);  // >= 20 dB down from unit amplitude
  }
  // Sanity: in-band tone passes near unit amplitude (RMS-based estimate).
  Eigen::VectorXd x(N);
  for (int t = 0; t < N; ++t) x[t] = std::sin(2.0 * M_PI * 10.0 * t / fs);
  const Eigen::VectorXd y = sosfiltfilt(sos, x);
  const double amp =
      std::sqrt(2.0 * y.segment(N / 4, N / 2).array().square().mean());
  REQUIRE(amp == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("band validation") {
  REQUIRE_THROWS_AS(butter_bandpass(4, 8.0, 600.0, 1000.0), validation_error);
  REQUIRE_THROWS_AS(butter_bandpass(4, -1.0, 12.0, 1000.0), validation_error);
  REQUIRE_THROWS_AS(extract_phase(Eigen::VectorXd::Zero(10), 8.0, 12.0, 1000.0),
                    validation_error);  // shorter than the padding
}

TEST_CASE("plv identities and null level") {
  Rng rng(31);
  Eigen::VectorXd a(500);
  for (int i = 0; i < a.size(); ++i) a[i] = rng.uniform(-M_PI, M_PI);
  REQUIRE(plv(a, a) == Catch::Approx(1.0).epsilon(1e-12));

  const Eigen::VectorXd b = a.array() + 1.234;
  REQUIRE(plv(a, b) == Catch::Approx(1.0).epsilon(1e-9));

  Eigen::VectorXd u(10000), v(10000);
  for (int i = 0; i < u.size(); ++i) {
    u[i] = rng.uniform(-M_PI, M_PI);
    v[i] = rng.uniform(-M_PI, M_PI);
  }
  REQUIRE(plv(u, v) < 0.03);

  REQUIRE_THROWS_AS(plv(Eigen::VectorXd(), Eigen::VectorXd()), validation_error);
}

TEST_CASE("plv matrix is symmetric with unit diagonal") {
  Rng rng(37);
  PhaseTensor tensor;
  tensor.phases.resize(50, 4);
  for (int i = 0; i < tensor.phases.size(); ++i)
    tensor.phases.data()[i] = rng.uniform(-M_PI, M_PI);
  const Eigen::MatrixXd m = plv_matrix(tensor);
  REQUIRE((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 4; ++i) REQUIRE(m(i, i) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("phase tensor rejects edge-region time indices") {
  Rng rng(41);
  std::vector<Eigen::MatrixXd> trials;
  for (int r = 0; r < 2; ++r) {
    Eigen::MatrixXd m(2, 400);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    trials.push_back(std::move(m));
  }
  REQUIRE_THROWS_AS(phase_tensor(trials, 8.0, 12.0, 1000.0, 3), validation_error);
  REQUIRE_THROWS_AS(phase_tensor(trials, 8.0, 12.0, 1000.0, 398), validation_error);
  const PhaseTensor tensor = phase_tensor(trials, 8.0, 12.0, 1000.0, 200);
  REQUIRE(tensor.phases.rows() == 2);
  REQUIRE(tensor.phases.cols() == 2);
  REQUIRE((tensor.phases.array().abs() <= M_PI).all());
}

TEST_CASE("component periodograms approximately add when bands are separated") {
  Rng rng(43);
  const int N = 1024;
  Eigen::MatrixXd slow(1, N), fast(1, N), total(1, N);
  for (int t = 0; t < N; ++t) {
    // Slightly off-grid tones so the additivity is approximate, not exact.
    slow(0, t) = std::sin(2.0 * M_PI * 5.3 * t / N) + 0.5 * std::sin(2.0 * M_PI * 8.1 * t / N);
    fast(0, t) = 0.8 * std::sin(2.0 * M_PI * 201.7 * t / N);
    total(0, t) = slow(0, t) + fast(0, t);
  }
  const Spectrum st = periodogram({total}, 1000.0);
  const Spectrum ss = periodogram({slow}, 1000.0);
  const Spectrum sf = periodogram({fast}, 1000.0);
  const Eigen::VectorXd sum = ss.power.row(0) + sf.power.row(0);
  const double rel = (st.power.row(0).transpose() - sum).norm() / sum.norm();
  REQUIRE(rel < 0.05);
}
