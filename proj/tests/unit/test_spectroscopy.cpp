#include <doctest.h>

#include <cmath>
#include <numbers>

#include "kpoqa/error.hpp"
#include "kpoqa/spectroscopy.hpp"

using namespace kpoqa;

namespace {

constexpr double pi = std::numbers::pi;

SignalGrid synthetic(const std::vector<double>& omegas, double dtau, std::size_t n, double rabi) {
  SignalGrid g;
  g.omega = omegas;
  g.tau = uniform_grid(0.0, dtau * static_cast<double>(n), n);
  g.values.resize(static_cast<Eigen::Index>(omegas.size()), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < g.values.rows(); ++i)
    for (Eigen::Index k = 0; k < g.values.cols(); ++k) g.values(i, k) = 0.5 * (1.0 - std::cos(rabi * g.tau[k]));
  return g;
}

Eigen::Index peak_bin(const Spectrum& s, Eigen::Index row, bool positive) {
  Eigen::Index best = -1;
  for (Eigen::Index j = 0; j < s.power.cols(); ++j) {
    if ((s.Omega[j] > 0.0) != positive || s.Omega[j] == 0.0) continue;
    if (best < 0 || s.power(row, j) > s.power(row, best)) best = j;
  }
  return best;
}

struct Benchmark {
  KpoModel model{KpoNetworkParams::single(1.0, 1.0, 1.0, 1.0), FockSpace({5})};
  ProtocolSchedule schedule = ProtocolSchedule::with_frozen_a(0.5, 500.0);
  ProtocolOptions options;
  Benchmark() {
    schedule.lambda = 0.1;
    options.initial = InitialState::driver_ground;
    options.anneal.dt = 0.002;
    options.anneal.sample_stride = 0;
    options.drive.dt = 0.05;
  }
  ProtocolRunner runner() const { return ProtocolRunner(model, schedule, number(model.space(), 0), options); }
};

}  // namespace

TEST_CASE("grids") {
  const auto u = uniform_grid(0.0, 10.0, 4);
  CHECK(u == std::vector<double>{0.0, 2.5, 5.0, 7.5});
  const auto l = linspace(1.0, 2.0, 5);
  CHECK(l.front() == 1.0);
  CHECK(l.back() == 2.0);
  CHECK(l[2] == doctest::Approx(1.5));
  CHECK(linspace(3.0, 4.0, 1) == std::vector<double>{3.0});
  CHECK_THROWS_AS(uniform_grid(1.0, 0.0, 3), InvalidArgument);
}

TEST_CASE("constant series has an empty spectrum") {
  SignalGrid g = synthetic({1.0}, 0.5, 64, 0.0);
  g.values.setConstant(0.7);
  const Spectrum s = power_spectrum(g);
  CHECK(s.power.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("on-bin tone gives a single symmetric peak") {
  const std::size_t n = 256;
  const double dtau = 0.5;
  const double bin = 2.0 * pi / (static_cast<double>(n) * dtau);
  const double rabi = 12.0 * bin;
  const Spectrum s = power_spectrum(synthetic({1.0}, dtau, n, rabi));
  CHECK(s.bin_width == doctest::Approx(bin));
  CHECK(s.Omega.size() == n);
  CHECK(s.Omega[n / 2] == 0.0);
  const Eigen::Index pos = peak_bin(s, 0, true), neg = peak_bin(s, 0, false);
  CHECK(s.Omega[pos] == doctest::Approx(rabi));
  CHECK(s.Omega[neg] == doctest::Approx(-rabi));
  CHECK(s.power(0, pos) == doctest::Approx(s.power(0, neg)).epsilon(1e-12));
  for (Eigen::Index j = 0; j < s.power.cols(); ++j) CHECK(s.power(0, j) >= 0.0);
  // The Hann main lobe spans two bins either side; everything else is sidelobe.
  for (Eigen::Index j = 0; j < s.power.cols(); ++j)
    if (std::abs(j - pos) > 2 && std::abs(j - neg) > 2) CHECK(s.power(0, j) <= 1e-2 * s.power(0, pos));

  // Without the window the bare DFT of a cosine: |sum e^{i(w-W)t}| dtau / sqrt(2 pi) = n dtau / (4 sqrt(2 pi)).
  SpectrumOptions raw;
  raw.hann_window = false;
  const Spectrum r = power_spectrum(synthetic({1.0}, dtau, n, rabi), raw);
  CHECK(r.power(0, peak_bin(r, 0, true)) == doctest::Approx(n * dtau / (4.0 * std::sqrt(2.0 * pi))).epsilon(1e-10));
}

TEST_CASE("off-bin tone is located within one bin") {
  const std::size_t n = 300;
  const double dtau = 0.4;
  const double bin = 2.0 * pi / (static_cast<double>(n) * dtau);
  for (double frac : {0.13, 0.5, 0.77}) {
    const double rabi = (9.0 + frac) * bin;
    const Spectrum s = power_spectrum(synthetic({1.0}, dtau, n, rabi));
    CHECK(std::abs(s.Omega[peak_bin(s, 0, true)] - rabi) <= bin);
    const RabiCurve c = extract_rabi(s);
    CHECK(std::abs(c.Omega[0] - rabi) <= 0.5 * bin);
  }
}

TEST_CASE("power spectrum rejects a non-uniform grid") {
  SignalGrid g = synthetic({1.0}, 0.5, 16, 1.0);
  g.tau[5] += 0.1;
  CHECK_THROWS_AS(power_spectrum(g), InvalidArgument);
}

TEST_CASE("banded extraction ignores a stronger line outside the band") {
  const std::size_t n = 512;
  const double dtau = 0.5;
  const double bin = 2.0 * pi / (static_cast<double>(n) * dtau);
  SignalGrid g = synthetic({1.0}, dtau, n, 0.0);
  const double weak = 20.0 * bin, strong = 60.0 * bin;
  for (Eigen::Index k = 0; k < g.values.cols(); ++k)
    g.values(0, k) = 0.2 * std::cos(weak * g.tau[k]) + std::cos(strong * g.tau[k]);
  const Spectrum s = power_spectrum(g);
  CHECK(extract_rabi(s).Omega[0] == doctest::Approx(strong).epsilon(1e-6));
  ExtractionOptions band;
  band.predicted = {weak + 0.7 * bin};
  CHECK(extract_rabi(s, band).Omega[0] == doctest::Approx(weak).epsilon(1e-6));
  ExtractionOptions cap;
  cap.omega_max = 40.0 * bin;
  CHECK(extract_rabi(s, cap).Omega[0] == doctest::Approx(weak).epsilon(1e-6));
  ExtractionOptions wrong;
  wrong.predicted = {1.0, 2.0};
  CHECK_THROWS_AS(extract_rabi(s, wrong), InvalidArgument);
}

TEST_CASE("estimate inverts a synthetic dispersion") {
  const double lambda = 0.1, m = 0.8, gap = 1.037;
  const auto w = linspace(0.9, 1.2, 31);
  RabiCurve c;
  c.omega = w;
  c.Omega = predicted_line(w, lambda, m, gap);
  const AdiabaticEstimate e = estimate_condition(c, lambda);
  const double step = w[1] - w[0];
  CHECK(std::abs(e.gap_est - gap) <= step);
  CHECK(std::abs(e.numerator_est - m) <= m * 0.05);
  CHECK(e.value_est == doctest::Approx(e.numerator_est / (e.gap_est * e.gap_est)));
  CHECK(std::abs(e.value_est - m / (gap * gap)) <= 0.05 * m / (gap * gap));

  RabiCurve edge;
  edge.omega = linspace(1.1, 1.3, 11);
  edge.Omega = predicted_line(edge.omega, lambda, m, gap);
  CHECK_THROWS_AS(estimate_condition(edge, lambda), InconclusiveEstimate);
  CHECK_THROWS_AS(estimate_condition(c, 0.0), InvalidArgument);
}

TEST_CASE("protocol without drive is stationary") {
  Benchmark b;
  b.schedule.lambda = 0.0;
  b.schedule.t_ann = 2000.0;
  const ProtocolRunner r = b.runner();
  CHECK(r.ground_fidelity() >= 0.999);
  const DriveSeries s = r.drive_series(1.0, 0.0, 25.0, 20);
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  CHECK(*hi - *lo <= 1e-3);
}

TEST_CASE("resonant drive follows the two-level Rabi form") {
  Benchmark b;
  b.schedule.lambda = 0.02;
  const ProtocolRunner r = b.runner();
  const EigenSystem es = eigensystem(b.model.qa_hamiltonian_at(b.schedule, b.schedule.s1));
  const double gap = es.energies(1) - es.energies(0);
  const double rabi = 0.02 * std::abs(es.element(b.model.conv_derivative(), 1, 0));
  // Watch the population of level 1 directly: the cross terms of O between the two
  // levels oscillate at the gap and are not part of the slow envelope.
  const Vector e1 = es.vectors.col(1);
  const Operator proj(b.model.space(), e1 * e1.adjoint());
  const ProtocolRunner p1(b.model, b.schedule, proj, b.options);
  const double period = 2.0 * pi / rabi;
  const DriveSeries s = p1.drive_series(gap, 0.0, period / 40.0, 41);
  double worst = 0.0;
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    const double tau = period / 40.0 * static_cast<double>(k);
    worst = std::max(worst, std::abs(s.values[k] - 0.5 * (1.0 - std::cos(rabi * tau))));
  }
  CHECK(worst <= 0.05);
  CHECK(r.ground_fidelity() >= 0.999);
}

TEST_CASE("sweep matches run_point and does not depend on thread count") {
  Benchmark b;
  b.schedule.t_ann = 50.0;
  const ProtocolRunner r = b.runner();
  const auto w = linspace(0.8, 1.2, 5);
  const auto tau = uniform_grid(0.0, 40.0, 8);
  const SignalGrid one = sweep(r, w, tau, 1);
  const SignalGrid four = sweep(r, w, tau, 4);
  CHECK((one.values - four.values).cwiseAbs().maxCoeff() == 0.0);

  const SignalGrid single = sweep(r, {w[2]}, {tau[3]}, 1);
  CHECK(single.values.size() == 1);
  ProtocolSchedule sched = b.schedule;
  CHECK(single.values(0, 0) == doctest::Approx(run_point(b.model, sched, w[2], tau[3], number(b.model.space(), 0), b.options)).epsilon(1e-12));
  CHECK(single.values(0, 0) == doctest::Approx(one.values(2, 3)).epsilon(1e-9));
  CHECK_THROWS_AS(sweep(r, {}, tau, 1), InvalidArgument);
}

TEST_CASE("reduced drive basis agrees with the full basis") {
  Benchmark b;
  b.schedule.t_ann = 50.0;
  b.schedule.lambda = 0.02;
  const ProtocolRunner full = b.runner();
  b.options.energy_window = 100.0;
  const ProtocolRunner all_levels = b.runner();
  CHECK(all_levels.drive_dim() == 5);
  CHECK(all_levels.leakage() <= 1e-12);
  const DriveSeries x = full.drive_series(1.0, 0.0, 5.0, 10);
  const DriveSeries y = all_levels.drive_series(1.0, 0.0, 5.0, 10);
  for (std::size_t k = 0; k < x.values.size(); ++k) CHECK(x.values[k] == doctest::Approx(y.values[k]).epsilon(1e-8));
}

TEST_CASE("observables") {
  const FockSpace s({3, 3});
  CHECK((make_observable(s, {"n", 1}) - number(s, 1)).matrix().norm() == 0.0);
  CHECK((make_observable(s, {"parity", 0}) - parity_total(s)).matrix().norm() == 0.0);
  CHECK((make_observable(s, {"n_total", 0}) - total_number(s)).matrix().norm() == 0.0);
  CHECK_THROWS_AS(make_observable(s, {"q", 0}), InvalidArgument);
  CHECK_THROWS_AS(make_observable(s, {"n", 2}), InvalidArgument);
}
