#include "kpoqa/spectroscopy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <fftw3.h>

#include "kpoqa/error.hpp"
#include "kpoqa/log.hpp"

namespace kpoqa {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double trace_product(const Matrix& op, const Matrix& rho) {
  return (op.transpose().cwiseProduct(rho)).sum().real();
}

double vector_expectation(const Matrix& op, const Vector& psi) { return psi.dot(op * psi).real(); }

bool is_uniform(const std::vector<double>& grid, double& step) {
  step = grid.size() > 1 ? grid[1] - grid[0] : 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double expected = grid[0] + static_cast<double>(k) * step;
    if (std::abs(grid[k] - expected) > 1e-9 * std::max(1.0, std::abs(grid[k]))) return false;
  }
  return grid.size() < 2 || step > 0.0;
}

}  // namespace

std::string ObservableSpec::label() const {
  if (kind == "n_total" || kind == "parity") return kind;
  return kind + "_" + std::to_string(mode);
}

Operator make_observable(const FockSpace& space, const ObservableSpec& spec) {
  if (spec.kind == "n") return number(space, spec.mode);
  if (spec.kind == "x") return quad_x(space, spec.mode);
  if (spec.kind == "p") return quad_p(space, spec.mode);
  if (spec.kind == "n_total") return total_number(space);
  if (spec.kind == "parity") return parity_total(space);
  throw InvalidArgument("unknown observable kind '" + spec.kind + "'");
}

ProtocolRunner::ProtocolRunner(const KpoModel& model, const ProtocolSchedule& schedule, const Operator& observable,
                               ProtocolOptions options)
    : schedule_(schedule), options_(std::move(options)) {
  schedule_.validate();
  const FockSpace& space = model.space();
  require_same_space(space, observable.space(), "ProtocolRunner");

  Vector psi0;
  if (options_.initial == InitialState::vacuum) {
    psi0 = StateVector::vacuum(space).amplitudes();
  } else {
    psi0 = eigensystem(model.driver()).vectors.col(0);
  }

  const MatrixHamiltonian anneal = MatrixHamiltonian::from(model.annealing_hamiltonian(schedule_));
  const double t1 = schedule_.t1();
  const auto lindblad = model.lindblad_ops();
  Matrix rho_full;
  Vector psi_full;
  if (options_.open_system) {
    rho_full = propagate_density(anneal, to_sparse(lindblad), psi0 * psi0.adjoint(), 0.0, t1, options_.anneal);
  } else {
    psi_full = propagate_vector(anneal, psi0, 0.0, t1, options_.anneal);
  }

  const Operator h1 = model.qa_hamiltonian_at(schedule_, schedule_.s1);
  const EigenSystem es = eigensystem(h1);
  const Operator parity = parity_total(space);
  // Cat doublets are degenerate to ~1e-8, so the whole lowest manifold counts as ground.
  for (Eigen::Index m = 0; m < es.size() && es.energies(m) - es.energies(0) <= 1e-6; ++m) {
    const Vector g = es.vectors.col(m);
    ground_fidelity_ += options_.open_system ? g.dot(rho_full * g).real() : std::norm(g.dot(psi_full));
  }
  parity_s1_ = options_.open_system ? trace_product(parity.matrix(), rho_full)
                                    : vector_expectation(parity.matrix(), psi_full);

  const double e0 = es.energies(0);
  const Matrix generator = (ProtocolSchedule::fdot * schedule_.lambda) * (model.driver() - model.problem()).matrix();
  if (options_.energy_window > 0.0) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index m = 0; m < es.size(); ++m)
      if (es.energies(m) - e0 <= options_.energy_window) keep.push_back(m);
    Matrix v(space.dim(), static_cast<Eigen::Index>(keep.size()));
    Eigen::VectorXd e(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
      v.col(static_cast<Eigen::Index>(j)) = es.vectors.col(keep[j]);
      e(static_cast<Eigen::Index>(j)) = es.energies(keep[j]) - e0;
    }
    h0_ = e.cast<cplx>().asDiagonal();
    drive_op_ = v.adjoint() * generator * v;
    observable_ = v.adjoint() * observable.matrix() * v;
    parity_ = v.adjoint() * parity.matrix() * v;
    for (const auto& l : lindblad) {
      Matrix lr = v.adjoint() * l.matrix() * v;
      jumps_.push_back(lr.sparseView(cplx(0.0), 1e-300));
    }
    if (options_.open_system) {
      rho_ = v.adjoint() * rho_full * v;
      leakage_ = 1.0 - rho_.trace().real();
    } else {
      psi_ = v.adjoint() * psi_full;
      leakage_ = 1.0 - psi_.squaredNorm();
    }
    if (leakage_ > 1e-4) {
      std::ostringstream os;
      os << "reduced drive basis (" << keep.size() << " states) misses " << leakage_ << " of the population";
      warn(os.str());
    }
  } else {
    h0_ = h1.matrix() - e0 * Matrix::Identity(space.dim(), space.dim());
    drive_op_ = generator;
    observable_ = observable.matrix();
    parity_ = parity.matrix();
    jumps_ = to_sparse(lindblad);
    rho_ = std::move(rho_full);
    psi_ = std::move(psi_full);
  }
}

DriveSeries ProtocolRunner::drive_series(double omega, double tau0, double dtau, std::size_t count) const {
  if (count == 0) throw InvalidArgument("empty tau grid");
  if (tau0 < 0.0 || (count > 1 && !(dtau > 0.0))) throw InvalidArgument("tau grid must be non-negative and ascending");

  MatrixHamiltonian h;
  h.add(h0_);
  if (schedule_.lambda != 0.0) h.add(drive_op_, [omega](double t) { return std::cos(omega * t); }, 1.0);

  IntegratorConfig cfg = options_.drive;
  if (omega > 0.0 && options_.steps_per_period > 0)
    cfg.dt = std::min(cfg.dt, kTwoPi / omega / options_.steps_per_period);
  if (options_.step_ratio > 0.0 && h.norm_bound() > 0.0)
    cfg.dt = std::min(cfg.dt, options_.step_ratio / h.norm_bound());
  int stride = 1;
  if (count > 1) {
    stride = static_cast<int>(std::ceil(dtau / cfg.dt - 1e-9));
    stride = std::max(stride, 1);
    cfg.dt = dtau / stride;
  }
  const double t_last = tau0 + static_cast<double>(count - 1) * dtau;

  DriveSeries out;
  out.values.reserve(count);
  double parity_ref = 0.0;
  auto record = [&](double value, double p) {
    out.values.push_back(value);
    out.parity_drift = std::max(out.parity_drift, std::abs(p - parity_ref));
  };

  IntegratorConfig lead = cfg;
  lead.sample_stride = 0;
  cfg.sample_stride = stride;
  if (options_.open_system) {
    Matrix rho = rho_;
    if (tau0 > 0.0) rho = propagate_density(h, jumps_, rho, 0.0, tau0, lead);
    // Drift is measured from the drive start, even if the first sample is later.
    parity_ref = trace_product(parity_, rho_);
    propagate_density(h, jumps_, rho, tau0, t_last, cfg,
                      [&](double, const Matrix& r) { record(trace_product(observable_, r), trace_product(parity_, r)); });
  } else {
    Vector psi = psi_;
    if (tau0 > 0.0) psi = propagate_vector(h, psi, 0.0, tau0, lead);
    parity_ref = vector_expectation(parity_, psi_);
    propagate_vector(h, psi, tau0, t_last, cfg, [&](double, const Vector& v) {
      record(vector_expectation(observable_, v), vector_expectation(parity_, v));
    });
  }
  if (out.values.size() != count) throw InvariantViolation("drive sampling produced the wrong number of points");
  return out;
}

double ProtocolRunner::run_point(double omega, double tau) const { return drive_series(omega, tau, 1.0, 1).values.front(); }

double run_point(const KpoModel& model, const ProtocolSchedule& schedule, double omega, double tau,
                 const Operator& observable, const ProtocolOptions& options) {
  ProtocolSchedule s = schedule;
  s.omega = omega;
  s.tau = tau;
  return ProtocolRunner(model, s, observable, options).run_point(omega, tau);
}

std::vector<double> uniform_grid(double start, double stop, std::size_t count) {
  if (count == 0) throw InvalidArgument("grid needs at least one point");
  if (!(stop > start) && count > 1) throw InvalidArgument("grid stop must exceed start");
  std::vector<double> g(count);
  const double step = (stop - start) / static_cast<double>(count);
  for (std::size_t k = 0; k < count; ++k) g[k] = start + static_cast<double>(k) * step;
  return g;
}

std::vector<double> linspace(double start, double stop, std::size_t count) {
  if (count == 0) throw InvalidArgument("grid needs at least one point");
  if (count == 1) return {start};
  std::vector<double> g(count);
  const double step = (stop - start) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) g[k] = start + static_cast<double>(k) * step;
  g.back() = stop;
  return g;
}

SignalGrid sweep(const ProtocolRunner& runner, const std::vector<double>& omega_grid,
                 const std::vector<double>& tau_grid, int threads) {
  if (omega_grid.empty() || tau_grid.empty()) throw InvalidArgument("sweep grids must be non-empty");
  double dtau = 0.0;
  if (!is_uniform(tau_grid, dtau)) throw InvalidArgument("tau grid must be uniform and ascending");

  SignalGrid grid;
  grid.omega = omega_grid;
  grid.tau = tau_grid;
  grid.values.resize(static_cast<Eigen::Index>(omega_grid.size()), static_cast<Eigen::Index>(tau_grid.size()));
  grid.s1 = runner.schedule().s1;
  grid.open_system = runner.options().open_system;
  std::vector<double> drift(omega_grid.size(), 0.0);

  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::vector<std::pair<std::size_t, std::string>> failures;
  bool invariant_failure = false;

  auto worker = [&]() {
    for (std::size_t i = next++; i < omega_grid.size(); i = next++) {
      try {
        DriveSeries s = runner.drive_series(omega_grid[i], tau_grid.front(), dtau, tau_grid.size());
        for (std::size_t k = 0; k < s.values.size(); ++k)
          grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = s.values[k];
        drift[i] = s.parity_drift;
      } catch (const InvariantViolation& e) {
        std::lock_guard lock(failure_mutex);
        failures.emplace_back(i, e.what());
        invariant_failure = true;
      } catch (const std::exception& e) {
        std::lock_guard lock(failure_mutex);
        failures.emplace_back(i, e.what());
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(omega_grid.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (!failures.empty()) {
    std::sort(failures.begin(), failures.end());
    std::ostringstream os;
    os << failures.size() << " sweep point(s) failed:";
    for (const auto& [i, msg] : failures) os << "\n  omega[" << i << "] = " << omega_grid[i] << ": " << msg;
    if (invariant_failure) throw InvariantViolation(os.str());
    throw Error(os.str());
  }
  grid.max_parity_drift = *std::max_element(drift.begin(), drift.end());
  return grid;
}

Spectrum power_spectrum(const SignalGrid& grid, const SpectrumOptions& options) {
  double dtau = 0.0;
  if (!is_uniform(grid.tau, dtau)) throw InvalidArgument("power spectrum needs a uniform tau grid");
  const auto n = static_cast<Eigen::Index>(grid.tau.size());
  if (n < 2) throw InvalidArgument("power spectrum needs at least two tau samples");
  if (options.pad < 1) throw InvalidArgument("pad factor must be >= 1");
  const Eigen::Index len = n * options.pad;

  Spectrum spec;
  spec.omega = grid.omega;
  spec.options = options;
  spec.bin_width = kTwoPi / (static_cast<double>(len) * dtau);
  spec.power.resize(grid.values.rows(), len);
  // fftshift order: bins -floor(len/2) .. ceil(len/2)-1
  const Eigen::Index half = len / 2;
  spec.Omega.resize(static_cast<std::size_t>(len));
  for (Eigen::Index j = 0; j < len; ++j) spec.Omega[j] = static_cast<double>(j - half) * spec.bin_width;

  std::vector<double> window(static_cast<std::size_t>(n), 1.0);
  if (options.hann_window)
    for (Eigen::Index k = 0; k < n; ++k) window[k] = 0.5 * (1.0 - std::cos(kTwoPi * k / static_cast<double>(n - 1)));

  auto* in = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * len));
  auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * len));
  fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(len), in, out, FFTW_FORWARD, FFTW_ESTIMATE);
  const double scale = dtau / std::sqrt(kTwoPi);

  for (Eigen::Index i = 0; i < grid.values.rows(); ++i) {
    const double mean = options.subtract_mean ? grid.values.row(i).mean() : 0.0;
    for (Eigen::Index k = 0; k < len; ++k) {
      in[k][0] = k < n ? (grid.values(i, k) - mean) * window[k] : 0.0;
      in[k][1] = 0.0;
    }
    fftw_execute(plan);
    for (Eigen::Index j = 0; j < len; ++j) {
      const Eigen::Index src = (j - half + len) % len;
      spec.power(i, j) = scale * std::hypot(out[src][0], out[src][1]);
    }
  }
  fftw_destroy_plan(plan);
  fftw_free(in);
  fftw_free(out);
  return spec;
}

RabiCurve extract_rabi(const Spectrum& spectrum, const ExtractionOptions& options) {
  const bool banded = !options.predicted.empty();
  if (banded && options.predicted.size() != spectrum.omega.size())
    throw InvalidArgument("one predicted peak per omega is required");
  const auto& om = spectrum.Omega;
  const Eigen::Index len = static_cast<Eigen::Index>(om.size());
  Eigen::Index lo = 0;
  while (lo < len && om[lo] <= 0.0) ++lo;
  Eigen::Index hi = lo;
  while (hi < len && om[hi] < options.omega_max) ++hi;
  if (lo >= hi) throw InvalidArgument("no positive-frequency bins to search");

  RabiCurve curve;
  curve.omega = spectrum.omega;
  curve.bin_width = spectrum.bin_width;
  for (Eigen::Index i = 0; i < spectrum.power.rows(); ++i) {
    auto p = [&](Eigen::Index j) { return spectrum.power(i, j); };
    Eigen::Index best = -1;
    if (!banded) {
      for (Eigen::Index j = lo; j < hi; ++j)
        if (best < 0 || p(j) > p(best)) best = j;
    } else {
      const double pred = options.predicted[i];
      const double hw = options.band_fraction * std::abs(pred) + options.band_bins * spectrum.bin_width;
      Eigen::Index top = -1;
      std::vector<Eigen::Index> band;
      for (Eigen::Index j = lo; j < hi; ++j) {
        if (std::abs(om[j] - pred) > hw) continue;
        band.push_back(j);
        if (top < 0 || p(j) > p(top)) top = j;
      }
      if (band.empty()) {
        std::ostringstream os;
        os << "no spectral bins within the band around " << pred << " at omega index " << i;
        throw InvalidArgument(os.str());
      }
      for (Eigen::Index j : band) {
        const bool peak = (j == 0 || p(j) >= p(j - 1)) && (j + 1 >= len || p(j) >= p(j + 1));
        if (!peak || p(j) < options.floor * p(top)) continue;
        if (best < 0 || std::abs(om[j] - pred) < std::abs(om[best] - pred)) best = j;
      }
      if (best < 0) best = top;
    }
    double peak = om[best];
    if (options.refine && best > 0 && best + 1 < len) {
      const double y0 = p(best - 1), y1 = p(best), y2 = p(best + 1);
      const double denom = y0 - 2.0 * y1 + y2;
      if (denom < 0.0) peak += std::clamp(0.5 * (y0 - y2) / denom, -0.5, 0.5) * spectrum.bin_width;
    }
    curve.Omega.push_back(peak);
  }
  return curve;
}

std::vector<double> predicted_line(const std::vector<double>& omega_grid, double lambda, double matrix_element,
                                   double gap) {
  std::vector<double> out;
  for (double w : omega_grid) out.push_back(rabi_frequency_analytic(w, lambda, matrix_element, gap));
  return out;
}

AdiabaticEstimate estimate_condition(const RabiCurve& curve, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
  const auto& w = curve.omega;
  const auto& y = curve.Omega;
  if (w.size() != y.size() || w.size() < 3) throw InvalidArgument("need at least three points on the curve");
  const auto j = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
  if (j == 0 || j + 1 == y.size()) {
    std::ostringstream os;
    os << "Rabi dispersion minimum at the sweep edge (omega = " << w[j] << "); widen the omega range";
    throw InconclusiveEstimate(os.str());
  }
  AdiabaticEstimate est;
  est.argmin = j;
  // Vertex of the parabola through the three lowest neighbours.
  const double x0 = w[j - 1], x1 = w[j], x2 = w[j + 1];
  const double y0 = y[j - 1], y1 = y[j], y2 = y[j + 1];
  const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
  const double a = (d12 - d01) / (x2 - x0);
  if (a > 0.0) {
    const double b = d01 - a * (x0 + x1);
    const double c = y0 - a * x0 * x0 - b * x0;
    est.gap_est = -b / (2.0 * a);
    est.min_Omega = c - b * b / (4.0 * a);
  } else {
    est.gap_est = x1;
    est.min_Omega = y1;
  }
  est.numerator_est = est.min_Omega / lambda;
  est.value_est = est.numerator_est / (est.gap_est * est.gap_est);
  return est;
}

}  // namespace kpoqa
