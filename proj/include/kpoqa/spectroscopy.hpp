#pragma once

// Drive-and-measure protocol, (omega, tau) sweeps, power spectra and the
// adiabatic-condition estimate extracted from them.

#include <optional>
#include <string>
#include <vector>

#include "kpoqa/dynamics.hpp"
#include "kpoqa/model.hpp"
#include "kpoqa/oracle.hpp"

namespace kpoqa {

struct ObservableSpec {
  /// "n", "x", "p" (single mode), "n_total" or "parity".
  std::string kind = "n";
  int mode = 0;
  std::string label() const;
};

Operator make_observable(const FockSpace& space, const ObservableSpec& spec);

enum class InitialState { vacuum, driver_ground };

struct ProtocolOptions {
  bool open_system = false;
  InitialState initial = InitialState::vacuum;
  IntegratorConfig anneal;
  IntegratorConfig drive;
  /// 0 keeps the full Fock basis during the drive. A positive value restricts the
  /// drive stage to eigenstates of H_QA(s1) with E - E_0 <= window.
  double energy_window = 0.0;
  /// Cap on the drive step relative to the drive period 2 pi / omega.
  int steps_per_period = 50;
  /// Cap on dt * ||H|| for the drive stage (0 disables).
  double step_ratio = 0.04;
};

struct DriveSeries {
  std::vector<double> values;
  /// max |<parity>(tau) - <parity>(0)| over the recorded samples.
  double parity_drift = 0.0;
};

/// Runs the annealing stage once and replays the drive stage for any (omega, tau).
/// Thread-safe after construction.
class ProtocolRunner {
 public:
  ProtocolRunner(const KpoModel& model, const ProtocolSchedule& schedule, const Operator& observable,
                 ProtocolOptions options);

  const ProtocolSchedule& schedule() const { return schedule_; }
  const ProtocolOptions& options() const { return options_; }
  /// Dimension of the basis used in the drive stage.
  Eigen::Index drive_dim() const { return h0_.rows(); }
  /// Population outside the reduced drive basis at s1 (0 for the full basis).
  double leakage() const { return leakage_; }
  /// Population of the lowest eigenspace of H_QA(s1) (levels within 1e-6 of E_0).
  double ground_fidelity() const { return ground_fidelity_; }
  /// <parity> at s1.
  double parity_at_s1() const { return parity_s1_; }

  /// <O> after a dwell tau with the drive at omega.
  double run_point(double omega, double tau) const;
  /// <O> on a uniform grid tau_k = tau0 + k * dtau, k < count, from one trajectory.
  DriveSeries drive_series(double omega, double tau0, double dtau, std::size_t count) const;

 private:
  ProtocolSchedule schedule_;
  ProtocolOptions options_;
  Matrix h0_;
  Matrix drive_op_;
  Matrix observable_;
  Matrix parity_;
  std::vector<SparseMatrix> jumps_;
  Vector psi_;
  Matrix rho_;
  double leakage_ = 0.0;
  double ground_fidelity_ = 0.0;
  double parity_s1_ = 0.0;
};

/// Stand-alone single point.
double run_point(const KpoModel& model, const ProtocolSchedule& schedule, double omega, double tau,
                 const Operator& observable, const ProtocolOptions& options);

/// Endpoint-exclusive uniform grid: start + k (stop - start) / count.
std::vector<double> uniform_grid(double start, double stop, std::size_t count);
/// Endpoint-inclusive grid, count >= 2 (count 1 returns {start}).
std::vector<double> linspace(double start, double stop, std::size_t count);

struct SignalGrid {
  std::vector<double> omega;
  std::vector<double> tau;
  /// rows: omega, cols: tau
  Eigen::MatrixXd values;
  double s1 = 0.0;
  std::string observable;
  bool open_system = false;
  double max_parity_drift = 0.0;
};

/// Every omega row comes from one drive trajectory; rows are independent, so the
/// result does not depend on thread count or scheduling.
SignalGrid sweep(const ProtocolRunner& runner, const std::vector<double>& omega_grid,
                 const std::vector<double>& tau_grid, int threads = 1);

struct SpectrumOptions {
  bool subtract_mean = true;
  bool hann_window = true;
  /// FFT length = pad * samples.
  int pad = 1;
};

struct Spectrum {
  std::vector<double> omega;
  /// Ascending, symmetric around 0 (negative frequencies first).
  std::vector<double> Omega;
  /// rows: omega, cols: Omega
  Eigen::MatrixXd power;
  double bin_width = 0.0;
  SpectrumOptions options;
};

/// |sum_k x(tau_k) w_k e^{-i Omega tau_k}| dtau / sqrt(2 pi) for every omega row.
Spectrum power_spectrum(const SignalGrid& grid, const SpectrumOptions& options = {});

struct ExtractionOptions {
  /// Only bins with 0 < Omega < omega_max are considered.
  double omega_max = 1e300;
  /// Per-omega predicted peak positions; enables banded extraction.
  std::vector<double> predicted;
  /// Band half-width = band_fraction * predicted + band_bins * bin_width.
  double band_fraction = 0.1;
  double band_bins = 3.0;
  /// In banded mode, local maxima weaker than floor * (band max) are ignored.
  double floor = 0.02;
  bool refine = true;
};

struct RabiCurve {
  std::vector<double> omega;
  std::vector<double> Omega;
  double bin_width = 0.0;
};

RabiCurve extract_rabi(const Spectrum& spectrum, const ExtractionOptions& options = {});

/// Predicted target line sqrt((lambda M)^2 + (omega - gap)^2) on a grid.
std::vector<double> predicted_line(const std::vector<double>& omega_grid, double lambda, double matrix_element,
                                   double gap);

struct AdiabaticEstimate {
  double min_Omega = 0.0;
  double numerator_est = 0.0;
  double gap_est = 0.0;
  double value_est = 0.0;
  std::size_t argmin = 0;
};

/// Throws InconclusiveEstimate when the minimum sits on the first or last omega.
AdiabaticEstimate estimate_condition(const RabiCurve& curve, double lambda);

}  // namespace kpoqa
