#pragma once

// Command implementations behind the kpoqa tool: oracle, sweep, estimate, validate.
// Each run_* function does the computation; the cmd_* wrappers write files.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpoqa/config.hpp"
#include "kpoqa/oracle.hpp"
#include "kpoqa/spectroscopy.hpp"

namespace kpoqa {

enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,
  exit_config = 2,
  exit_inconclusive = 3,
  exit_invariant = 4,
};

struct OracleReport {
  EigenSystem es;
  AdiabaticMetric metric;
  int suggested_level = -1;
  /// Empty when the Hamiltonian does not conserve parity.
  std::vector<int> parity;
  std::optional<ConvergenceReport> convergence;
  double seconds = 0.0;
};

OracleReport run_oracle(const RunConfig& config, bool with_convergence = true);

/// Dispersion line of the level pair (n, m) on the given omega grid.
std::vector<double> pair_line(const RunConfig& config, const OracleReport& oracle, LevelPair levels,
                              const std::vector<double>& omega);

struct SweepReport {
  SignalGrid signal;
  Spectrum spectrum;
  /// E_level - E_0, used when the omega grid is given in gap units.
  double gap = 0.0;
  Eigen::Index drive_dim = 0;
  double leakage = 0.0;
  double ground_fidelity = 0.0;
  double parity_at_s1 = 0.0;
  double seconds = 0.0;
};

SweepReport run_sweep(const RunConfig& config, const OracleReport& oracle, int threads);

struct EstimateReport {
  RabiCurve curve;
  /// Centre of the extraction band and the level-m target line.
  std::vector<double> band_line;
  std::vector<double> target_line;
  double band_deviation_bins = 0.0;
  double target_deviation_bins = 0.0;
  std::optional<AdiabaticEstimate> estimate;
  std::string inconclusive;
};

EstimateReport run_estimate(const RunConfig& config, const OracleReport& oracle, const SweepReport& sweep);

struct ValidationCheck {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// Invariant suite on the configured model plus model-independent analytic checks.
std::vector<ValidationCheck> run_validation(const RunConfig& config);

/// Converged single-KPO configuration used by `validate` without --config.
RunConfig default_validation_config();

nlohmann::json oracle_summary(const RunConfig& config, const OracleReport& oracle);
nlohmann::json metadata(const RunConfig& config, const std::string& command, const SweepReport* sweep);

void write_signal_csv(const std::string& path, const SignalGrid& grid);
void write_spectrum_csv(const std::string& path, const Spectrum& spectrum);
void write_rabi_csv(const std::string& path, const EstimateReport& estimate);
void write_json(const std::string& path, const nlohmann::json& doc);

struct CommandOptions {
  std::string out_dir = ".";
  /// 0 keeps the thread count from the configuration.
  int threads = 0;
};

int cmd_oracle(const RunConfig& config, const CommandOptions& options);
int cmd_sweep(const RunConfig& config, const CommandOptions& options);
int cmd_estimate(const RunConfig& config, const CommandOptions& options);
int cmd_validate(const RunConfig& config, const CommandOptions& options);

/// Loads the configuration, runs the command and maps errors to exit codes.
int run_command(const std::string& command, const std::optional<std::string>& config_path,
                const CommandOptions& options);

std::string version();

}  // namespace kpoqa
