#pragma once

// JSON run configuration shared by the command-line tool and the benchmark tests.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpoqa/model.hpp"
#include "kpoqa/spectroscopy.hpp"

namespace kpoqa {

struct GridSpec {
  double start = 0.0;
  double stop = 0.0;
  std::size_t count = 1;
};

using LevelPair = std::array<int, 2>;

struct RunConfig {
  std::string name;
  KpoNetworkParams params;
  std::vector<int> cutoffs;
  ProtocolSchedule schedule;
  /// Level m of the exact metric.
  int level = 1;
  ObservableSpec observable;
  ProtocolOptions protocol;

  /// Inclusive of both ends. With omega_in_gap_units the bounds multiply E_level - E_0.
  GridSpec omega;
  bool omega_in_gap_units = false;
  /// Endpoint-exclusive uniform grid.
  GridSpec tau;

  SpectrumOptions spectrum;

  bool banded = true;
  /// Levels (n, m) whose dispersion line centres the extraction band.
  LevelPair band_levels{0, 1};
  double band_fraction = 0.1;
  double band_bins = 3.0;
  double band_floor = 0.02;
  std::optional<double> omega_max;

  std::optional<LevelPair> pair_overlay;
  std::optional<LevelPair> two_photon_overlay;

  int convergence_increment = 4;
  double convergence_tol = 1e-5;

  int threads = 1;
  /// Reserved; every computation is deterministic.
  std::uint64_t seed = 0;

  std::vector<double> omega_grid(double gap) const;
  std::vector<double> tau_grid() const;
  ExtractionOptions extraction(std::vector<double> predicted) const;
};

/// Throws ConfigError with "origin:line: path: message" diagnostics. Unknown keys are rejected.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::string& path);

/// Full normalized form; parse_config(to_json(c).dump()) reproduces c.
nlohmann::json to_json(const RunConfig& config);

}  // namespace kpoqa
