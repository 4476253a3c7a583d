#include "kpoqa/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "kpoqa/dynamics.hpp"
#include "kpoqa/error.hpp"
#include "kpoqa/log.hpp"

#ifndef KPOQA_VERSION
#define KPOQA_VERSION "unknown"
#endif

namespace kpoqa {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot write " + path);
  }
  void header(const char* text) { out_ << text << '\n'; }
  void row(std::initializer_list<double> values) {
    char buf[32];
    bool first = true;
    for (double v : values) {
      std::snprintf(buf, sizeof buf, "%.12e", v);
      if (!first) out_ << ',';
      out_ << buf;
      first = false;
    }
    out_ << '\n';
  }
  ~CsvWriter() { out_.close(); }

 private:
  std::string path_;
  std::ofstream out_;
};

double max_deviation_bins(const RabiCurve& curve, const std::vector<double>& line) {
  double worst = 0.0;
  for (std::size_t i = 0; i < line.size(); ++i) worst = std::max(worst, std::abs(curve.Omega[i] - line[i]));
  return curve.bin_width > 0.0 ? worst / curve.bin_width : 0.0;
}

bool parity_conserving(const KpoNetworkParams& p) {
  for (double r : p.coherent_drive)
    if (r != 0.0) return false;
  return true;
}

std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

ValidationCheck check(std::string name, double value, double tolerance, bool passed, std::string detail = {}) {
  return ValidationCheck{std::move(name), passed, value, tolerance, std::move(detail)};
}

ValidationCheck failed_check(std::string name, const std::exception& e) {
  return ValidationCheck{std::move(name), false, std::nan(""), 0.0, e.what()};
}

const char* kDefaultValidation = R"({
  "name": "validate-default",
  "model": {"chi": [1.0], "detuning": [1.0], "pump": [1.0], "coherent_drive": [1.0], "cutoffs": [16]},
  "schedule": {"t_ann": 500.0, "a_s1": 0.5, "lambda": 0.1},
  "level": 1,
  "protocol": {"anneal": {"method": "split_exponential", "dt": 0.05}},
  "grids": {"omega": {"start": 1.0, "stop": 1.0, "count": 1}, "tau": {"start": 0.0, "stop": 1.0, "count": 1}},
  "overlays": {"two_photon": [0, 2]}
})";

}  // namespace

std::string version() { return KPOQA_VERSION; }

OracleReport run_oracle(const RunConfig& config, bool with_convergence) {
  const auto t0 = Clock::now();
  const KpoModel model(config.params, FockSpace(config.cutoffs));
  const Operator h = model.qa_hamiltonian_at(config.schedule, config.schedule.s1);
  OracleReport r;
  r.es = eigensystem(h);
  r.metric = adiabatic_metric(r.es, model.conv_derivative(), config.level);
  r.metric.s1 = config.schedule.s1;
  try {
    r.suggested_level = suggest_level(r.es, h, model.conv_derivative());
  } catch (const InvalidArgument&) {
    r.suggested_level = -1;
  }
  if (parity_conserving(config.params)) r.parity = parity_sector_labels(h, r.es);
  r.seconds = seconds_since(t0);
  if (with_convergence)
    r.convergence = cutoff_convergence(config.params, config.schedule, config.cutoffs, config.level,
                                       config.convergence_increment, config.convergence_tol);
  return r;
}

std::vector<double> pair_line(const RunConfig& config, const OracleReport& oracle, LevelPair levels,
                              const std::vector<double>& omega) {
  const KpoModel model(config.params, FockSpace(config.cutoffs));
  std::vector<double> out;
  for (double w : omega)
    out.push_back(rabi_frequency_excited_pair(w, config.schedule.lambda, oracle.es, model.conv_derivative(),
                                              levels[0], levels[1]));
  return out;
}

SweepReport run_sweep(const RunConfig& config, const OracleReport& oracle, int threads) {
  const auto t0 = Clock::now();
  const KpoModel model(config.params, FockSpace(config.cutoffs));
  const ProtocolRunner runner(model, config.schedule, make_observable(model.space(), config.observable),
                              config.protocol);
  SweepReport r;
  r.gap = oracle.metric.gap;
  r.drive_dim = runner.drive_dim();
  r.leakage = runner.leakage();
  r.ground_fidelity = runner.ground_fidelity();
  r.parity_at_s1 = runner.parity_at_s1();
  r.signal = sweep(runner, config.omega_grid(r.gap), config.tau_grid(), threads);
  r.signal.observable = config.observable.label();
  // A single dwell time has no spectrum; spectrum.csv is then header-only.
  if (r.signal.tau.size() >= 2) {
    r.spectrum = power_spectrum(r.signal, config.spectrum);
  } else {
    r.spectrum.omega = r.signal.omega;
    r.spectrum.options = config.spectrum;
  }
  r.seconds = seconds_since(t0);
  return r;
}

EstimateReport run_estimate(const RunConfig& config, const OracleReport& oracle, const SweepReport& sweep) {
  EstimateReport r;
  const auto& omega = sweep.signal.omega;
  r.band_line = pair_line(config, oracle, config.band_levels, omega);
  r.target_line = pair_line(config, oracle, {0, config.level}, omega);
  r.curve = extract_rabi(sweep.spectrum, config.extraction(r.band_line));
  r.band_deviation_bins = max_deviation_bins(r.curve, r.band_line);
  r.target_deviation_bins = max_deviation_bins(r.curve, r.target_line);
  try {
    r.estimate = estimate_condition(r.curve, config.schedule.lambda);
  } catch (const InconclusiveEstimate& e) {
    r.inconclusive = e.what();
  }
  return r;
}

RunConfig default_validation_config() { return parse_config(kDefaultValidation, "<default validation config>"); }

std::vector<ValidationCheck> run_validation(const RunConfig& config) {
  std::vector<ValidationCheck> out;
  const KpoModel model(config.params, FockSpace(config.cutoffs));
  const ProtocolSchedule& sched = config.schedule;
  const Operator h1 = model.qa_hamiltonian_at(sched, sched.s1);
  const Operator drive = model.driver() - model.problem();

  {
    double worst = 0.0;
    for (const Operator* op : {&model.driver(), &model.problem(), &h1, &drive})
      worst = std::max(worst, op->hermiticity_error());
    out.push_back(check("hermiticity", worst, 1e-12, worst <= 1e-12));
  }

  const bool conserving = parity_conserving(config.params);
  const Operator parity = parity_total(model.space());
  if (conserving) {
    const double c = std::max(commutator(h1, parity).spectral_norm(), commutator(drive, parity).spectral_norm());
    out.push_back(check("parity_commutator", c, 1e-10, c <= 1e-10));
  } else {
    out.push_back(check("parity_commutator", 0.0, 1e-10, true, "skipped: coherent drive breaks parity"));
  }

  const MatrixHamiltonian anneal = MatrixHamiltonian::from(model.annealing_hamiltonian(sched));
  const Vector vac = StateVector::vacuum(model.space()).amplitudes();
  IntegratorConfig cfg = config.protocol.anneal;
  cfg.sample_stride = 0;
  Vector psi;
  try {
    psi = propagate_vector(anneal, vac, 0.0, sched.t1(), cfg);
    const double drift = std::abs(psi.norm() - 1.0);
    out.push_back(check("closed_norm_drift", drift, 1e-8, drift <= 1e-8));
    if (conserving) {
      const double d = std::abs(psi.dot(parity.matrix() * psi).real() - 1.0);
      out.push_back(check("closed_parity_drift", d, 1e-6, d <= 1e-6));
    }
  } catch (const Error& e) {
    out.push_back(failed_check("closed_norm_drift", e));
  }

  auto open_run = [&](double gamma) {
    KpoNetworkParams p = config.params;
    p.gamma = gamma;
    const KpoModel m(p, FockSpace(config.cutoffs));
    return propagate_density(anneal, to_sparse(m.lindblad_ops()), vac * vac.adjoint(), 0.0, sched.t1(), cfg);
  };
  if (config.params.gamma > 0.0) {
    try {
      const Matrix rho = open_run(config.params.gamma);
      const double tr = std::abs(rho.trace().real() - 1.0);
      const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
      const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (rho + rho.adjoint())).eigenvalues()(0);
      out.push_back(check("open_trace_drift", tr, 1e-8, tr <= 1e-8));
      out.push_back(check("open_hermiticity", herm, 1e-10, herm <= 1e-10));
      out.push_back(check("open_min_eigenvalue", min_eig, -1e-8, min_eig >= -1e-8));
    } catch (const Error& e) {
      out.push_back(failed_check("open_trace_drift", e));
    }
  }
  try {
    const Matrix rho = open_run(0.0);
    if (psi.size() == 0) throw InvariantViolation("closed reference run failed");
    const double infid = 1.0 - psi.dot(rho * psi).real();
    out.push_back(check("gamma0_open_vs_closed", infid, 1e-8, infid <= 1e-8));
  } catch (const Error& e) {
    out.push_back(failed_check("gamma0_open_vs_closed", e));
  }

  try {
    const ConvergenceReport cv = cutoff_convergence(config.params, sched, config.cutoffs, config.level,
                                                    config.convergence_increment, config.convergence_tol);
    std::ostringstream os;
    os << "value " << cv.metric.value << " -> " << cv.metric_raised.value;
    out.push_back(check("cutoff_convergence", cv.max_relative_change, config.convergence_tol, cv.passed, os.str()));
  } catch (const Error& e) {
    out.push_back(failed_check("cutoff_convergence", e));
  }

  {
    LabFrameParams lab;
    lab.chi = 1.0;
    lab.omega_prime = 100.0;
    lab.omega_lab = 50.0;
    lab.p = 1.0;
    lab.p_prime = 1.0;
    lab.delta = 0.1;
    const RwaCheck rwa = rwa_equivalence_check(lab, 10.0, 20, 2e-4);
    out.push_back(check("rwa_infidelity", rwa.infidelity, 0.01, rwa.infidelity <= 0.01));
  }

  try {
    const LevelPair lv = config.two_photon_overlay.value_or(LevelPair{0, 2});
    const EigenSystem es = eigensystem(h1);
    const double w = 0.5 * (es.energies(lv[1]) - es.energies(lv[0]));
    const cplx e1 = two_photon_rabi(es, model.conv_derivative(), 0.1, w, lv[0], lv[1]).element;
    const cplx e2 = two_photon_rabi(es, model.conv_derivative(), 0.2, w, lv[0], lv[1]).element;
    const double err = std::abs(e2 / e1 - 4.0);
    out.push_back(check("two_photon_g2_scaling", err, 1e-10, err <= 1e-10));
  } catch (const Error& e) {
    out.push_back(failed_check("two_photon_g2_scaling", e));
  }
  return out;
}

json oracle_summary(const RunConfig& config, const OracleReport& oracle) {
  const KpoModel model(config.params, FockSpace(config.cutoffs));
  const Operator& g = model.conv_derivative();
  const auto& es = oracle.es;
  const Eigen::Index shown = std::min<Eigen::Index>(es.size(), 16);

  json j;
  j["tool"] = "kpoqa";
  j["version"] = version();
  j["config"] = to_json(config);
  j["level"] = oracle.metric.level;
  j["s1"] = oracle.metric.s1;
  j["a_s1"] = ProtocolSchedule::f(oracle.metric.s1);
  j["value_exact"] = oracle.metric.value;
  j["numerator"] = oracle.metric.numerator;
  j["gap"] = oracle.metric.gap;
  j["suggested_level"] = oracle.suggested_level;
  std::vector<double> energies;
  for (Eigen::Index m = 0; m < shown; ++m) energies.push_back(es.energies(m));
  j["energies"] = energies;
  if (!oracle.parity.empty())
    j["parity"] = std::vector<int>(oracle.parity.begin(), oracle.parity.begin() + shown);
  else
    j["parity"] = nullptr;
  if (oracle.convergence) {
    const auto& cv = *oracle.convergence;
    j["convergence"] = {{"cutoffs", cv.cutoffs},
                        {"raised_cutoffs", cv.raised_cutoffs},
                        {"value", cv.metric.value},
                        {"value_raised", cv.metric_raised.value},
                        {"max_relative_change", cv.max_relative_change},
                        {"passed", cv.passed}};
  }

  auto pair_entry = [&](LevelPair lv) {
    return json{{"levels", lv},
                {"matrix_element", std::abs(es.element(g, lv[1], lv[0]))},
                {"gap", es.energies(lv[1]) - es.energies(lv[0])}};
  };
  json ov;
  ov["lambda"] = config.schedule.lambda;
  ov["target"] = pair_entry({0, config.level});
  ov["band"] = pair_entry(config.band_levels);
  if (config.pair_overlay) ov["pair"] = pair_entry(*config.pair_overlay);
  if (config.two_photon_overlay) {
    const LevelPair lv = *config.two_photon_overlay;
    json tp{{"levels", lv}, {"gap", es.energies(lv[1]) - es.energies(lv[0])}};
    try {
      // The element scales as 1/omega through the frame factor, so |element| * omega is constant.
      tp["element_omega"] = std::abs(two_photon_rabi(es, g, config.schedule.lambda, 1.0, lv[0], lv[1]).element);
    } catch (const SingularConfiguration& e) {
      tp["element_omega"] = nullptr;
      tp["error"] = e.what();
    }
    ov["two_photon"] = tp;
  }
  j["overlays"] = ov;
  j["runtime_seconds"] = oracle.seconds;
  return j;
}

json metadata(const RunConfig& config, const std::string& command, const SweepReport* sweep) {
  json j;
  j["tool"] = "kpoqa";
  j["version"] = version();
  j["command"] = command;
  j["config"] = to_json(config);
  j["csv_format"] = "%.12e";
  if (sweep) {
    const auto& s = *sweep;
    j["grids"] = {{"omega", {{"start", s.signal.omega.front()}, {"stop", s.signal.omega.back()},
                             {"count", s.signal.omega.size()}, {"gap", s.gap},
                             {"scale", config.omega_in_gap_units ? "gap" : "absolute"}}},
                  {"tau", {{"start", s.signal.tau.front()}, {"stop", config.tau.stop}, {"count", s.signal.tau.size()},
                           {"endpoint", false}}}};
    j["spectrum"] = {{"window", config.spectrum.hann_window ? "hann" : "none"},
                     {"subtract_mean", config.spectrum.subtract_mean},
                     {"pad", config.spectrum.pad},
                     {"bin_width", s.spectrum.bin_width},
                     {"bins", s.spectrum.Omega.size()}};
    j["drive_basis"] = {{"energy_window", config.protocol.energy_window}, {"dim", s.drive_dim}, {"leakage", s.leakage}};
    j["observable"] = s.signal.observable;
    j["open_system"] = s.signal.open_system;
  }
  return j;
}

void write_signal_csv(const std::string& path, const SignalGrid& grid) {
  CsvWriter w(path);
  w.header("omega,tau,expectation");
  for (std::size_t i = 0; i < grid.omega.size(); ++i)
    for (std::size_t k = 0; k < grid.tau.size(); ++k)
      w.row({grid.omega[i], grid.tau[k], grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))});
}

void write_spectrum_csv(const std::string& path, const Spectrum& spectrum) {
  CsvWriter w(path);
  w.header("omega,Omega,power");
  for (std::size_t i = 0; i < spectrum.omega.size(); ++i)
    for (std::size_t k = 0; k < spectrum.Omega.size(); ++k)
      w.row({spectrum.omega[i], spectrum.Omega[k],
             spectrum.power(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))});
}

void write_rabi_csv(const std::string& path, const EstimateReport& estimate) {
  CsvWriter w(path);
  w.header("omega,Omega_exp,Omega_band,Omega_target");
  for (std::size_t i = 0; i < estimate.curve.omega.size(); ++i)
    w.row({estimate.curve.omega[i], estimate.curve.Omega[i], estimate.band_line[i], estimate.target_line[i]});
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << doc.dump(2) << '\n';
}

int cmd_oracle(const RunConfig& config, const CommandOptions& options) {
  const OracleReport oracle = run_oracle(config);
  write_json(join_path(options.out_dir, "summary.json"), oracle_summary(config, oracle));
  std::cout << "value_exact " << oracle.metric.value << " (level " << oracle.metric.level << ", gap "
            << oracle.metric.gap << ", numerator " << oracle.metric.numerator << ")\n";
  return exit_ok;
}

int cmd_sweep(const RunConfig& config, const CommandOptions& options) {
  const OracleReport oracle = run_oracle(config, false);
  const SweepReport s = run_sweep(config, oracle, options.threads > 0 ? options.threads : config.threads);
  write_signal_csv(join_path(options.out_dir, "signal.csv"), s.signal);
  write_spectrum_csv(join_path(options.out_dir, "spectrum.csv"), s.spectrum);
  write_json(join_path(options.out_dir, "metadata.json"), metadata(config, "sweep", &s));
  std::cout << "swept " << s.signal.omega.size() << " x " << s.signal.tau.size() << " points in " << s.seconds
            << " s\n";
  return exit_ok;
}

int cmd_estimate(const RunConfig& config, const CommandOptions& options) {
  if (config.tau.count < 2 || config.omega.count < 3)
    throw ConfigError("/grids: estimate needs at least 3 omega points and 2 tau samples");
  const OracleReport oracle = run_oracle(config);
  const SweepReport s = run_sweep(config, oracle, options.threads > 0 ? options.threads : config.threads);
  const EstimateReport est = run_estimate(config, oracle, s);

  write_signal_csv(join_path(options.out_dir, "signal.csv"), s.signal);
  write_spectrum_csv(join_path(options.out_dir, "spectrum.csv"), s.spectrum);
  write_rabi_csv(join_path(options.out_dir, "rabi.csv"), est);
  write_json(join_path(options.out_dir, "metadata.json"), metadata(config, "estimate", &s));

  json j = oracle_summary(config, oracle);
  json e;
  e["bin_width"] = est.curve.bin_width;
  e["band_deviation_bins"] = est.band_deviation_bins;
  e["target_deviation_bins"] = est.target_deviation_bins;
  if (est.estimate) {
    const auto& a = *est.estimate;
    e["value_est"] = a.value_est;
    e["numerator_est"] = a.numerator_est;
    e["gap_est"] = a.gap_est;
    e["min_Omega"] = a.min_Omega;
    e["value_exact"] = oracle.metric.value;
    e["relative_error"] = a.value_est / oracle.metric.value - 1.0;
    e["inconclusive"] = false;
  } else {
    e["inconclusive"] = true;
    e["reason"] = est.inconclusive;
  }
  j["estimate"] = e;
  j["sweep"] = {{"drive_dim", s.drive_dim},
                {"leakage", s.leakage},
                {"ground_fidelity", s.ground_fidelity},
                {"parity_at_s1", s.parity_at_s1},
                {"max_parity_drift", s.signal.max_parity_drift},
                {"runtime_seconds", s.seconds}};
  write_json(join_path(options.out_dir, "summary.json"), j);

  if (!est.estimate) {
    std::cerr << "inconclusive estimate: " << est.inconclusive << "\n";
    return exit_inconclusive;
  }
  std::cout << "value_est " << est.estimate->value_est << " value_exact " << oracle.metric.value << " (gap_est "
            << est.estimate->gap_est << ", numerator_est " << est.estimate->numerator_est << ")\n";
  return exit_ok;
}

int cmd_validate(const RunConfig& config, const CommandOptions& options) {
  const auto checks = run_validation(config);
  json list = json::array();
  bool all = true;
  for (const auto& c : checks) {
    all = all && c.passed;
    std::printf("%s %-24s value=%.6e tol=%.1e %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.value,
                c.tolerance, c.detail.c_str());
    list.push_back({{"name", c.name},
                    {"passed", c.passed},
                    {"value", std::isfinite(c.value) ? json(c.value) : json(nullptr)},
                    {"tolerance", c.tolerance},
                    {"detail", c.detail}});
  }
  write_json(join_path(options.out_dir, "validate.json"),
             {{"tool", "kpoqa"}, {"version", version()}, {"config", to_json(config)}, {"checks", list}, {"passed", all}});
  return all ? exit_ok : exit_invariant;
}

int run_command(const std::string& command, const std::optional<std::string>& config_path,
                const CommandOptions& options) {
  try {
    RunConfig config;
    if (config_path)
      config = load_config(*config_path);
    else if (command == "validate")
      config = default_validation_config();
    else
      throw ConfigError("--config is required for '" + command + "'");
    std::filesystem::create_directories(options.out_dir);
    if (command == "oracle") return cmd_oracle(config, options);
    if (command == "sweep") return cmd_sweep(config, options);
    if (command == "estimate") return cmd_estimate(config, options);
    if (command == "validate") return cmd_validate(config, options);
    throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const InconclusiveEstimate& e) {
    std::cerr << "inconclusive estimate: " << e.what() << "\n";
    return exit_inconclusive;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return exit_invariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_failure;
  }
}

}  // namespace kpoqa
