#pragma once

// Exact-diagonalization reference values: spectra, transition elements,
// adiabatic-condition metric, analytic Rabi lines, parity sectors.

#include <optional>
#include <vector>

#include "kpoqa/dynamics.hpp"
#include "kpoqa/fock.hpp"
#include "kpoqa/model.hpp"

namespace kpoqa {

struct EigenSystem {
  Eigen::VectorXd energies;
  /// Columns are eigenvectors in the Fock basis.
  Matrix vectors;

  Eigen::Index size() const { return energies.size(); }
  /// <m|O|n>
  cplx element(const Operator& op, Eigen::Index m, Eigen::Index n) const;
  /// Full matrix of O in the eigenbasis.
  Matrix transform(const Operator& op) const;
};

/// Ascending spectrum. Degenerate blocks (within 1e-9 max(1, ||H||)) are split by
/// total parity when H conserves it, then spanned by a basis fixed by the block
/// projector alone; each vector's largest amplitude is made real positive and
/// block members are ordered by the Fock index of that amplitude.
EigenSystem eigensystem(const Operator& h);

struct AdiabaticMetric {
  double numerator = 0.0;
  double gap = 0.0;
  double value = 0.0;
  int level = 0;
  double s1 = 0.0;
};

/// |<m|H_P - H_D|0>| / (E_m - E_0)^2 at the frozen point s1.
AdiabaticMetric adiabatic_metric_exact(const KpoModel& model, const ProtocolSchedule& schedule, int m);
AdiabaticMetric adiabatic_metric(const EigenSystem& es, const Operator& hdot, int m);

/// Lowest level sharing the ground state's parity with a non-negligible
/// <m|hdot|0>. Parity is ignored when H does not conserve it.
int suggest_level(const EigenSystem& es, const Operator& h, const Operator& hdot, double tol = 1e-8);

/// sqrt((lambda |M|)^2 + (omega - gap)^2)
double rabi_frequency_analytic(double omega, double lambda, double matrix_element, double gap);

/// sqrt((lambda |<m|hdot|n>|)^2 + (omega - (E_m - E_n))^2)
double rabi_frequency_excited_pair(double omega, double lambda, const EigenSystem& es, const Operator& hdot,
                                   int n, int m);

struct TwoPhotonLine {
  double frequency = 0.0;
  cplx element;
  double alpha_b = 0.0;
};

/// Second-order line between levels n and k of h0 under g cos(omega t) hprime.
/// Throws SingularConfiguration if some |2E_m - E_n - E_k| < 1e-8.
TwoPhotonLine two_photon_rabi(const EigenSystem& es, const Operator& hprime, double g, double omega, int n, int k);
TwoPhotonLine two_photon_rabi(const Operator& h0, const Operator& hprime, double g, double omega, int n, int k);

/// +-1 per eigenvector. Throws InvalidArgument if ||[H, parity]|| > 1e-8.
std::vector<int> parity_sector_labels(const Operator& h);
std::vector<int> parity_sector_labels(const Operator& h, const EigenSystem& es);

struct RwaCheck {
  double infidelity = 0.0;
  double t_final = 0.0;
};

/// Evolves vacuum in the lab frame and under the rotating-frame effective Hamiltonian,
/// maps the lab state by exp(i (w'/2) t n) and returns 1 - fidelity. dt is capped at 0.03 / ||H||.
RwaCheck rwa_equivalence_check(const LabFrameParams& lab, double t_final, int cutoff, double dt);

struct VisibilityReport {
  cplx diagonal_difference;
  cplx coherence;
  bool visible = true;
};

VisibilityReport visibility_check(const Operator& op, const StateVector& ground, const StateVector& excited,
                                  double tol = 1e-8);

struct ConvergenceReport {
  std::vector<int> cutoffs;
  std::vector<int> raised_cutoffs;
  double e0 = 0.0, e0_raised = 0.0;
  double em = 0.0, em_raised = 0.0;
  AdiabaticMetric metric, metric_raised;
  double max_relative_change = 0.0;
  bool passed = false;
};

/// Raises every cutoff by `increment` and compares E_0, E_m and the metric.
ConvergenceReport cutoff_convergence(const KpoNetworkParams& params, const ProtocolSchedule& schedule,
                                     const std::vector<int>& cutoffs, int m, int increment = 4,
                                     double tol = 1e-5);

}  // namespace kpoqa
