#pragma once

// Fixed-step propagation of state vectors (Schroedinger) and density matrices (Lindblad).

#include <functional>
#include <vector>

#include <Eigen/Sparse>

#include "kpoqa/fock.hpp"
#include "kpoqa/model.hpp"

namespace kpoqa {

using SparseMatrix = Eigen::SparseMatrix<cplx>;

enum class Method {
  rk4,
  /// Strang splitting: exact unitary from the midpoint Hamiltonian,
  /// dissipator half-steps on either side.
  split_exponential,
};

struct IntegratorConfig {
  Method method = Method::rk4;
  double dt = 0.01;
  /// Record every n-th step (the final time is always recorded).
  int sample_stride = 1;
  /// dt * ||H|| above this only warns for rk4.
  double warn_ratio = 0.1;
  /// dt * ||H|| above this is refused for rk4 (imaginary-axis stability ends at 2.83).
  double max_ratio = 2.5;
  /// Tolerances asserted at sample times.
  double norm_tol = 1e-8;
  double trace_tol = 1e-8;
  double hermiticity_tol = 1e-10;
  double positivity_tol = 1e-8;
  /// Positivity needs an eigensolve, so it is only checked at the end unless set.
  bool positivity_at_samples = false;
  bool check_invariants = true;
};

/// H(t) = sum_k c_k(t) M_k on a bare matrix basis (Fock or reduced eigenbasis).
struct MatrixHamiltonian {
  std::vector<Matrix> ops;
  std::vector<TimeDependentHamiltonian::Coefficient> coeffs;
  std::vector<double> bounds;

  static MatrixHamiltonian from(const TimeDependentHamiltonian& h);

  void add(Matrix op, TimeDependentHamiltonian::Coefficient coeff = {}, double bound = 1.0);
  Eigen::Index dim() const;
  bool is_constant() const;
  double norm_bound() const;
  void assemble(double t, Matrix& out) const;
};

using VectorObserver = std::function<void(double, const Vector&)>;
using DensityObserver = std::function<void(double, const Matrix&)>;

/// Propagates psi from t0 to t1 and returns the final amplitudes.
/// The observer sees t0, every sample_stride-th step, and t1.
Vector propagate_vector(const MatrixHamiltonian& h, Vector psi, double t0, double t1,
                        const IntegratorConfig& cfg, const VectorObserver& observer = {});

Matrix propagate_density(const MatrixHamiltonian& h, const std::vector<SparseMatrix>& jumps,
                         Matrix rho, double t0, double t1, const IntegratorConfig& cfg,
                         const DensityObserver& observer = {});

std::vector<SparseMatrix> to_sparse(const std::vector<Operator>& ops);

struct StateTrajectory {
  std::vector<double> times;
  std::vector<StateVector> states;
};

struct DensityTrajectory {
  std::vector<double> times;
  std::vector<DensityMatrix> states;
};

StateTrajectory evolve_state(const TimeDependentHamiltonian& h, const StateVector& psi0, double t0,
                             double t1, const IntegratorConfig& cfg);

DensityTrajectory evolve_density(const TimeDependentHamiltonian& h, const std::vector<Operator>& lindblad,
                                 const DensityMatrix& rho0, double t0, double t1,
                                 const IntegratorConfig& cfg);

std::vector<std::pair<double, double>> expectation_series(const StateTrajectory& traj, const Operator& op);
std::vector<std::pair<double, double>> expectation_series(const DensityTrajectory& traj, const Operator& op);

}  // namespace kpoqa
