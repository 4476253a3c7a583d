#pragma once

// KPO network Hamiltonians, the annealing/drive time program, and decay operators.

#include <functional>
#include <vector>

#include "kpoqa/fock.hpp"

namespace kpoqa {

struct KpoNetworkParams {
  std::vector<double> chi;
  std::vector<double> detuning;
  std::vector<double> pump;
  std::vector<double> coherent_drive;
  /// K x K, Hermitian with zero diagonal. Entry (j, j') multiplies a_j^dagger a_j'.
  Matrix coupling;
  double gamma = 0.0;

  int modes() const { return static_cast<int>(chi.size()); }
  /// Throws InvalidArgument on size mismatch, non-finite entries, chi <= 0, gamma < 0
  /// or a non-Hermitian coupling matrix.
  void validate() const;

  static KpoNetworkParams single(double chi, double detuning, double pump, double drive);
};

/// Time program: A(s) = 1 - s until s1, then frozen while the drive is on.
struct ProtocolSchedule {
  double t_ann = 500.0;
  double s1 = 0.5;
  double tau = 0.0;
  double omega = 0.0;
  double lambda = 0.0;

  static constexpr double fdot = -1.0;

  static double f(double s) { return 1.0 - s; }
  double t1() const { return s1 * t_ann; }
  double drive_end() const { return s1 + tau / t_ann; }
  double a_of(double s) const;
  double lambda_of(double s) const;
  void validate() const;

  /// Schedule whose frozen stage sits at the given A(s1).
  static ProtocolSchedule with_frozen_a(double a_s1, double t_ann);
};

/// H(t) = sum_k c_k(t) O_k. A term without a coefficient is constant.
class TimeDependentHamiltonian {
 public:
  using Coefficient = std::function<double(double)>;

  struct Term {
    Operator op;
    Coefficient coeff;
    /// Upper bound on |coeff(t)|, used for step-size guards.
    double bound = 1.0;
    double at(double t) const { return coeff ? coeff(t) : 1.0; }
  };

  explicit TimeDependentHamiltonian(FockSpace space) : space_(std::move(space)) {}

  void add(Operator op, Coefficient coeff = {}, double bound = 1.0);

  const FockSpace& space() const { return space_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool is_constant() const;

  Operator at(double t) const;
  /// sum_k bound_k * ||O_k||, a bound on ||H(t)|| valid for every t.
  double norm_bound() const;

 private:
  FockSpace space_;
  std::vector<Term> terms_;
};

Operator build_problem_hamiltonian(const KpoNetworkParams& params, const FockSpace& space);
Operator build_driver_hamiltonian(const KpoNetworkParams& params, const FockSpace& space);

class KpoModel {
 public:
  KpoModel(KpoNetworkParams params, FockSpace space);

  const KpoNetworkParams& params() const { return params_; }
  const FockSpace& space() const { return space_; }
  const Operator& driver() const { return driver_; }
  const Operator& problem() const { return problem_; }
  /// dH_conv/ds = H_P - H_D for f(s) = 1 - s.
  const Operator& conv_derivative() const { return conv_derivative_; }

  Operator qa_hamiltonian_at(const ProtocolSchedule& schedule, double s) const;
  Operator drive_hamiltonian_at(const ProtocolSchedule& schedule, double s) const;
  std::vector<Operator> lindblad_ops() const;

  /// Annealing stage in physical time t in [0, t1]: (1 - t/T) H_D + (t/T) H_P.
  TimeDependentHamiltonian annealing_hamiltonian(const ProtocolSchedule& schedule) const;
  /// Drive stage with time measured from t1: H_QA(s1) + lambda fdot cos(omega t) (H_D - H_P).
  TimeDependentHamiltonian frozen_hamiltonian(const ProtocolSchedule& schedule) const;

 private:
  KpoNetworkParams params_;
  FockSpace space_;
  Operator driver_;
  Operator problem_;
  Operator conv_derivative_;
};

struct LabFrameParams {
  double omega_lab = 0.0;
  double chi = 1.0;
  double p = 0.0;
  double p_prime = 0.0;
  double omega_prime = 0.0;
  double delta = 0.0;
};

/// omega_lab n + chi n^2 + p'(a^2 + a^dagger^2)[cos((w'+d)t) + cos((w'-d)t)] + 2p(a^2 + a^dagger^2)cos(w't)
TimeDependentHamiltonian build_labframe_hamiltonian(const LabFrameParams& lab, const FockSpace& space);

/// Effective Hamiltonian in the frame rotating at w'/2:
/// (omega_lab - w'/2) n + chi n^2 + p(a^2 + a^dagger^2) + p'(a^2 + a^dagger^2) cos(d t)
TimeDependentHamiltonian build_rotating_hamiltonian(const LabFrameParams& lab, const FockSpace& space);

}  // namespace kpoqa
