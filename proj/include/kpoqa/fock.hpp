#pragma once

// Truncated multi-mode bosonic Fock space and dense operators on it.
//
// Basis ordering: a basis state |k_0, k_1, ..., k_{K-1}> has flat index
//   sum_j k_j * stride_j,  stride_{K-1} = 1,  stride_j = stride_{j+1} * N_{j+1},
// so mode 0 is the slowest-varying tensor index (Kronecker order a_0 (x) a_1).

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace kpoqa {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

class FockSpace {
 public:
  /// One cutoff per mode; each cutoff is the number of retained levels (>= 2).
  explicit FockSpace(std::vector<int> cutoffs);

  /// K modes sharing the same cutoff.
  static FockSpace uniform(int modes, int cutoff);

  int modes() const { return static_cast<int>(cutoffs_.size()); }
  int cutoff(int mode) const;
  const std::vector<int>& cutoffs() const { return cutoffs_; }
  Eigen::Index dim() const { return dim_; }
  Eigen::Index stride(int mode) const;

  Eigen::Index index(std::span<const int> occupation) const;
  std::vector<int> occupation(Eigen::Index index) const;

  bool operator==(const FockSpace& other) const { return cutoffs_ == other.cutoffs_; }

 private:
  std::vector<int> cutoffs_;
  std::vector<Eigen::Index> strides_;
  Eigen::Index dim_ = 1;
};

void require_same_space(const FockSpace& a, const FockSpace& b, const char* what);

class Operator {
 public:
  Operator(FockSpace space, Matrix matrix);

  static Operator zero(const FockSpace& space);
  static Operator identity(const FockSpace& space);

  const FockSpace& space() const { return space_; }
  const Matrix& matrix() const { return matrix_; }

  Operator adjoint() const;
  /// max |M - M^dagger|
  double hermiticity_error() const;
  bool is_hermitian(double tol = 1e-12) const { return hermiticity_error() <= tol; }
  /// Largest absolute eigenvalue for Hermitian operators, largest singular value otherwise.
  double spectral_norm() const;

  Operator& operator+=(const Operator& rhs);
  Operator& operator-=(const Operator& rhs);
  Operator& operator*=(cplx scale);

  friend Operator operator+(Operator lhs, const Operator& rhs) { return lhs += rhs; }
  friend Operator operator-(Operator lhs, const Operator& rhs) { return lhs -= rhs; }
  friend Operator operator*(Operator op, cplx scale) { return op *= scale; }
  friend Operator operator*(cplx scale, Operator op) { return op *= scale; }
  friend Operator operator*(const Operator& lhs, const Operator& rhs);

 private:
  FockSpace space_;
  Matrix matrix_;
};

Operator commutator(const Operator& a, const Operator& b);

class StateVector {
 public:
  /// Throws unless the amplitudes are normalized to 1e-9.
  StateVector(FockSpace space, Vector amplitudes);

  static StateVector basis(const FockSpace& space, std::span<const int> occupation);
  static StateVector vacuum(const FockSpace& space);

  const FockSpace& space() const { return space_; }
  const Vector& amplitudes() const { return amplitudes_; }
  double norm() const { return amplitudes_.norm(); }

 private:
  FockSpace space_;
  Vector amplitudes_;
};

class DensityMatrix {
 public:
  /// Throws unless trace = 1 +- 1e-8 and hermiticity error <= 1e-10.
  DensityMatrix(FockSpace space, Matrix matrix);

  static DensityMatrix pure(const StateVector& psi);

  const FockSpace& space() const { return space_; }
  const Matrix& matrix() const { return matrix_; }

  cplx trace() const { return matrix_.trace(); }
  double purity() const;
  double min_eigenvalue() const;
  double hermiticity_error() const;

 private:
  FockSpace space_;
  Matrix matrix_;
};

// Single-mode ladder operators embedded with identities on the other modes.
Operator annihilation(const FockSpace& space, int mode);
Operator creation(const FockSpace& space, int mode);
Operator number(const FockSpace& space, int mode);
/// Sum of the number operators of all modes.
Operator total_number(const FockSpace& space);
/// x = a^dagger + a
Operator quad_x(const FockSpace& space, int mode);
/// p = -i (a^dagger - a)
Operator quad_p(const FockSpace& space, int mode);
/// prod_j exp(i pi a_j^dagger a_j); diagonal with entries (-1)^(sum_j k_j).
Operator parity_total(const FockSpace& space);

/// Weight a coherent state of amplitude alpha puts on levels >= cutoff.
double coherent_tail_weight(cplx alpha, int cutoff);

/// Product of truncated coherent states, renormalized after truncation.
/// Warns when a mode's discarded tail weight exceeds 1e-6, throws above 1e-3.
StateVector coherent_state(const FockSpace& space, std::span<const cplx> amplitudes);

cplx expectation(const Operator& op, const StateVector& psi);
cplx expectation(const Operator& op, const DensityMatrix& rho);

/// |<a|b>|^2
double fidelity(const StateVector& a, const StateVector& b);
/// <psi|rho|psi> for a pure reference state.
double fidelity(const StateVector& psi, const DensityMatrix& rho);

}  // namespace kpoqa
