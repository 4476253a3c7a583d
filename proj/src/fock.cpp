#include "kpoqa/fock.hpp"

#include <cmath>
#include <sstream>

#include "kpoqa/error.hpp"
#include "kpoqa/log.hpp"

namespace kpoqa {

FockSpace::FockSpace(std::vector<int> cutoffs) : cutoffs_(std::move(cutoffs)) {
  if (cutoffs_.empty()) throw InvalidArgument("FockSpace needs at least one mode");
  for (int n : cutoffs_) {
    if (n < 2) throw InvalidArgument("Fock cutoff must be >= 2, got " + std::to_string(n));
  }
  strides_.assign(cutoffs_.size(), 1);
  for (int j = modes() - 2; j >= 0; --j) strides_[j] = strides_[j + 1] * cutoffs_[j + 1];
  dim_ = strides_[0] * cutoffs_[0];
}

FockSpace FockSpace::uniform(int modes, int cutoff) {
  if (modes < 1) throw InvalidArgument("mode count must be positive");
  return FockSpace(std::vector<int>(static_cast<std::size_t>(modes), cutoff));
}

int FockSpace::cutoff(int mode) const {
  if (mode < 0 || mode >= modes()) throw InvalidArgument("mode index out of range");
  return cutoffs_[mode];
}

Eigen::Index FockSpace::stride(int mode) const {
  if (mode < 0 || mode >= modes()) throw InvalidArgument("mode index out of range");
  return strides_[mode];
}

Eigen::Index FockSpace::index(std::span<const int> occupation) const {
  if (static_cast<int>(occupation.size()) != modes())
    throw InvalidArgument("occupation length does not match mode count");
  Eigen::Index idx = 0;
  for (int j = 0; j < modes(); ++j) {
    if (occupation[j] < 0 || occupation[j] >= cutoffs_[j])
      throw InvalidArgument("occupation outside truncated space");
    idx += occupation[j] * strides_[j];
  }
  return idx;
}

std::vector<int> FockSpace::occupation(Eigen::Index index) const {
  if (index < 0 || index >= dim_) throw InvalidArgument("basis index out of range");
  std::vector<int> occ(cutoffs_.size());
  for (int j = 0; j < modes(); ++j) {
    occ[j] = static_cast<int>(index / strides_[j]);
    index %= strides_[j];
  }
  return occ;
}

void require_same_space(const FockSpace& a, const FockSpace& b, const char* what) {
  if (!(a == b)) {
    std::ostringstream os;
    os << what << ": operands live on different Fock spaces";
    throw SpaceMismatch(os.str());
  }
}

Operator::Operator(FockSpace space, Matrix matrix)
    : space_(std::move(space)), matrix_(std::move(matrix)) {
  if (matrix_.rows() != space_.dim() || matrix_.cols() != space_.dim())
    throw SpaceMismatch("operator matrix shape does not match space dimension");
}

Operator Operator::zero(const FockSpace& space) {
  return Operator(space, Matrix::Zero(space.dim(), space.dim()));
}

Operator Operator::identity(const FockSpace& space) {
  return Operator(space, Matrix::Identity(space.dim(), space.dim()));
}

Operator Operator::adjoint() const { return Operator(space_, matrix_.adjoint()); }

double Operator::hermiticity_error() const {
  return (matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff();
}

double Operator::spectral_norm() const {
  if (is_hermitian(1e-12)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(matrix_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::JacobiSVD<Matrix> svd(matrix_);
  return svd.singularValues()(0);
}

Operator& Operator::operator+=(const Operator& rhs) {
  require_same_space(space_, rhs.space_, "operator +");
  matrix_ += rhs.matrix_;
  return *this;
}

Operator& Operator::operator-=(const Operator& rhs) {
  require_same_space(space_, rhs.space_, "operator -");
  matrix_ -= rhs.matrix_;
  return *this;
}

Operator& Operator::operator*=(cplx scale) {
  matrix_ *= scale;
  return *this;
}

Operator operator*(const Operator& lhs, const Operator& rhs) {
  require_same_space(lhs.space(), rhs.space(), "operator *");
  return Operator(lhs.space(), lhs.matrix() * rhs.matrix());
}

Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

StateVector::StateVector(FockSpace space, Vector amplitudes)
    : space_(std::move(space)), amplitudes_(std::move(amplitudes)) {
  if (amplitudes_.size() != space_.dim())
    throw SpaceMismatch("state length does not match space dimension");
  double n = amplitudes_.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-9)
    throw InvariantViolation("state vector is not normalized (norm " + std::to_string(n) + ")");
}

StateVector StateVector::basis(const FockSpace& space, std::span<const int> occupation) {
  Vector v = Vector::Zero(space.dim());
  v(space.index(occupation)) = 1.0;
  return StateVector(space, std::move(v));
}

StateVector StateVector::vacuum(const FockSpace& space) {
  Vector v = Vector::Zero(space.dim());
  v(0) = 1.0;
  return StateVector(space, std::move(v));
}

DensityMatrix::DensityMatrix(FockSpace space, Matrix matrix)
    : space_(std::move(space)), matrix_(std::move(matrix)) {
  if (matrix_.rows() != space_.dim() || matrix_.cols() != space_.dim())
    throw SpaceMismatch("density matrix shape does not match space dimension");
  cplx tr = matrix_.trace();
  if (std::abs(tr - 1.0) > 1e-8)
    throw InvariantViolation("density matrix trace is " + std::to_string(tr.real()));
  if (hermiticity_error() > 1e-10) throw InvariantViolation("density matrix is not Hermitian");
}

DensityMatrix DensityMatrix::pure(const StateVector& psi) {
  const Vector& v = psi.amplitudes();
  return DensityMatrix(psi.space(), v * v.adjoint());
}

double DensityMatrix::purity() const { return (matrix_ * matrix_).trace().real(); }

double DensityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(matrix_, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double DensityMatrix::hermiticity_error() const {
  return (matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff();
}

Operator annihilation(const FockSpace& space, int mode) {
  const int n = space.cutoff(mode);
  const Eigen::Index stride = space.stride(mode);
  Matrix m = Matrix::Zero(space.dim(), space.dim());
  for (Eigen::Index i = 0; i < space.dim(); ++i) {
    int k = static_cast<int>((i / stride) % n);
    if (k > 0) m(i - stride, i) = std::sqrt(static_cast<double>(k));
  }
  return Operator(space, std::move(m));
}

Operator creation(const FockSpace& space, int mode) { return annihilation(space, mode).adjoint(); }

Operator number(const FockSpace& space, int mode) {
  const int n = space.cutoff(mode);
  const Eigen::Index stride = space.stride(mode);
  Matrix m = Matrix::Zero(space.dim(), space.dim());
  for (Eigen::Index i = 0; i < space.dim(); ++i) m(i, i) = static_cast<double>((i / stride) % n);
  return Operator(space, std::move(m));
}

Operator total_number(const FockSpace& space) {
  Operator out = Operator::zero(space);
  for (int j = 0; j < space.modes(); ++j) out += number(space, j);
  return out;
}

Operator quad_x(const FockSpace& space, int mode) {
  Operator a = annihilation(space, mode);
  return a.adjoint() + a;
}

Operator quad_p(const FockSpace& space, int mode) {
  Operator a = annihilation(space, mode);
  return cplx(0, -1) * (a.adjoint() - a);
}

Operator parity_total(const FockSpace& space) {
  Matrix m = Matrix::Zero(space.dim(), space.dim());
  for (Eigen::Index i = 0; i < space.dim(); ++i) {
    int total = 0;
    for (int k : space.occupation(i)) total += k;
    m(i, i) = (total % 2 == 0) ? 1.0 : -1.0;
  }
  return Operator(space, std::move(m));
}

double coherent_tail_weight(cplx alpha, int cutoff) {
  // 1 - sum_{k<N} e^{-|a|^2} |a|^{2k}/k!, summed in the retained part for accuracy at small |a|.
  const double x = std::norm(alpha);
  if (x == 0.0) return 0.0;
  double term = std::exp(-x);
  double kept = 0.0;
  for (int k = 0; k < cutoff; ++k) {
    kept += term;
    term *= x / (k + 1);
  }
  // Direct tail sum is more accurate when the tail is tiny.
  double tail = 0.0;
  for (int k = cutoff; k < cutoff + 400; ++k) {
    tail += term;
    term *= x / (k + 1);
    if (term < 1e-300 || term < 1e-18 * tail) break;
  }
  return std::min(tail, std::max(0.0, 1.0 - kept));
}

StateVector coherent_state(const FockSpace& space, std::span<const cplx> amplitudes) {
  if (static_cast<int>(amplitudes.size()) != space.modes())
    throw InvalidArgument("one coherent amplitude per mode required");
  std::vector<Vector> factors;
  for (int j = 0; j < space.modes(); ++j) {
    const cplx alpha = amplitudes[j];
    const int n = space.cutoff(j);
    double tail = coherent_tail_weight(alpha, n);
    if (tail > 1e-3) {
      std::ostringstream os;
      os << "coherent amplitude " << std::abs(alpha) << " on mode " << j
         << " loses " << tail << " of its weight at cutoff " << n;
      throw InvalidArgument(os.str());
    }
    if (tail > 1e-6) {
      std::ostringstream os;
      os << "coherent state on mode " << j << " truncation tail " << tail;
      warn(os.str());
    }
    Vector f(n);
    cplx c = std::exp(-0.5 * std::norm(alpha));
    for (int k = 0; k < n; ++k) {
      f(k) = c;
      c *= alpha / std::sqrt(static_cast<double>(k + 1));
    }
    f.normalize();
    factors.push_back(std::move(f));
  }
  Vector v(space.dim());
  for (Eigen::Index i = 0; i < space.dim(); ++i) {
    cplx amp = 1.0;
    auto occ = space.occupation(i);
    for (int j = 0; j < space.modes(); ++j) amp *= factors[j](occ[j]);
    v(i) = amp;
  }
  return StateVector(space, std::move(v));
}

cplx expectation(const Operator& op, const StateVector& psi) {
  require_same_space(op.space(), psi.space(), "expectation");
  return psi.amplitudes().dot(op.matrix() * psi.amplitudes());
}

cplx expectation(const Operator& op, const DensityMatrix& rho) {
  require_same_space(op.space(), rho.space(), "expectation");
  // Tr(O rho) without forming the product.
  return (op.matrix().transpose().cwiseProduct(rho.matrix())).sum();
}

double fidelity(const StateVector& a, const StateVector& b) {
  require_same_space(a.space(), b.space(), "fidelity");
  return std::norm(a.amplitudes().dot(b.amplitudes()));
}

double fidelity(const StateVector& psi, const DensityMatrix& rho) {
  require_same_space(psi.space(), rho.space(), "fidelity");
  return psi.amplitudes().dot(rho.matrix() * psi.amplitudes()).real();
}

}  // namespace kpoqa
