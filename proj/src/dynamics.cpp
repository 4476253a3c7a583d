#include "kpoqa/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "kpoqa/error.hpp"
#include "kpoqa/log.hpp"

namespace kpoqa {

namespace {

const cplx I(0.0, 1.0);

double hermitian_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct StepPlan {
  long steps = 0;
  double h = 0.0;
};

StepPlan plan_steps(double t0, double t1, double dt) {
  if (!(t1 >= t0)) throw InvalidArgument("propagation requires t1 >= t0");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  StepPlan p;
  const double span = t1 - t0;
  if (span == 0.0) return p;
  p.steps = static_cast<long>(std::ceil(span / dt - 1e-9));
  if (p.steps < 1) p.steps = 1;
  p.h = span / static_cast<double>(p.steps);
  return p;
}

void check_step_ratio(const MatrixHamiltonian& h, const IntegratorConfig& cfg, double step) {
  if (cfg.method != Method::rk4) return;
  const double ratio = step * h.norm_bound();
  if (ratio > cfg.max_ratio) {
    std::ostringstream os;
    os << "dt*||H|| = " << ratio << " exceeds the RK4 stability guard " << cfg.max_ratio;
    throw InvalidArgument(os.str());
  }
  if (ratio > cfg.warn_ratio) {
    std::ostringstream os;
    os << "dt*||H|| = " << ratio << " is above " << cfg.warn_ratio << "; accuracy not guaranteed";
    warn(os.str());
  }
}

bool is_sample(long step, long steps, int stride) {
  return step == steps || (stride > 0 && step % stride == 0);
}

// Coefficient cache: one value per term at a given time.
void coefficients(const MatrixHamiltonian& h, double t, std::vector<double>& c) {
  c.resize(h.ops.size());
  for (std::size_t k = 0; k < h.ops.size(); ++k) c[k] = h.coeffs[k] ? h.coeffs[k](t) : 1.0;
}

void apply_h(const MatrixHamiltonian& h, const std::vector<double>& c, const Vector& x, Vector& out) {
  out.setZero();
  for (std::size_t k = 0; k < h.ops.size(); ++k) {
    if (c[k] == 0.0) continue;
    out.noalias() += c[k] * (h.ops[k] * x);
  }
}

void unitary_from(const Matrix& hm, double step, Matrix& u) {
  // Real symmetric input is common (real couplings) and diagonalizes several times faster.
  if (hm.imag().cwiseAbs().maxCoeff() == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hm.real());
    Vector phase = (-I * step * es.eigenvalues().cast<cplx>()).array().exp();
    const Matrix v = es.eigenvectors().cast<cplx>();
    u.noalias() = v * phase.asDiagonal() * v.transpose();
    return;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(hm);
  Vector phase = (-I * step * es.eigenvalues().cast<cplx>()).array().exp();
  u.noalias() = es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
}

// exp(-i H h) for H block diagonal under a fixed index partition (e.g. parity sectors).
class BlockUnitary {
 public:
  explicit BlockUnitary(const MatrixHamiltonian& h) {
    const Eigen::Index d = h.dim();
    std::vector<Eigen::Index> parent(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) parent[i] = i;
    auto find = [&](Eigen::Index i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    for (const auto& op : h.ops)
      for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index r = 0; r < d; ++r)
          if (op(r, c) != 0.0) parent[find(r)] = find(c);
    std::vector<Eigen::Index> slot(static_cast<std::size_t>(d), -1);
    for (Eigen::Index i = 0; i < d; ++i) {
      const Eigen::Index root = find(i);
      if (slot[root] < 0) {
        slot[root] = static_cast<Eigen::Index>(blocks_.size());
        blocks_.emplace_back();
      }
      blocks_[slot[root]].push_back(i);
    }
    u_.resize(blocks_.size());
  }

  void update(const Matrix& hm, double step) {
    if (blocks_.size() == 1) {
      unitary_from(hm, step, u_[0]);
      return;
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) unitary_from(hm(blocks_[b], blocks_[b]), step, u_[b]);
  }

  void apply(Vector& psi) const {
    if (blocks_.size() == 1) {
      tmp_vec_.noalias() = u_[0] * psi;
      psi.swap(tmp_vec_);
      return;
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      tmp_vec_ = u_[b] * psi(blocks_[b]);
      psi(blocks_[b]) = tmp_vec_;
    }
  }

  void apply(Matrix& rho) const {
    if (blocks_.size() == 1) {
      tmp_.noalias() = u_[0] * rho;
      rho.noalias() = tmp_ * u_[0].adjoint();
      return;
    }
    for (std::size_t a = 0; a < blocks_.size(); ++a) {
      for (std::size_t b = 0; b < blocks_.size(); ++b) {
        tmp_.noalias() = u_[a] * rho(blocks_[a], blocks_[b]);
        rho(blocks_[a], blocks_[b]) = tmp_ * u_[b].adjoint();
      }
    }
  }

 private:
  std::vector<std::vector<Eigen::Index>> blocks_;
  std::vector<Matrix> u_;
  mutable Matrix tmp_;
  mutable Vector tmp_vec_;
};

void check_vector(const Vector& psi, double norm0, double t, const IntegratorConfig& cfg) {
  if (!cfg.check_invariants) return;
  if (!psi.allFinite()) throw InvariantViolation("state became non-finite at t = " + std::to_string(t));
  const double drift = std::abs(psi.norm() - norm0);
  if (drift > cfg.norm_tol) {
    std::ostringstream os;
    os << "norm drift " << drift << " at t = " << t << " exceeds " << cfg.norm_tol;
    throw InvariantViolation(os.str());
  }
}

void check_density(const Matrix& rho, cplx trace0, double t, const IntegratorConfig& cfg, bool positivity) {
  if (!cfg.check_invariants) return;
  if (!rho.allFinite()) throw InvariantViolation("density matrix became non-finite at t = " + std::to_string(t));
  std::ostringstream os;
  const double drift = std::abs(rho.trace() - trace0);
  if (drift > cfg.trace_tol) {
    os << "trace drift " << drift << " at t = " << t << " exceeds " << cfg.trace_tol;
    throw InvariantViolation(os.str());
  }
  const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  if (herm > cfg.hermiticity_tol) {
    os << "hermiticity error " << herm << " at t = " << t;
    throw InvariantViolation(os.str());
  }
  if (positivity) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0);
    if (lo < -cfg.positivity_tol) {
      os << "density matrix eigenvalue " << lo << " at t = " << t;
      throw InvariantViolation(os.str());
    }
  }
}

class Dissipator {
 public:
  explicit Dissipator(const std::vector<SparseMatrix>& jumps) : jumps_(jumps) {
    for (const auto& l : jumps_) adjoints_.emplace_back(l.adjoint());
    for (const auto& l : jumps_) {
      if (l.nonZeros() == 0) continue;
      SparseMatrix k = SparseMatrix(l.adjoint()) * l;
      if (!active_) {
        decay_ = k;
        active_ = true;
      } else {
        decay_ += k;
      }
    }
    if (active_) decay_dense_ = Matrix(decay_);
  }

  bool active() const { return active_; }
  /// sum_j L_j^dagger L_j
  const Matrix& decay() const { return decay_dense_; }

  // Sparse operands are kept on the right: dense * sparse is far faster in Eigen.

  /// out += sum_j L rho L^dagger, as ((rho L^dagger)^dagger) L^dagger for Hermitian rho.
  void add_jumps(const Matrix& rho, Matrix& out) const {
    for (std::size_t j = 0; j < jumps_.size(); ++j) {
      if (jumps_[j].nonZeros() == 0) continue;
      tmp_.noalias() = rho * adjoints_[j];
      tmp2_ = tmp_.adjoint();
      out.noalias() += tmp2_ * adjoints_[j];
    }
  }

  /// drho = sum_j L rho L^dagger - {K, rho}/2, using K rho = (rho K)^dagger.
  void rhs(const Matrix& rho, Matrix& out) const {
    tmp_.noalias() = rho * decay_;
    out = -0.5 * (tmp_ + tmp_.adjoint());
    add_jumps(rho, out);
  }

  /// Classic RK4 on the dissipator alone.
  void step(Matrix& rho, double h) const {
    if (!active_) return;
    rhs(rho, k1_);
    y_ = rho + 0.5 * h * k1_;
    rhs(y_, k2_);
    y_ = rho + 0.5 * h * k2_;
    rhs(y_, k3_);
    y_ = rho + h * k3_;
    rhs(y_, k4_);
    rho += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

 private:
  const std::vector<SparseMatrix>& jumps_;
  std::vector<SparseMatrix> adjoints_;
  SparseMatrix decay_;
  Matrix decay_dense_;
  bool active_ = false;
  mutable Matrix tmp_, tmp2_, k1_, k2_, k3_, k4_, y_;
};

}  // namespace

MatrixHamiltonian MatrixHamiltonian::from(const TimeDependentHamiltonian& h) {
  MatrixHamiltonian m;
  for (const auto& term : h.terms()) m.add(term.op.matrix(), term.coeff, term.bound);
  return m;
}

void MatrixHamiltonian::add(Matrix op, TimeDependentHamiltonian::Coefficient coeff, double bound) {
  if (!ops.empty() && (op.rows() != ops.front().rows() || op.cols() != ops.front().cols()))
    throw SpaceMismatch("Hamiltonian terms have different shapes");
  ops.push_back(std::move(op));
  coeffs.push_back(std::move(coeff));
  bounds.push_back(bound);
}

Eigen::Index MatrixHamiltonian::dim() const { return ops.empty() ? 0 : ops.front().rows(); }

bool MatrixHamiltonian::is_constant() const {
  for (const auto& c : coeffs)
    if (c) return false;
  return true;
}

double MatrixHamiltonian::norm_bound() const {
  double b = 0.0;
  for (std::size_t k = 0; k < ops.size(); ++k) b += std::abs(bounds[k]) * hermitian_norm(ops[k]);
  return b;
}

void MatrixHamiltonian::assemble(double t, Matrix& out) const {
  out.setZero(dim(), dim());
  for (std::size_t k = 0; k < ops.size(); ++k) {
    const double c = coeffs[k] ? coeffs[k](t) : 1.0;
    if (c != 0.0) out += c * ops[k];
  }
}

Vector propagate_vector(const MatrixHamiltonian& h, Vector psi, double t0, double t1,
                        const IntegratorConfig& cfg, const VectorObserver& observer) {
  if (h.ops.empty()) throw InvalidArgument("empty Hamiltonian");
  if (psi.size() != h.dim()) throw SpaceMismatch("state length does not match Hamiltonian");
  const StepPlan plan = plan_steps(t0, t1, cfg.dt);
  check_step_ratio(h, cfg, plan.h);
  const double norm0 = psi.norm();
  if (observer) observer(t0, psi);
  if (plan.steps == 0) return psi;

  const double step = plan.h;
  if (cfg.method == Method::rk4) {
    std::vector<double> c0, cm, c1;
    Vector k1(psi.size()), k2(psi.size()), k3(psi.size()), k4(psi.size()), y(psi.size());
    for (long i = 0; i < plan.steps; ++i) {
      const double t = t0 + static_cast<double>(i) * step;
      coefficients(h, t, c0);
      coefficients(h, t + 0.5 * step, cm);
      coefficients(h, t + step, c1);
      apply_h(h, c0, psi, k1);
      k1 *= -I;
      y = psi + (0.5 * step) * k1;
      apply_h(h, cm, y, k2);
      k2 *= -I;
      y = psi + (0.5 * step) * k2;
      apply_h(h, cm, y, k3);
      k3 *= -I;
      y = psi + step * k3;
      apply_h(h, c1, y, k4);
      k4 *= -I;
      psi += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (is_sample(i + 1, plan.steps, cfg.sample_stride)) {
        const double ts = (i + 1 == plan.steps) ? t1 : t0 + static_cast<double>(i + 1) * step;
        check_vector(psi, norm0, ts, cfg);
        if (observer) observer(ts, psi);
      }
    }
  } else {
    Matrix hm;
    BlockUnitary u(h);
    const bool constant = h.is_constant();
    if (constant) {
      h.assemble(t0, hm);
      u.update(hm, step);
    }
    for (long i = 0; i < plan.steps; ++i) {
      if (!constant) {
        h.assemble(t0 + (static_cast<double>(i) + 0.5) * step, hm);
        u.update(hm, step);
      }
      u.apply(psi);
      if (is_sample(i + 1, plan.steps, cfg.sample_stride)) {
        const double ts = (i + 1 == plan.steps) ? t1 : t0 + static_cast<double>(i + 1) * step;
        check_vector(psi, norm0, ts, cfg);
        if (observer) observer(ts, psi);
      }
    }
  }
  return psi;
}

Matrix propagate_density(const MatrixHamiltonian& h, const std::vector<SparseMatrix>& jumps, Matrix rho,
                         double t0, double t1, const IntegratorConfig& cfg, const DensityObserver& observer) {
  if (h.ops.empty()) throw InvalidArgument("empty Hamiltonian");
  if (rho.rows() != h.dim() || rho.cols() != h.dim())
    throw SpaceMismatch("density matrix shape does not match Hamiltonian");
  for (const auto& l : jumps)
    if (l.rows() != h.dim() || l.cols() != h.dim()) throw SpaceMismatch("jump operator shape mismatch");
  const StepPlan plan = plan_steps(t0, t1, cfg.dt);
  check_step_ratio(h, cfg, plan.h);
  const cplx trace0 = rho.trace();
  if (observer) observer(t0, rho);
  if (plan.steps == 0) return rho;

  const Dissipator diss(jumps);
  const double step = plan.h;
  const Eigen::Index d = rho.rows();

  if (cfg.method == Method::rk4) {
    const bool constant = h.is_constant();
    Matrix heff(d, d), x(d, d), k1(d, d), k2(d, d), k3(d, d), k4(d, d), y(d, d);
    Matrix heff0, heffm, heff1;
    auto build = [&](double t, Matrix& out) {
      h.assemble(t, out);
      if (diss.active()) out -= (0.5 * I) * diss.decay();
    };
    auto rhs = [&](const Matrix& hm, const Matrix& r, Matrix& out) {
      x.noalias() = hm * r;
      out = -I * (x - x.adjoint());
      diss.add_jumps(r, out);
    };
    if (constant) build(t0, heff0);
    for (long i = 0; i < plan.steps; ++i) {
      const double t = t0 + static_cast<double>(i) * step;
      const Matrix* a0 = &heff0;
      const Matrix* am = &heff0;
      const Matrix* a1 = &heff0;
      if (!constant) {
        build(t, heff0);
        build(t + 0.5 * step, heffm);
        build(t + step, heff1);
        am = &heffm;
        a1 = &heff1;
      }
      rhs(*a0, rho, k1);
      y = rho + (0.5 * step) * k1;
      rhs(*am, y, k2);
      y = rho + (0.5 * step) * k2;
      rhs(*am, y, k3);
      y = rho + step * k3;
      rhs(*a1, y, k4);
      rho += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (is_sample(i + 1, plan.steps, cfg.sample_stride)) {
        const double ts = (i + 1 == plan.steps) ? t1 : t0 + static_cast<double>(i + 1) * step;
        check_density(rho, trace0, ts, cfg, cfg.positivity_at_samples);
        if (observer) observer(ts, rho);
      }
    }
  } else {
    Matrix hm;
    BlockUnitary u(h);
    const bool constant = h.is_constant();
    if (constant) {
      h.assemble(t0, hm);
      u.update(hm, step);
    }
    bool fresh = true;
    for (long i = 0; i < plan.steps; ++i) {
      if (!constant) {
        h.assemble(t0 + (static_cast<double>(i) + 0.5) * step, hm);
        u.update(hm, step);
      }
      // Adjacent dissipator half-steps are merged between samples.
      diss.step(rho, fresh ? 0.5 * step : step);
      u.apply(rho);
      const bool sample = is_sample(i + 1, plan.steps, cfg.sample_stride);
      fresh = sample;
      if (sample) {
        diss.step(rho, 0.5 * step);
        const double ts = (i + 1 == plan.steps) ? t1 : t0 + static_cast<double>(i + 1) * step;
        // Rounding in U rho U^dagger leaves a tiny anti-Hermitian part.
        rho = 0.5 * (rho + rho.adjoint()).eval();
        check_density(rho, trace0, ts, cfg, cfg.positivity_at_samples);
        if (observer) observer(ts, rho);
      }
    }
  }
  check_density(rho, trace0, t1, cfg, true);
  return rho;
}

std::vector<SparseMatrix> to_sparse(const std::vector<Operator>& ops) {
  std::vector<SparseMatrix> out;
  for (const auto& op : ops) out.push_back(op.matrix().sparseView(cplx(0.0), 1e-300));
  return out;
}

StateTrajectory evolve_state(const TimeDependentHamiltonian& h, const StateVector& psi0, double t0, double t1,
                             const IntegratorConfig& cfg) {
  require_same_space(h.space(), psi0.space(), "evolve_state");
  StateTrajectory traj;
  const auto& space = psi0.space();
  propagate_vector(MatrixHamiltonian::from(h), psi0.amplitudes(), t0, t1, cfg, [&](double t, const Vector& v) {
    traj.times.push_back(t);
    // Drift is already asserted by the integrator; snapshots are stored normalized.
    traj.states.emplace_back(space, v.normalized());
  });
  return traj;
}

DensityTrajectory evolve_density(const TimeDependentHamiltonian& h, const std::vector<Operator>& lindblad,
                                 const DensityMatrix& rho0, double t0, double t1, const IntegratorConfig& cfg) {
  require_same_space(h.space(), rho0.space(), "evolve_density");
  for (const auto& l : lindblad) require_same_space(h.space(), l.space(), "evolve_density");
  DensityTrajectory traj;
  const auto& space = rho0.space();
  propagate_density(MatrixHamiltonian::from(h), to_sparse(lindblad), rho0.matrix(), t0, t1, cfg,
                    [&](double t, const Matrix& r) {
                      traj.times.push_back(t);
                      traj.states.emplace_back(space, r);
                    });
  return traj;
}

std::vector<std::pair<double, double>> expectation_series(const StateTrajectory& traj, const Operator& op) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < traj.states.size(); ++i)
    out.emplace_back(traj.times[i], expectation(op, traj.states[i]).real());
  return out;
}

std::vector<std::pair<double, double>> expectation_series(const DensityTrajectory& traj, const Operator& op) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < traj.states.size(); ++i)
    out.emplace_back(traj.times[i], expectation(op, traj.states[i]).real());
  return out;
}

}  // namespace kpoqa
