#include "kpoqa/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kpoqa/error.hpp"

namespace kpoqa {

namespace {

Eigen::Index dominant_index(const Vector& v) {
  const double top = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) >= top * (1.0 - 1e-10)) return i;
  return 0;
}

void fix_phase(Vector& v) {
  const cplx a = v(dominant_index(v));
  if (std::abs(a) > 0.0) v *= std::conj(a) / std::abs(a);
}

// Orthonormal basis of span(b) that depends only on the projector b b^dagger.
Matrix canonical_basis(const Matrix& b) {
  const Eigen::Index d = b.rows(), k = b.cols();
  if (k == 1) return b;
  Matrix p = b * b.adjoint();
  Matrix out(d, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    double best_norm = -1.0;
    Vector best_r;
    for (Eigen::Index i = 0; i < d; ++i) {
      Vector r = p.col(i);
      for (Eigen::Index q = 0; q < j; ++q) r -= out.col(q) * out.col(q).dot(r);
      const double n = r.norm();
      if (n > best_norm * (1.0 + 1e-12)) {
        best_norm = n;
        best_r = std::move(r);
      }
    }
    out.col(j) = best_r / best_norm;
  }
  return out;
}

bool conserves_parity(const Operator& h, const Operator& parity) {
  return commutator(h, parity).matrix().cwiseAbs().maxCoeff() <= 1e-8;
}

double relative_change(double a, double b) { return std::abs(b - a) / std::max(std::abs(a), 1e-12); }

}  // namespace

cplx EigenSystem::element(const Operator& op, Eigen::Index m, Eigen::Index n) const {
  if (m < 0 || n < 0 || m >= size() || n >= size()) throw InvalidArgument("level index out of range");
  if (op.matrix().rows() != vectors.rows()) throw SpaceMismatch("operator does not match eigensystem");
  return vectors.col(m).dot(op.matrix() * vectors.col(n));
}

Matrix EigenSystem::transform(const Operator& op) const {
  if (op.matrix().rows() != vectors.rows()) throw SpaceMismatch("operator does not match eigensystem");
  return vectors.adjoint() * op.matrix() * vectors;
}

EigenSystem eigensystem(const Operator& h) {
  if (!h.is_hermitian(1e-12)) throw InvalidArgument("eigensystem requires a Hermitian operator");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(h.matrix());
  if (solver.info() != Eigen::Success) throw InvariantViolation("eigensolver did not converge");
  EigenSystem es{solver.eigenvalues(), solver.eigenvectors()};

  const Eigen::Index n = es.size();
  const double scale = std::max(1.0, es.energies.cwiseAbs().maxCoeff());
  const double tol = 1e-9 * scale;
  const Operator parity = parity_total(h.space());
  std::optional<bool> parity_ok;

  Eigen::Index start = 0;
  while (start < n) {
    Eigen::Index end = start + 1;
    while (end < n && es.energies(end) - es.energies(end - 1) <= tol) ++end;
    const Eigen::Index k = end - start;
    if (k > 1) {
      Matrix block = es.vectors.middleCols(start, k);
      std::vector<Matrix> groups;
      if (!parity_ok) parity_ok = conserves_parity(h, parity);
      if (*parity_ok) {
        Matrix pb = block.adjoint() * parity.matrix() * block;
        Eigen::SelfAdjointEigenSolver<Matrix> ps(0.5 * (pb + pb.adjoint()));
        Matrix rotated = block * ps.eigenvectors();
        Eigen::Index split = 0;
        while (split < k && ps.eigenvalues()(split) < 0.0) ++split;
        if (split > 0) groups.push_back(rotated.leftCols(split));
        if (split < k) groups.push_back(rotated.rightCols(k - split));
      } else {
        groups.push_back(block);
      }
      std::vector<Vector> members;
      for (const auto& g : groups) {
        Matrix c = canonical_basis(g);
        for (Eigen::Index j = 0; j < c.cols(); ++j) members.emplace_back(c.col(j));
      }
      for (auto& v : members) fix_phase(v);
      std::stable_sort(members.begin(), members.end(),
                       [](const Vector& a, const Vector& b) { return dominant_index(a) < dominant_index(b); });
      for (Eigen::Index j = 0; j < k; ++j) es.vectors.col(start + j) = members[j];
    } else {
      Vector v = es.vectors.col(start);
      fix_phase(v);
      es.vectors.col(start) = v;
    }
    start = end;
  }
  return es;
}

AdiabaticMetric adiabatic_metric(const EigenSystem& es, const Operator& hdot, int m) {
  if (m < 1 || m >= es.size()) throw InvalidArgument("level m out of range: " + std::to_string(m));
  AdiabaticMetric out;
  out.level = m;
  out.gap = es.energies(m) - es.energies(0);
  if (out.gap <= 1e-10) {
    std::ostringstream os;
    os << "gap E_" << m << " - E_0 = " << out.gap << " is too small";
    throw VanishingGap(os.str());
  }
  out.numerator = std::abs(es.element(hdot, m, 0));
  out.value = out.numerator / (out.gap * out.gap);
  return out;
}

AdiabaticMetric adiabatic_metric_exact(const KpoModel& model, const ProtocolSchedule& schedule, int m) {
  const EigenSystem es = eigensystem(model.qa_hamiltonian_at(schedule, schedule.s1));
  AdiabaticMetric out = adiabatic_metric(es, model.conv_derivative(), m);
  out.s1 = schedule.s1;
  return out;
}

int suggest_level(const EigenSystem& es, const Operator& h, const Operator& hdot, double tol) {
  const Operator parity = parity_total(h.space());
  const bool use_parity = conserves_parity(h, parity);
  const double p0 = use_parity ? es.element(parity, 0, 0).real() : 0.0;
  for (Eigen::Index m = 1; m < es.size(); ++m) {
    if (es.energies(m) - es.energies(0) <= 1e-10) continue;
    if (use_parity && es.element(parity, m, m).real() * p0 < 0.0) continue;
    if (std::abs(es.element(hdot, m, 0)) > tol) return static_cast<int>(m);
  }
  throw InvalidArgument("no level couples to the ground state");
}

double rabi_frequency_analytic(double omega, double lambda, double matrix_element, double gap) {
  return std::hypot(lambda * std::abs(matrix_element), omega - gap);
}

double rabi_frequency_excited_pair(double omega, double lambda, const EigenSystem& es, const Operator& hdot,
                                   int n, int m) {
  const double coupling = std::abs(es.element(hdot, m, n));
  return std::hypot(lambda * coupling, omega - (es.energies(m) - es.energies(n)));
}

TwoPhotonLine two_photon_rabi(const EigenSystem& es, const Operator& hprime, double g, double omega, int n, int k) {
  if (n < 0 || k < 0 || n >= es.size() || k >= es.size() || n == k)
    throw InvalidArgument("two-photon levels must be distinct and in range");
  const double en = es.energies(n), ek = es.energies(k);
  if (std::abs(ek - en) < 1e-12) throw SingularConfiguration("levels n and k are degenerate");
  if (omega == 0.0) throw SingularConfiguration("frame factor vanishes at omega = 0");
  const Matrix hp = es.transform(hprime);
  TwoPhotonLine line;
  line.alpha_b = 2.0 * omega / (ek - en);
  cplx sum = 0.0;
  for (Eigen::Index m = 0; m < es.size(); ++m) {
    const double denom = 2.0 * es.energies(m) - en - ek;
    if (std::abs(denom) < 1e-8) {
      std::ostringstream os;
      os << "intermediate level " << m << " has 2E_m - E_n - E_k = " << denom;
      throw SingularConfiguration(os.str());
    }
    sum += hp(n, m) * hp(m, k) / (line.alpha_b * denom);
  }
  line.element = -0.5 * g * g * sum;
  line.frequency = std::hypot(ek - en - 2.0 * omega, std::abs(line.element));
  return line;
}

TwoPhotonLine two_photon_rabi(const Operator& h0, const Operator& hprime, double g, double omega, int n, int k) {
  require_same_space(h0.space(), hprime.space(), "two_photon_rabi");
  return two_photon_rabi(eigensystem(h0), hprime, g, omega, n, k);
}

std::vector<int> parity_sector_labels(const Operator& h, const EigenSystem& es) {
  const Operator parity = parity_total(h.space());
  const double comm = commutator(h, parity).matrix().cwiseAbs().maxCoeff();
  if (comm > 1e-8) {
    std::ostringstream os;
    os << "Hamiltonian does not conserve parity (||[H, P]|| = " << comm << ")";
    throw InvalidArgument(os.str());
  }
  std::vector<int> labels;
  for (Eigen::Index m = 0; m < es.size(); ++m) {
    const double p = es.element(parity, m, m).real();
    const int label = p >= 0.0 ? 1 : -1;
    if (std::abs(p - label) > 1e-6) {
      std::ostringstream os;
      os << "level " << m << " has mixed parity " << p;
      throw InvariantViolation(os.str());
    }
    labels.push_back(label);
  }
  return labels;
}

std::vector<int> parity_sector_labels(const Operator& h) { return parity_sector_labels(h, eigensystem(h)); }

RwaCheck rwa_equivalence_check(const LabFrameParams& lab, double t_final, int cutoff, double dt) {
  const FockSpace space({cutoff});
  IntegratorConfig cfg;
  cfg.sample_stride = 0;
  const Vector vac = StateVector::vacuum(space).amplitudes();
  auto evolve = [&](const MatrixHamiltonian& h) {
    // The lab-frame norm is dominated by omega_lab * N, so the step follows the norm.
    cfg.dt = std::min(dt, 0.03 / h.norm_bound());
    return propagate_vector(h, vac, 0.0, t_final, cfg);
  };
  const Vector lab_state = evolve(MatrixHamiltonian::from(build_labframe_hamiltonian(lab, space)));
  const Vector rot_state = evolve(MatrixHamiltonian::from(build_rotating_hamiltonian(lab, space)));
  Vector mapped(cutoff);
  for (int k = 0; k < cutoff; ++k)
    mapped(k) = std::exp(cplx(0.0, 0.5 * lab.omega_prime * t_final * k)) * lab_state(k);
  RwaCheck out;
  out.t_final = t_final;
  out.infidelity = 1.0 - std::norm(rot_state.dot(mapped));
  return out;
}

VisibilityReport visibility_check(const Operator& op, const StateVector& ground, const StateVector& excited,
                                  double tol) {
  VisibilityReport r;
  r.diagonal_difference = expectation(op, ground) - expectation(op, excited);
  require_same_space(op.space(), excited.space(), "visibility_check");
  r.coherence = excited.amplitudes().dot(op.matrix() * ground.amplitudes());
  r.visible = !(std::abs(r.diagonal_difference) <= tol && std::abs(r.coherence.imag()) <= tol);
  return r;
}

ConvergenceReport cutoff_convergence(const KpoNetworkParams& params, const ProtocolSchedule& schedule,
                                     const std::vector<int>& cutoffs, int m, int increment, double tol) {
  ConvergenceReport r;
  r.cutoffs = cutoffs;
  r.raised_cutoffs = cutoffs;
  for (int& n : r.raised_cutoffs) n += increment;
  auto evaluate = [&](const std::vector<int>& cuts, double& e0, double& em, AdiabaticMetric& metric) {
    KpoModel model(params, FockSpace(cuts));
    const EigenSystem es = eigensystem(model.qa_hamiltonian_at(schedule, schedule.s1));
    metric = adiabatic_metric(es, model.conv_derivative(), m);
    metric.s1 = schedule.s1;
    e0 = es.energies(0);
    em = es.energies(m);
  };
  evaluate(r.cutoffs, r.e0, r.em, r.metric);
  evaluate(r.raised_cutoffs, r.e0_raised, r.em_raised, r.metric_raised);
  r.max_relative_change = std::max({relative_change(r.e0, r.e0_raised), relative_change(r.em, r.em_raised),
                                    relative_change(r.metric.value, r.metric_raised.value)});
  r.passed = r.max_relative_change <= tol;
  return r;
}

}  // namespace kpoqa
