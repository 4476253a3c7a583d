#include "kpoqa/model.hpp"

#include <cmath>
#include <sstream>

#include "kpoqa/error.hpp"

namespace kpoqa {

namespace {

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw InvalidArgument(std::string(name) + " must be finite");
}

}  // namespace

void KpoNetworkParams::validate() const {
  const auto k = chi.size();
  if (k == 0) throw InvalidArgument("network needs at least one oscillator");
  if (detuning.size() != k || pump.size() != k || coherent_drive.size() != k)
    throw InvalidArgument("chi, detuning, pump and coherent_drive must have equal length");
  if (coupling.rows() != static_cast<Eigen::Index>(k) || coupling.cols() != static_cast<Eigen::Index>(k))
    throw InvalidArgument("coupling matrix must be K x K");
  for (std::size_t j = 0; j < k; ++j) {
    require_finite(chi[j], "chi");
    require_finite(detuning[j], "detuning");
    require_finite(pump[j], "pump");
    require_finite(coherent_drive[j], "coherent_drive");
    if (chi[j] <= 0.0) throw InvalidArgument("chi must be positive");
  }
  if (!coupling.allFinite()) throw InvalidArgument("coupling must be finite");
  if ((coupling - coupling.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
    throw InvalidArgument("coupling matrix must be Hermitian");
  if (coupling.diagonal().cwiseAbs().maxCoeff() > 0.0)
    throw InvalidArgument("coupling matrix must have zero diagonal");
  require_finite(gamma, "gamma");
  if (gamma < 0.0) throw InvalidArgument("gamma must be non-negative");
}

KpoNetworkParams KpoNetworkParams::single(double chi, double detuning, double pump, double drive) {
  KpoNetworkParams p;
  p.chi = {chi};
  p.detuning = {detuning};
  p.pump = {pump};
  p.coherent_drive = {drive};
  p.coupling = Matrix::Zero(1, 1);
  return p;
}

double ProtocolSchedule::a_of(double s) const {
  if (s < 0.0) throw InvalidArgument("s must be >= 0");
  return s <= s1 ? f(s) : f(s1);
}

double ProtocolSchedule::lambda_of(double s) const {
  return (s > s1 && s <= drive_end()) ? lambda : 0.0;
}

void ProtocolSchedule::validate() const {
  for (double v : {t_ann, s1, tau, omega, lambda}) require_finite(v, "schedule field");
  if (t_ann <= 0.0) throw InvalidArgument("t_ann must be positive");
  if (s1 <= 0.0 || s1 >= 1.0) throw InvalidArgument("s1 must lie in (0, 1)");
  if (tau < 0.0) throw InvalidArgument("tau must be non-negative");
}

ProtocolSchedule ProtocolSchedule::with_frozen_a(double a_s1, double t_ann) {
  ProtocolSchedule s;
  s.t_ann = t_ann;
  s.s1 = 1.0 - a_s1;
  return s;
}

void TimeDependentHamiltonian::add(Operator op, Coefficient coeff, double bound) {
  require_same_space(space_, op.space(), "TimeDependentHamiltonian::add");
  terms_.push_back(Term{std::move(op), std::move(coeff), bound});
}

bool TimeDependentHamiltonian::is_constant() const {
  for (const auto& t : terms_)
    if (t.coeff) return false;
  return true;
}

Operator TimeDependentHamiltonian::at(double t) const {
  Matrix m = Matrix::Zero(space_.dim(), space_.dim());
  for (const auto& term : terms_) m += term.at(t) * term.op.matrix();
  return Operator(space_, std::move(m));
}

double TimeDependentHamiltonian::norm_bound() const {
  double b = 0.0;
  for (const auto& term : terms_) b += std::abs(term.bound) * term.op.spectral_norm();
  return b;
}

namespace {

// Everything in H_P except the pump terms.
Operator network_base(const KpoNetworkParams& params, const FockSpace& space) {
  params.validate();
  if (space.modes() != params.modes())
    throw SpaceMismatch("Fock space mode count does not match network size");
  const int k = params.modes();
  std::vector<Operator> a;
  for (int j = 0; j < k; ++j) a.push_back(annihilation(space, j));

  Operator h = Operator::zero(space);
  for (int j = 0; j < k; ++j) {
    Operator ad = a[j].adjoint();
    h += params.chi[j] * (ad * ad * a[j] * a[j]);
    h += params.detuning[j] * (ad * a[j]);
    h += params.coherent_drive[j] * (a[j] + ad);
  }
  for (int j = 0; j < k; ++j) {
    for (int jp = 0; jp < j; ++jp) {
      const cplx jj = params.coupling(j, jp);
      if (jj == 0.0) continue;
      Operator hop = jj * (a[j].adjoint() * a[jp]);
      h += hop + hop.adjoint();
    }
  }
  return h;
}

Operator pump_terms(const KpoNetworkParams& params, const FockSpace& space) {
  Operator h = Operator::zero(space);
  for (int j = 0; j < params.modes(); ++j) {
    Operator a = annihilation(space, j);
    Operator ad = a.adjoint();
    h += params.pump[j] * (a * a + ad * ad);
  }
  return h;
}

}  // namespace

Operator build_problem_hamiltonian(const KpoNetworkParams& params, const FockSpace& space) {
  return network_base(params, space) - pump_terms(params, space);
}

Operator build_driver_hamiltonian(const KpoNetworkParams& params, const FockSpace& space) {
  return network_base(params, space);
}

KpoModel::KpoModel(KpoNetworkParams params, FockSpace space)
    : params_(std::move(params)),
      space_(std::move(space)),
      driver_(build_driver_hamiltonian(params_, space_)),
      problem_(driver_ - pump_terms(params_, space_)),
      conv_derivative_(problem_ - driver_) {}

Operator KpoModel::qa_hamiltonian_at(const ProtocolSchedule& schedule, double s) const {
  if (s < 0.0 || s > 1.0) throw InvalidArgument("s must lie in [0, 1]");
  const double a = schedule.a_of(s);
  return a * driver_ + (1.0 - a) * problem_;
}

Operator KpoModel::drive_hamiltonian_at(const ProtocolSchedule& schedule, double s) const {
  const double lam = schedule.lambda_of(s);
  if (lam == 0.0) return Operator::zero(space_);
  const double phase = schedule.omega * schedule.t_ann * (s - schedule.s1);
  return (lam * ProtocolSchedule::fdot * std::cos(phase)) * (driver_ - problem_);
}

std::vector<Operator> KpoModel::lindblad_ops() const {
  std::vector<Operator> ops;
  const double g = std::sqrt(params_.gamma);
  for (int j = 0; j < params_.modes(); ++j) ops.push_back(g * annihilation(space_, j));
  return ops;
}

TimeDependentHamiltonian KpoModel::annealing_hamiltonian(const ProtocolSchedule& schedule) const {
  TimeDependentHamiltonian h(space_);
  const double t_ann = schedule.t_ann;
  h.add(driver_);
  h.add(conv_derivative_, [t_ann](double t) { return t / t_ann; }, schedule.s1);
  return h;
}

TimeDependentHamiltonian KpoModel::frozen_hamiltonian(const ProtocolSchedule& schedule) const {
  TimeDependentHamiltonian h(space_);
  h.add(qa_hamiltonian_at(schedule, schedule.s1));
  if (schedule.lambda != 0.0) {
    const double amp = schedule.lambda * ProtocolSchedule::fdot;
    const double w = schedule.omega;
    h.add(driver_ - problem_, [amp, w](double t) { return amp * std::cos(w * t); }, std::abs(amp));
  }
  return h;
}

TimeDependentHamiltonian build_labframe_hamiltonian(const LabFrameParams& lab, const FockSpace& space) {
  if (space.modes() != 1) throw InvalidArgument("lab-frame Hamiltonian is single-mode");
  Operator a = annihilation(space, 0);
  Operator n = number(space, 0);
  Operator sq = a * a + a.adjoint() * a.adjoint();
  TimeDependentHamiltonian h(space);
  h.add(lab.omega_lab * n + lab.chi * (n * n));
  const double wp = lab.omega_prime, d = lab.delta;
  if (lab.p_prime != 0.0) {
    h.add(lab.p_prime * sq,
          [wp, d](double t) { return std::cos((wp + d) * t) + std::cos((wp - d) * t); }, 2.0);
  }
  if (lab.p != 0.0) h.add(2.0 * lab.p * sq, [wp](double t) { return std::cos(wp * t); });
  return h;
}

TimeDependentHamiltonian build_rotating_hamiltonian(const LabFrameParams& lab, const FockSpace& space) {
  if (space.modes() != 1) throw InvalidArgument("rotating-frame Hamiltonian is single-mode");
  Operator a = annihilation(space, 0);
  Operator n = number(space, 0);
  Operator sq = a * a + a.adjoint() * a.adjoint();
  TimeDependentHamiltonian h(space);
  h.add((lab.omega_lab - 0.5 * lab.omega_prime) * n + lab.chi * (n * n) + lab.p * sq);
  if (lab.p_prime != 0.0) {
    const double d = lab.delta;
    h.add(lab.p_prime * sq, [d](double t) { return std::cos(d * t); });
  }
  return h;
}

}  // namespace kpoqa
