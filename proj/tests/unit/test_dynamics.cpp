#include <doctest.h>

#include <cmath>

#include "kpoqa/dynamics.hpp"
#include "kpoqa/error.hpp"
#include "kpoqa/oracle.hpp"

using namespace kpoqa;

namespace {

Vector random_state(Eigen::Index dim, unsigned seed) {
  std::srand(seed);
  Vector v = Vector::Random(dim);
  return v.normalized();
}

// exp(-i H t) psi by eigendecomposition.
Vector spectral_evolve(const Matrix& h, const Vector& psi, double t) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  const Vector phase = (cplx(0.0, -t) * es.eigenvalues().cast<cplx>()).array().exp();
  return es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint() * psi;
}

IntegratorConfig rk4(double dt, int stride = 1) {
  IntegratorConfig c;
  c.dt = dt;
  c.sample_stride = stride;
  return c;
}

}  // namespace

TEST_CASE("zero Hamiltonian leaves the state unchanged") {
  const FockSpace s({5});
  TimeDependentHamiltonian h(s);
  h.add(Operator::zero(s));
  const StateVector psi(s, random_state(5, 1));
  const auto traj = evolve_state(h, psi, 0.0, 3.0, rk4(0.1, 5));
  CHECK((traj.states.back().amplitudes() - psi.amplitudes()).norm() <= 1e-14);
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.times.back() == doctest::Approx(3.0));
  CHECK(traj.times.size() == 7);
}

TEST_CASE("constant Hamiltonian matches the spectral exponential") {
  const FockSpace s({8});
  const KpoModel model(KpoNetworkParams::single(1.0, 1.0, 1.0, 1.0), s);
  const Matrix hm = model.problem().matrix();
  TimeDependentHamiltonian h(s);
  h.add(model.problem());
  const Vector psi0 = random_state(8, 2);
  const double dt = 0.02 / h.norm_bound();
  const auto traj = evolve_state(h, StateVector(s, psi0), 0.0, 5.0, rk4(dt, 0));
  const Vector ref = spectral_evolve(hm, psi0, 5.0);
  CHECK(1.0 - std::norm(ref.dot(traj.states.back().amplitudes())) <= 1e-8);

  IntegratorConfig split = rk4(0.5, 0);
  split.method = Method::split_exponential;
  const auto exact = evolve_state(h, StateVector(s, psi0), 0.0, 5.0, split);
  CHECK((exact.states.back().amplitudes() - ref).norm() <= 1e-10);

  // Energy is conserved while H is constant.
  const double e0 = psi0.dot(hm * psi0).real();
  const Vector end = traj.states.back().amplitudes();
  CHECK(std::abs(end.dot(hm * end).real() - e0) <= 1e-7 * h.norm_bound());
}

TEST_CASE("RK4 step halving shows fourth-order convergence") {
  const FockSpace s({6});
  const KpoModel model(KpoNetworkParams::single(1.0, 1.0, 1.0, 1.0), s);
  const MatrixHamiltonian h = MatrixHamiltonian::from(model.annealing_hamiltonian(ProtocolSchedule::with_frozen_a(0.5, 20.0)));
  const Vector vac = StateVector::vacuum(s).amplitudes();
  IntegratorConfig cfg = rk4(0.0, 0);
  cfg.check_invariants = false;
  cfg.warn_ratio = 1.0;
  auto run = [&](double dt) {
    cfg.dt = dt;
    return propagate_vector(h, vac, 0.0, 10.0, cfg);
  };
  const double base = 0.4 / h.norm_bound();
  const Vector ref = run(base / 16);
  const double e1 = (run(base) - ref).norm();
  const double e2 = (run(base / 2) - ref).norm();
  const double ratio = e1 / e2;
  CHECK(ratio >= 16.0 / 4.0);
  CHECK(ratio <= 16.0 * 4.0);
}

TEST_CASE("step guard and invariant monitor") {
  const FockSpace s({6});
  TimeDependentHamiltonian h(s);
  h.add(number(s, 0));
  const StateVector vac = StateVector::vacuum(s);
  CHECK_THROWS_AS(evolve_state(h, vac, 0.0, 1.0, rk4(1.0)), InvalidArgument);
  CHECK_THROWS_AS(evolve_state(h, vac, 1.0, 0.0, rk4(0.01)), InvalidArgument);

  // A large step loses norm and the monitor reports it.
  const StateVector psi(s, random_state(6, 3));
  IntegratorConfig loose = rk4(0.3, 1);
  loose.warn_ratio = 10.0;
  CHECK_THROWS_AS(evolve_state(h, psi, 0.0, 50.0, loose), InvariantViolation);
}

TEST_CASE("damped cavity decays exponentially") {
  const FockSpace s({4});
  const double gamma = 0.3;
  TimeDependentHamiltonian h(s);
  h.add(Operator::zero(s));
  const std::vector<Operator> l{std::sqrt(gamma) * annihilation(s, 0)};
  const DensityMatrix rho0 = DensityMatrix::pure(StateVector::basis(s, std::vector<int>{1}));
  const auto traj = evolve_density(h, l, rho0, 0.0, 10.0, rk4(0.01, 10));
  const auto series = expectation_series(traj, number(s, 0));
  double worst = 0.0, purity = 1.0;
  bool monotone = true;
  for (std::size_t k = 0; k < series.size(); ++k) {
    worst = std::max(worst, std::abs(series[k].second - std::exp(-gamma * series[k].first)));
    const double p = traj.states[k].purity();
    if (k > 0 && p > purity + 1e-14 && series[k].first <= std::log(2.0) / gamma) monotone = false;
    purity = p;
  }
  CHECK(worst <= 1e-6);
  for (const auto& st : traj.states) {
    CHECK(std::abs(st.trace().real() - 1.0) <= 1e-8);
    CHECK(st.min_eigenvalue() >= -1e-8);
  }
  // For |1> decay, purity 1 - 2p(1-p) with p = e^{-gt} falls until p = 1/2.
  CHECK(monotone);

  const auto id_series = expectation_series(traj, Operator::identity(s));
  for (const auto& [t, v] : id_series) CHECK(v == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("lossless Lindblad evolution reduces to Schroedinger evolution") {
  const FockSpace s({4, 4});
  KpoNetworkParams p;
  p.chi = {1.0, 1.23};
  p.detuning = {0.1, 0.1};
  p.pump = {2.0, 2.46};
  p.coherent_drive = {0.0, 0.0};
  p.coupling = Matrix::Zero(2, 2);
  p.coupling(0, 1) = p.coupling(1, 0) = 0.1;
  const KpoModel model(p, s);
  const TimeDependentHamiltonian h = model.annealing_hamiltonian(ProtocolSchedule::with_frozen_a(0.5, 10.0));
  const StateVector vac = StateVector::vacuum(s);
  const IntegratorConfig cfg = rk4(0.02 / h.norm_bound(), 0);
  const auto closed = evolve_state(h, vac, 0.0, 5.0, cfg);
  const auto open = evolve_density(h, model.lindblad_ops(), DensityMatrix::pure(vac), 0.0, 5.0, cfg);
  CHECK(1.0 - fidelity(closed.states.back(), open.states.back()) <= 1e-8);

  IntegratorConfig split = cfg;
  split.method = Method::split_exponential;
  split.dt = 0.005;
  const auto open_split = evolve_density(h, model.lindblad_ops(), DensityMatrix::pure(vac), 0.0, 5.0, split);
  CHECK(1.0 - fidelity(closed.states.back(), open_split.states.back()) <= 1e-6);

  const auto par = expectation_series(closed, parity_total(s));
  CHECK(std::abs(par.back().second - 1.0) <= 1e-6);
}

TEST_CASE("slow anneal from the driver ground follows the instantaneous ground state") {
  const FockSpace s({5});
  const KpoModel model(KpoNetworkParams::single(1.0, 1.0, 1.0, 1.0), s);
  const ProtocolSchedule sched = ProtocolSchedule::with_frozen_a(0.5, 500.0);
  const EigenSystem d = eigensystem(model.driver());
  const StateVector psi0(s, d.vectors.col(0));
  const TimeDependentHamiltonian h = model.annealing_hamiltonian(sched);
  const auto traj = evolve_state(h, psi0, 0.0, sched.t1(), rk4(0.002, 12500));
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const EigenSystem es = eigensystem(h.at(traj.times[k]));
    const double f = std::norm(es.vectors.col(0).dot(traj.states[k].amplitudes()));
    CHECK(f >= 0.99);
  }
}
