#include <doctest.h>

#include <cmath>

#include "kpoqa/error.hpp"
#include "kpoqa/model.hpp"
#include "kpoqa/oracle.hpp"

using namespace kpoqa;

namespace {

// Hand-built single-mode matrices, independent of the library's ladder operators.
Matrix lower(int n) {
  Matrix a = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  return a;
}

KpoNetworkParams two_kpo_params(double r = 0.0) {
  KpoNetworkParams p;
  p.chi = {1.0, 1.23};
  p.detuning = {0.1, 0.1};
  p.pump = {2.0, 2.46};
  p.coherent_drive = {r, r};
  p.coupling = Matrix::Zero(2, 2);
  p.coupling(1, 0) = 0.1;
  p.coupling(0, 1) = 0.1;
  p.gamma = 0.00014;
  return p;
}

double commutator_norm(const Matrix& a, const Matrix& b) { return (a * b - b * a).norm(); }

}  // namespace

TEST_CASE("single-KPO problem Hamiltonian matches the hand-built form") {
  const int n = 8;
  const double chi = 1.3, delta = 0.7, pump = 0.9, r = 0.4;
  const FockSpace s({n});
  const Matrix a = lower(n), ad = a.adjoint();
  const Matrix expected = chi * ad * ad * a * a + delta * ad * a - pump * (a * a + ad * ad) + r * (a + ad);
  const Operator hp = build_problem_hamiltonian(KpoNetworkParams::single(chi, delta, pump, r), s);
  CHECK((hp.matrix() - expected).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(hp.is_hermitian(1e-12));
}

TEST_CASE("problem Hamiltonian without pump is diagonal") {
  const FockSpace s({6});
  const Operator h = build_problem_hamiltonian(KpoNetworkParams::single(1.0, 0.5, 0.0, 0.0), s);
  for (int k = 0; k < 6; ++k) CHECK(h.matrix()(k, k).real() == doctest::Approx(k * (k - 1) + 0.5 * k));
  CHECK((h.matrix() - Matrix(h.matrix().diagonal().asDiagonal())).norm() == 0.0);
}

TEST_CASE("cat doublet ground energy is -p^2/chi") {
  const Operator h = build_problem_hamiltonian(KpoNetworkParams::single(1.0, 0.0, 1.0, 0.0), FockSpace({20}));
  const EigenSystem es = eigensystem(h);
  CHECK(std::abs(es.energies(0) + 1.0) <= 1e-4);
  CHECK(es.energies(1) - es.energies(0) <= 1e-3);
}

TEST_CASE("driver ground state is the vacuum") {
  const FockSpace s({10});
  const Operator hd = build_driver_hamiltonian(KpoNetworkParams::single(1.0, 1.0, 1.0, 0.0), s);
  const Vector vac = StateVector::vacuum(s).amplitudes();
  CHECK((hd.matrix() * vac).norm() <= 1e-15);
  CHECK(eigensystem(hd).energies(0) == doctest::Approx(0.0));

  const FockSpace two({5, 5});
  const Vector v2 = StateVector::vacuum(two).amplitudes();
  CHECK((build_driver_hamiltonian(two_kpo_params(), two).matrix() * v2).norm() <= 1e-15);
}

TEST_CASE("two-mode coupling matches Kronecker construction") {
  const int n = 4;
  const FockSpace s({n, n});
  const Matrix a = lower(n), id = Matrix::Identity(n, n);
  auto kron = [](const Matrix& x, const Matrix& y) {
    Matrix out(x.rows() * y.rows(), x.cols() * y.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) out.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
    return out;
  };
  const Matrix a0 = kron(a, id), a1 = kron(id, a);
  KpoNetworkParams p = two_kpo_params();
  p.coupling(1, 0) = cplx(0.1, 0.05);
  p.coupling(0, 1) = cplx(0.1, -0.05);
  Matrix expected = Matrix::Zero(n * n, n * n);
  const Matrix a_[2] = {a0, a1};
  for (int j = 0; j < 2; ++j) {
    const Matrix& x = a_[j];
    const Matrix xd = x.adjoint();
    expected += p.chi[j] * xd * xd * x * x + p.detuning[j] * xd * x - p.pump[j] * (x * x + xd * xd);
  }
  const Matrix hop = p.coupling(1, 0) * a1.adjoint() * a0;
  expected += hop + hop.adjoint();
  const Operator hp = build_problem_hamiltonian(p, s);
  CHECK((hp.matrix() - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("driver minus problem is the pump term") {
  const FockSpace s({5, 5});
  const KpoModel model(two_kpo_params(0.3), s);
  Matrix expected = Matrix::Zero(s.dim(), s.dim());
  for (int j = 0; j < 2; ++j) {
    const Matrix a = annihilation(s, j).matrix();
    expected += model.params().pump[j] * (a * a + a.adjoint() * a.adjoint());
  }
  CHECK(((model.driver() - model.problem()).matrix() - expected).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((model.conv_derivative().matrix() + expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("annealing interpolation") {
  const KpoModel model(KpoNetworkParams::single(1.0, 1.0, 1.0, 1.0), FockSpace({6}));
  const ProtocolSchedule sched = ProtocolSchedule::with_frozen_a(0.5, 500.0);
  CHECK((model.qa_hamiltonian_at(sched, 0.0) - model.driver()).matrix().norm() == 0.0);
  const Matrix mid = model.qa_hamiltonian_at(sched, sched.s1).matrix();
  CHECK((mid - 0.5 * (model.driver().matrix() + model.problem().matrix())).norm() <= 1e-12);

  ProtocolSchedule full = sched;
  full.s1 = 0.999999999;
  CHECK((model.qa_hamiltonian_at(full, 1.0) - model.problem()).matrix().norm() <= 1e-6);
  CHECK_THROWS_AS(model.qa_hamiltonian_at(sched, 1.5), InvalidArgument);

  // Affine on [0, s1]: three points are collinear entry by entry.
  const Matrix h0 = model.qa_hamiltonian_at(sched, 0.1).matrix();
  const Matrix h1 = model.qa_hamiltonian_at(sched, 0.2).matrix();
  const Matrix h2 = model.qa_hamiltonian_at(sched, 0.4).matrix();
  CHECK((h2 - h0 - 3.0 * (h1 - h0)).cwiseAbs().maxCoeff() <= 1e-12);

  // Frozen after s1.
  ProtocolSchedule drive = sched;
  drive.tau = 100.0;
  CHECK((model.qa_hamiltonian_at(drive, 0.6).matrix() - mid).norm() == 0.0);
}

TEST_CASE("drive Hamiltonian") {
  const FockSpace s({6});
  const KpoModel model(KpoNetworkParams::single(1.0, 1.0, 1.0, 1.0), s);
  ProtocolSchedule sched = ProtocolSchedule::with_frozen_a(0.5, 500.0);
  sched.lambda = 0.1;
  sched.tau = 100.0;
  sched.omega = 0.7;
  CHECK(model.drive_hamiltonian_at(sched, 0.3).matrix().norm() == 0.0);
  CHECK(model.drive_hamiltonian_at(sched, sched.s1).matrix().norm() == 0.0);

  const Matrix a = annihilation(s, 0).matrix();
  const Matrix sq = a * a + a.adjoint() * a.adjoint();
  const double eps = 1e-12;
  CHECK((model.drive_hamiltonian_at(sched, sched.s1 + eps).matrix() + 0.1 * sq).cwiseAbs().maxCoeff() <= 1e-9);
  const double at = sched.s1 + 0.05;
  const double c = std::cos(0.7 * 500.0 * 0.05);
  CHECK((model.drive_hamiltonian_at(sched, at).matrix() + 0.1 * c * sq).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(model.drive_hamiltonian_at(sched, sched.drive_end() + 0.01).matrix().norm() == 0.0);
}

TEST_CASE("parity commutes with the r = 0 Hamiltonians") {
  const FockSpace s({6, 6});
  const KpoModel model(two_kpo_params(), s);
  const Matrix par = parity_total(s).matrix();
  ProtocolSchedule sched = ProtocolSchedule::with_frozen_a(1.0 / 3.0, 500.0);
  sched.lambda = 0.02;
  sched.tau = 50.0;
  sched.omega = 0.5;
  for (double x : {0.0, 0.2, sched.s1, sched.s1 + 0.03}) {
    CHECK(commutator_norm(model.qa_hamiltonian_at(sched, x).matrix(), par) <= 1e-10);
    CHECK(commutator_norm(model.drive_hamiltonian_at(sched, x).matrix(), par) <= 1e-10);
  }
  const KpoModel driven(two_kpo_params(0.5), s);
  CHECK(commutator_norm(driven.problem().matrix(), par) > 0.1);
}

TEST_CASE("decay operators") {
  const FockSpace s({5, 5});
  KpoNetworkParams p = two_kpo_params();
  const KpoModel model(p, s);
  const auto ops = model.lindblad_ops();
  REQUIRE(ops.size() == 2);
  for (int j = 0; j < 2; ++j) {
    const Matrix l = ops[j].matrix();
    CHECK((l - std::sqrt(0.00014) * annihilation(s, j).matrix()).norm() <= 1e-15);
    CHECK((l.adjoint() * l - 0.00014 * number(s, j).matrix()).norm() <= 1e-15);
  }
  p.gamma = 0.0;
  for (const auto& op : KpoModel(p, s).lindblad_ops()) CHECK(op.matrix().norm() == 0.0);
  p.gamma = -1.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("parameter validation") {
  KpoNetworkParams p = two_kpo_params();
  p.coupling(0, 1) = 0.2;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = two_kpo_params();
  p.chi[0] = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = two_kpo_params();
  p.coupling(0, 0) = 1.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("lab-frame Hamiltonian") {
  const FockSpace s({6});
  LabFrameParams lab;
  lab.omega_lab = 3.0;
  lab.chi = 1.0;
  lab.omega_prime = 10.0;
  lab.delta = 0.2;
  const Matrix n = number(s, 0).matrix();
  const Matrix a = annihilation(s, 0).matrix();
  const Matrix sq = a * a + a.adjoint() * a.adjoint();

  const TimeDependentHamiltonian bare = build_labframe_hamiltonian(lab, s);
  CHECK(bare.is_constant());
  CHECK((bare.at(1.7).matrix() - (3.0 * n + n * n)).norm() <= 1e-12);

  lab.p = 0.4;
  lab.p_prime = 0.3;
  const TimeDependentHamiltonian h = build_labframe_hamiltonian(lab, s);
  CHECK((h.at(0.0).matrix() - (3.0 * n + n * n + (2 * 0.3 + 2 * 0.4) * sq)).cwiseAbs().maxCoeff() <= 1e-12);
  const double t = 0.37;
  const double c = 0.3 * (std::cos(10.2 * t) + std::cos(9.8 * t)) + 0.8 * std::cos(10.0 * t);
  CHECK((h.at(t).matrix() - (3.0 * n + n * n + c * sq)).cwiseAbs().maxCoeff() <= 1e-12);

  const TimeDependentHamiltonian rot = build_rotating_hamiltonian(lab, s);
  const Matrix expected = (3.0 - 5.0) * n + n * n + 0.4 * sq + 0.3 * std::cos(0.2 * t) * sq;
  CHECK((rot.at(t).matrix() - expected).cwiseAbs().maxCoeff() <= 1e-12);
}
