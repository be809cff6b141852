#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "sketchtomo/mps.hpp"

using namespace sketchtomo;

namespace {

MPS product_zero(int n) {
  std::vector<DenseTensor> comps;
  for (int k = 0; k < n; ++k) {
    DenseTensor f({1, 2, 1});
    f(0, 0, 0) = 1.0;
    comps.push_back(f);
  }
  return MPS(std::move(comps));
}

VectorXcd bell() {
  VectorXcd v = VectorXcd::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return v;
}

double fidelity(const VectorXcd& a, const VectorXcd& b) { return std::norm(a.dot(b)) / (a.squaredNorm() * b.squaredNorm()); }

}  // namespace

TEST_CASE("MPS rejects inconsistent chains") {
  CHECK_THROWS_AS(MPS({DenseTensor({1, 2, 2}), DenseTensor({3, 2, 1})}), std::invalid_argument);
  CHECK_THROWS_AS(MPS({DenseTensor({2, 2, 1})}), std::invalid_argument);
  CHECK_THROWS_AS(MPS({DenseTensor({1, 3, 1})}), std::invalid_argument);
}

TEST_CASE("random_mps: normalization, determinism, bonds") {
  const auto p = random_mps(2, 1, 4);
  CHECK(p.norm_squared() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.max_bond() == 1);
  const auto a = random_mps(6, 3, 9), b = random_mps(6, 3, 9);
  for (int k = 0; k < 6; ++k) CHECK(a[k].entries() == b[k].entries());
  CHECK(oracle::statevector(a).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.max_bond() <= 3);
  CHECK(random_mps(6, 3, 10)[2].entries() != a[2].entries());
}

TEST_CASE("mps_to_statevector matches the per-basis-state oracle") {
  const auto psi = random_mps(5, 3, 1);
  const VectorXcd v = mps_to_statevector(psi);
  CHECK((v - oracle::statevector(psi)).norm() < 1e-12);
  CHECK(v.squaredNorm() == doctest::Approx(psi.norm_squared()).epsilon(1e-12));
  const VectorXcd z = mps_to_statevector(product_zero(3));
  CHECK(std::abs(z(0) - 1.0) < 1e-15);
  CHECK(z.norm() == doctest::Approx(1.0));
}

TEST_CASE("statevector_to_mps: product, Bell, and Haar-random states") {
  VectorXcd prod = VectorXcd::Zero(8);
  prod(5) = 1.0;
  const auto p = statevector_to_mps(prod, 4);
  for (auto b : p.bonds()) CHECK(b == 1);

  const auto b = statevector_to_mps(bell(), 4);
  CHECK(b.bonds()[1] == 2);
  CHECK(fidelity(mps_to_statevector(b), bell()) == doctest::Approx(1.0).epsilon(1e-12));

  const VectorXcd h = oracle::haar_vector(8, 3);
  const auto m = statevector_to_mps(h, 16);
  CHECK(1.0 - fidelity(oracle::statevector(m), h) < 1e-10);
}

TEST_CASE("canonicalize: orthonormal flanks, same state") {
  const auto psi = random_mps(6, 3, 2);
  for (int center : {0, 2, 5}) {
    const auto c = canonicalize(psi, center);
    CHECK((oracle::statevector(c) - oracle::statevector(psi)).norm() < 1e-10);
    for (int k = 0; k < center; ++k) {
      const auto& f = c[k];
      const auto m = f.as_matrix(f.dim(0) * 2, f.dim(2));
      CHECK((MatrixXcd(m.adjoint() * m) - MatrixXcd::Identity(f.dim(2), f.dim(2))).norm() < 1e-10);
    }
    for (int k = center + 1; k < 6; ++k) {
      const auto& f = c[k];
      const auto m = f.as_matrix(f.dim(0), 2 * f.dim(2));
      CHECK((MatrixXcd(m * m.adjoint()) - MatrixXcd::Identity(f.dim(0), f.dim(0))).norm() < 1e-10);
    }
  }
  const auto z = canonicalize(product_zero(3), 1);
  CHECK(fidelity(mps_to_statevector(z), mps_to_statevector(product_zero(3))) == doctest::Approx(1.0));
}

TEST_CASE("canonicalize preserves Pauli expectations") {
  const auto psi = random_mps(6, 2, 8);
  const auto c = canonicalize(psi, 3);
  std::mt19937_64 gen(1);
  for (int t = 0; t < 100; ++t) {
    const auto p = oracle::random_string(6, 1 + static_cast<int>(gen() % 4), gen);
    CHECK(mps_expectation(c, p) == doctest::Approx(mps_expectation(psi, p)).epsilon(1e-9));
  }
}

TEST_CASE("mps_expectation: identity, Bell, dense oracle") {
  const auto psi = random_mps(6, 3, 5);
  CHECK(mps_expectation(psi, PauliString{}) == doctest::Approx(1.0));
  const auto b = statevector_to_mps(bell(), 2);
  CHECK(mps_expectation(b, PauliString::parse("Z1Z2")) == doctest::Approx(1.0));
  CHECK(mps_expectation(b, PauliString::parse("Y1Y2")) == doctest::Approx(-1.0));
  const MatrixXcd rho = oracle::density(psi);
  std::mt19937_64 gen(2);
  for (int t = 0; t < 30; ++t) {
    auto p = oracle::random_string(6, 1 + static_cast<int>(gen() % 6), gen);
    p.coefficient = 0.5;
    CHECK(mps_expectation(psi, p) == doctest::Approx(oracle::expectation(rho, p, 6)).epsilon(1e-10));
  }
}

TEST_CASE("mps_reduced_density matches the dense partial trace") {
  const auto psi = random_mps(5, 3, 6);
  const MatrixXcd rho = oracle::density(psi);
  for (const std::vector<int>& a : {std::vector<int>{1}, {0, 3}, {1, 2, 4}}) {
    CHECK((mps_reduced_density(psi, a) - oracle::partial_trace(rho, 5, a)).norm() < 1e-10);
  }
}

TEST_CASE("Hamiltonian term counts") {
  CHECK(heisenberg_1d(3, true).terms.size() == 9);
  CHECK(heisenberg_1d(3, false).terms.size() == 6);
  CHECK(heisenberg_1d(2, true).terms.size() == 3);
  CHECK(heisenberg_1d(20, true).terms.size() == 60);
  const auto t = tfim_1d(4, 1.0, 1.0);
  int zz = 0, x = 0;
  for (const auto& s : t.terms) {
    CHECK(s.coefficient == -1.0);
    if (s.weight() == 2) ++zz;
    if (s.weight() == 1) ++x;
  }
  CHECK(zz == 4);
  CHECK(x == 4);
  CHECK(tfim_1d(40, 1.0, 1.0).terms.size() == 80);
  CHECK_THROWS_AS(heisenberg_1d(1, false), std::invalid_argument);
}

TEST_CASE("exact_ground_state: small spectra") {
  HamiltonianSpec zz{2, {PauliString::parse("Z1Z2")}};
  CHECK(exact_ground_state(zz).energy == doctest::Approx(-1.0));

  const auto tf = tfim_1d(2, 1.0, 1.0);
  const Eigen::SelfAdjointEigenSolver<MatrixXcd> es(dense_hamiltonian(tf));
  CHECK(exact_ground_state(tf).energy == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-12));

  const auto gs = exact_ground_state(heisenberg_1d(4, true));
  CHECK(gs.energy == doctest::Approx(-8.0).epsilon(1e-12));
  CHECK(mps_expectation(gs.psi, heisenberg_1d(4, true).terms) == doctest::Approx(-8.0).epsilon(1e-10));
}

TEST_CASE("dense_hamiltonian agrees with a kron-product oracle") {
  const auto h = tfim_1d(3, 0.7, 1.3);
  MatrixXcd ref = MatrixXcd::Zero(8, 8);
  for (const auto& t : h.terms) ref += t.coefficient * oracle::pauli_string(oracle::labels_of(t, 3));
  CHECK((dense_hamiltonian(h) - ref).norm() < 1e-12);
}

TEST_CASE("ground energy is a variational lower bound") {
  const auto h = heisenberg_1d(6, false);
  const double e0 = exact_ground_state(h).energy;
  for (int s = 0; s < 20; ++s) {
    const auto psi = random_mps(6, 2, 100 + s);
    CHECK(e0 <= mps_expectation(psi, h.terms) + 1e-12);
  }
}

TEST_CASE("statevector round trip at sufficient bond") {
  const auto psi = random_mps(6, 3, 12);
  const auto back = statevector_to_mps(mps_to_statevector(psi), 8);
  CHECK((mps_to_statevector(back) - mps_to_statevector(psi)).norm() < 1e-10);
}

TEST_CASE("size guards") {
  CHECK_THROWS_AS(dense_hamiltonian(heisenberg_1d(kDenseMaxSites + 1, false)), std::invalid_argument);
  CHECK_THROWS_AS(mps_to_statevector(random_mps(kStatevectorMaxSites + 1, 1, 0)), std::invalid_argument);
}
