#include <doctest.h>

#include <random>

#include "sketchtomo/tensor.hpp"

using namespace sketchtomo;

namespace {

RealTensor random_real(Shape shape, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g;
  RealTensor t(shape);
  for (auto& x : t.data()) x = g(gen);
  return t;
}

MatrixXd random_matrix(int r, int c, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g;
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = g(gen);
  return m;
}

}  // namespace

TEST_CASE("contract: identity matrix with a vector") {
  RealTensor id({2, 2}, {1, 0, 0, 1});
  RealTensor v({2}, {1, 2});
  const auto out = contract(id, v, {{1, 0}});
  REQUIRE(out.shape() == Shape{2});
  CHECK(out(0) == doctest::Approx(1));
  CHECK(out(1) == doctest::Approx(2));
}

TEST_CASE("contract: full self-contraction of the conjugate is the squared norm") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> g;
  DenseTensor a({2, 3, 2});
  for (auto& z : a.data()) z = cplx(g(gen), g(gen));
  const auto out = contract(a.conj(), a, {{0, 0}, {1, 1}, {2, 2}});
  CHECK(out.size() == 1);
  CHECK(out[0].real() == doctest::Approx(a.frobenius_norm() * a.frobenius_norm()).epsilon(1e-12));
  CHECK(std::abs(out[0].imag()) < 1e-12);
}

TEST_CASE("contract: matches a brute-force loop") {
  const auto a = random_real({3, 4, 5}, 1);
  const auto b = random_real({5, 6}, 2);
  const auto out = contract(a, b, {{2, 0}});
  REQUIRE(out.shape() == Shape{3, 4, 6});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t l = 0; l < 6; ++l) {
        double s = 0;
        for (std::size_t k = 0; k < 5; ++k) s += a(i, j, k) * b(k, l);
        CHECK(out(i, j, l) == doctest::Approx(s).epsilon(1e-12));
      }
}

TEST_CASE("contract: pairs on non-trailing axes and unpaired ordering") {
  const auto a = random_real({2, 3, 4}, 5);
  const auto b = random_real({4, 2, 5}, 6);
  const auto out = contract(a, b, {{0, 1}, {2, 0}});
  REQUIRE(out.shape() == Shape{3, 5});
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t m = 0; m < 5; ++m) {
      double s = 0;
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < 4; ++k) s += a(i, j, k) * b(k, i, m);
      CHECK(out(j, m) == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("contract: rejects mismatched and repeated axes") {
  const auto a = random_real({2, 3}, 1);
  const auto b = random_real({4, 3}, 2);
  CHECK_THROWS_AS(contract(a, b, {{0, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(contract(a, b, {{1, 1}, {1, 1}}), std::invalid_argument);
}

TEST_CASE("contract is multilinear in the first argument") {
  for (unsigned s = 0; s < 10; ++s) {
    const auto a = random_real({3, 4}, 10 + s), a2 = random_real({3, 4}, 30 + s), b = random_real({4, 2}, 50 + s);
    const double alpha = 0.7, beta = -1.3;
    const auto lhs = contract(alpha * a + beta * a2, b, {{1, 0}});
    const auto rhs = alpha * contract(a, b, {{1, 0}}) + beta * contract(a2, b, {{1, 0}});
    CHECK((lhs - rhs).frobenius_norm() < 1e-10);
  }
}

TEST_CASE("permuted and reshaped keep entries") {
  const auto a = random_real({2, 3, 4}, 9);
  const auto p = a.permuted({2, 0, 1});
  REQUIRE(p.shape() == Shape{4, 2, 3});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k) CHECK(p(k, i, j) == a(i, j, k));
  CHECK(a.reshaped({6, 4})(4, 1) == a(1, 1, 1));
  CHECK_THROWS_AS(a.reshaped({5, 5}), std::invalid_argument);
}

TEST_CASE("truncated_svd: diagonal matrix") {
  MatrixXd m = Eigen::Vector3d(3, 2, 1).asDiagonal();
  const auto s = truncated_svd(m, 2);
  REQUIRE(s.singular_values.size() == 2);
  CHECK(s.singular_values(0) == doctest::Approx(3));
  CHECK(s.singular_values(1) == doctest::Approx(2));
  CHECK((m - s.reconstruct()).norm() == doctest::Approx(1.0));
}

TEST_CASE("truncated_svd: full rank reconstructs exactly") {
  const MatrixXd m = random_matrix(5, 4, 2);
  CHECK((m - truncated_svd(m, 4).reconstruct()).norm() < 1e-12);
}

TEST_CASE("truncated_svd: tail error matches a full SVD") {
  const MatrixXd m = random_matrix(8, 6, 7);
  const Eigen::JacobiSVD<MatrixXd> full(m);
  const auto& sv = full.singularValues();
  const double tail = std::sqrt(sv(3) * sv(3) + sv(4) * sv(4) + sv(5) * sv(5));
  const auto s = truncated_svd(m, 3);
  CHECK((m - s.reconstruct()).norm() == doctest::Approx(tail).epsilon(1e-10));
  CHECK((s.left.transpose() * s.left - MatrixXd::Identity(3, 3)).norm() < 1e-12);
  CHECK((s.right * s.right.transpose() - MatrixXd::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("truncated_svd: sign convention and determinism") {
  const MatrixXcd m = MatrixXcd::Random(6, 5);
  const auto a = truncated_svd(m, 3), b = truncated_svd(m, 3);
  CHECK(a.left == b.left);
  for (Eigen::Index c = 0; c < 3; ++c) {
    Eigen::Index idx;
    a.left.col(c).cwiseAbs().maxCoeff(&idx);
    CHECK(std::abs(a.left(idx, c).imag()) < 1e-12);
    CHECK(a.left(idx, c).real() > 0);
  }
}

TEST_CASE("truncated_svd beats random factorizations of the same rank") {
  const MatrixXd m = random_matrix(7, 6, 11);
  const double best = (m - truncated_svd(m, 2).reconstruct()).norm();
  for (unsigned s = 0; s < 50; ++s) {
    const MatrixXd u = random_matrix(7, 2, 100 + s), v = random_matrix(2, 6, 200 + s);
    // best coefficients for this column space
    const MatrixXd q = u.householderQr().householderQ() * MatrixXd::Identity(7, 2);
    CHECK(best <= (m - q * q.transpose() * m).norm() + 1e-12);
    CHECK(best <= (m - u * v).norm());
  }
}

TEST_CASE("least_squares: identity and consistent systems") {
  const MatrixXd b = random_matrix(3, 4, 1);
  CHECK((least_squares(MatrixXd(MatrixXd::Identity(4, 4)), b) - b).norm() < 1e-12);
  const MatrixXd a = random_matrix(4, 6, 2), x = random_matrix(3, 4, 3);
  const MatrixXd b2 = x * a;
  CHECK((least_squares(a, b2) * a - b2).norm() < 1e-10);
}

TEST_CASE("least_squares: rank-deficient system gives the minimum-norm solution") {
  const MatrixXd a = random_matrix(5, 2, 4) * random_matrix(2, 6, 5);  // 5x6, rank 2
  const MatrixXd b = random_matrix(3, 6, 6);
  // explicit pseudoinverse from a full SVD
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  MatrixXd sinv = MatrixXd::Zero(6, 5);
  for (int i = 0; i < 2; ++i) sinv(i, i) = 1.0 / svd.singularValues()(i);
  const MatrixXd apinv = svd.matrixV() * sinv * svd.matrixU().transpose();
  const MatrixXd x = least_squares(a, b);
  CHECK((x - b * apinv).norm() < 1e-9);
  CHECK((pseudoinverse(a) - apinv).norm() < 1e-9);
}

TEST_CASE("least_squares residual is orthogonal to the row space of a") {
  for (unsigned s = 0; s < 10; ++s) {
    const MatrixXd a = random_matrix(3, 7, 20 + s), b = random_matrix(2, 7, 40 + s);
    const MatrixXd r = least_squares(a, b) * a - b;
    CHECK((r * a.transpose()).norm() < 1e-10);
  }
}

TEST_CASE("pinv_norm is the inverse smallest nonzero singular value") {
  MatrixXd m = Eigen::Vector4d(4, 2, 0.5, 0).asDiagonal();
  CHECK(pinv_norm(m) == doctest::Approx(2.0));
}
