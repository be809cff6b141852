#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "sketchtomo/pauli_tt.hpp"
#include "sketchtomo/sketch.hpp"

using namespace sketchtomo;

namespace {

MatrixXcd dense_sum(const PauliSum& obs, int n) {
  MatrixXcd m = MatrixXcd::Zero(1 << n, 1 << n);
  for (const auto& s : obs) m += s.coefficient * oracle::pauli_string(oracle::labels_of(s, n));
  return m;
}

double rel_error(const TTCoeff& a, const TTCoeff& b) { return tt_frobenius_distance(a, b) / tt_norm(b); }

std::vector<std::size_t> true_ranks(const MPS& psi) {
  const auto bonds = canonicalize(psi, 0).bonds();
  std::vector<std::size_t> r;
  for (std::size_t c = 1; c + 1 < bonds.size(); ++c) r.push_back(bonds[c] * bonds[c]);
  return r;
}

MatrixXd random_orthogonal(int d, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g;
  MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = g(gen);
  return a.householderQr().householderQ();
}

}  // namespace

TEST_CASE("default family: structure and invariants") {
  for (auto geom : {SketchGeometry::kOpen, SketchGeometry::kPeriodic, SketchGeometry::kHalfChain}) {
    const auto f = default_sketch_family(7, 12, 2, 5, geom);
    f.validate();
    for (int c = 0; c < 6; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      REQUIRE(f.left[cu].size() == f.right[cu].size());
      for (const auto* side : {&f.left[cu], &f.right[cu]}) {
        CHECK((*side)[0].size() == 1);
        CHECK((*side)[0][0].is_identity());
        CHECK((*side)[0][0].coefficient == 1.0);
        for (const auto& obs : *side) {
          double w = 0;
          for (const auto& s : obs) {
            w += std::abs(s.coefficient);
            if (!s.is_identity()) CHECK(s.max_site() - s.min_site() < 2);
          }
          CHECK(w <= 1.0 + 1e-12);
        }
      }
      for (const auto& obs : f.left[cu])
        for (const auto& s : obs) CHECK(s.max_site() <= c);
      for (const auto& obs : f.right[cu])
        for (const auto& s : obs)
          if (!s.is_identity()) CHECK(s.min_site() >= c + 1);
    }
  }
}

TEST_CASE("default family: open windows sit next to the cut") {
  const auto f = default_sketch_family(6, std::vector<std::size_t>(5, 4), 1, 3);
  for (int c = 0; c < 5; ++c) {
    for (const auto& obs : f.left[static_cast<std::size_t>(c)])
      for (const auto& s : obs)
        if (!s.is_identity()) CHECK(s.support.begin()->first == c);
    for (const auto& obs : f.right[static_cast<std::size_t>(c)])
      for (const auto& s : obs)
        if (!s.is_identity()) CHECK(s.support.begin()->first == c + 1);
  }
}

TEST_CASE("default family: determinism, distinctness and limits") {
  CHECK(default_sketch_family(6, 10, 2, 9) == default_sketch_family(6, 10, 2, 9));
  CHECK(!(default_sketch_family(6, 10, 2, 9) == default_sketch_family(6, 10, 2, 10)));
  const auto f = default_sketch_family(8, 30, 2, 1, SketchGeometry::kHalfChain);
  for (const auto& side : f.left)
    for (std::size_t a = 0; a < side.size(); ++a)
      for (std::size_t b = a + 1; b < side.size(); ++b) CHECK(!(side[a] == side[b]));
  CHECK_THROWS_AS(default_sketch_family(6, std::vector<std::size_t>(5, 17), 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(default_sketch_family(6, std::vector<std::size_t>(4, 4), 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(default_sketch_family(1, 4, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(default_sketch_family(6, 4, 0, 1), std::invalid_argument);
  // one site offers 3 strings: the identity, each string alone, and the
  // 2^(3-1) sign-canonical three-term combinations
  CHECK(default_sketch_family(6, 16, 2, 1).r_tilde(0) == 8);
  CHECK(default_sketch_family(6, 16, 2, 1).r_tilde(1) == 16);
}

TEST_CASE("family validation catches misplaced strings and heavy weights") {
  auto f = default_sketch_family(4, 4, 1, 2);
  auto g = f;
  g.left[1].push_back({PauliString::parse("X3")});
  g.right[1].push_back({PauliString::parse("X4")});
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = f;
  g.left[0][1] = {PauliString::parse("X1", 0.8), PauliString::parse("Z1", 0.8)};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = f;
  g.right[2].pop_back();
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("exact moments match dense contractions") {
  const int n = 5;
  const auto psi = random_mps(n, 2, 3);
  const MatrixXcd rho = oracle::density(psi);
  const auto f = default_sketch_family(n, 6, 2, 4);
  const auto m = exact_moments(psi, f);
  const double is2 = 1.0 / std::sqrt(2.0);
  for (int k = 0; k < n; ++k) {
    const PauliSum id{PauliString{}};
    const auto& ls = k == 0 ? std::vector<PauliSum>{id} : f.left[static_cast<std::size_t>(k - 1)];
    const auto& rs = k == n - 1 ? std::vector<PauliSum>{id} : f.right[static_cast<std::size_t>(k)];
    const auto& b = m.b[static_cast<std::size_t>(k)];
    REQUIRE(b.dim(0) == ls.size());
    REQUIRE(b.dim(2) == rs.size());
    for (std::size_t z = 0; z < ls.size(); ++z)
      for (int i = 0; i < 4; ++i)
        for (std::size_t u = 0; u < rs.size(); ++u) {
          const MatrixXcd op = dense_sum(ls[z], n) * dense_sum(rs[u], n) *
                               dense_sum({PauliString({{k, static_cast<Pauli>(i)}}, is2)}, n);
          CHECK(b(z, i, u) == doctest::Approx((rho * op).trace().real()).epsilon(1e-10));
        }
  }
  for (int c = 0; c + 1 < n; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    for (std::size_t z = 0; z < f.left[cu].size(); ++z)
      for (std::size_t u = 0; u < f.right[cu].size(); ++u) {
        const MatrixXcd op = dense_sum(f.left[cu][z], n) * dense_sum(f.right[cu][u], n);
        CHECK(m.z[cu](static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(u)) ==
              doctest::Approx((rho * op).trace().real()).epsilon(1e-10));
      }
  }
}

TEST_CASE("identity sketches reduce to coefficient entries") {
  const auto psi = random_mps(4, 2, 6);
  const auto c = mps_to_tt_coeff(psi);
  const auto m = exact_moments(psi, default_sketch_family(4, 1, 1, 1));
  CHECK(m.b[1](0, 0, 0) == doctest::Approx(tt_entry(c, {0, 0, 0, 0}) * 2.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(m.b[2](0, 3, 0) == doctest::Approx(tt_entry(c, {0, 0, 3, 0}) * 2.0 * std::sqrt(2.0)).epsilon(1e-12));
  for (const auto& z : m.z) CHECK(z(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("estimated moments approach the exact ones") {
  const auto psi = random_mps(5, 2, 8);
  const auto f = default_sketch_family(5, 6, 2, 2);
  const auto exact = exact_moments(psi, f);
  const auto batch = sample_shadows(psi, 100000, 10, 5);
  const TraceTable t(batch);
  const auto est = estimate_moments(t, f, false);
  // per-sample magnitudes are at most 3^(2*window + 1) for B and 3^(2*window) for Z
  const double bound_b = 5.0 * std::sqrt(std::pow(9.0, 5) / 1e5), bound_z = 5.0 * std::sqrt(std::pow(9.0, 4) / 1e5);
  for (std::size_t k = 0; k < exact.b.size(); ++k)
    CHECK((est.b[k] - exact.b[k]).frobenius_norm() / std::sqrt(static_cast<double>(exact.b[k].size())) < bound_b);
  for (std::size_t c = 0; c < exact.z.size(); ++c) {
    CHECK(est.z[c](0, 0) == 1.0);
    CHECK((est.z[c] - exact.z[c]).cwiseAbs().maxCoeff() < bound_z);
  }
  const auto est_par = estimate_moments(t, f, true, 3);
  const auto est_ser = estimate_moments(t, f, true, 1);
  for (std::size_t k = 0; k < exact.b.size(); ++k) CHECK(est_par.b[k].entries() == est_ser.b[k].entries());
  for (std::size_t c = 0; c < exact.z.size(); ++c) CHECK(est_par.z[c] == est_ser.z[c]);
}

TEST_CASE("moment error halves with four times the samples") {
  const auto psi = random_mps(4, 2, 2);
  const auto f = default_sketch_family(4, 4, 1, 3);
  const auto exact = exact_moments(psi, f);
  auto rms = [&](std::size_t count) {
    double acc = 0;
    for (std::uint64_t s = 0; s < 8; ++s) {
      const auto est = estimate_moments(TraceTable(sample_shadows(psi, count, 1, 100 * count + s)), f, false);
      for (std::size_t c = 0; c < exact.z.size(); ++c) acc += (est.z[c] - exact.z[c]).squaredNorm();
    }
    return std::sqrt(acc);
  };
  const double ratio = rms(4000) / rms(16000);
  CHECK(ratio > 1.5);
  CHECK(ratio < 2.7);
}

TEST_CASE("factorize_cuts") {
  const auto psi = random_mps(5, 2, 4);
  const auto f = default_sketch_family(5, 8, 2, 1);
  const auto raw = exact_moments(psi, f);
  const auto full = factorize_cuts(raw, RankRule::fixed(f.r_tilde()));
  for (std::size_t c = 0; c < raw.z.size(); ++c) CHECK((full.a_lt[c] * full.a_gt[c] - raw.z[c]).norm() < 1e-12);

  SketchMoments outer;
  outer.n = 2;
  outer.z.push_back(Eigen::Vector3d(1, 2, 3) * Eigen::RowVector3d(-1, 0, 2));
  outer.b.push_back(RealTensor({1, 4, 3}));
  outer.b.push_back(RealTensor({3, 4, 1}));
  const auto r1 = factorize_cuts(outer, RankRule::fixed({1}));
  CHECK((r1.a_lt[0] * r1.a_gt[0] - outer.z[0]).norm() < 1e-12);

  const auto tr = factorize_cuts(raw, RankRule::fixed(true_ranks(psi)));
  for (std::size_t c = 0; c < raw.z.size(); ++c) {
    CHECK((tr.a_lt[c] * tr.a_gt[c] - raw.z[c]).norm() < 1e-10);
    CHECK((tr.a_lt[c].transpose() * tr.a_lt[c] - MatrixXd::Identity(tr.a_lt[c].cols(), tr.a_lt[c].cols())).norm() < 1e-12);
  }
  CHECK_THROWS_AS(factorize_cuts(raw, RankRule::fixed({1, 2})), std::invalid_argument);
  CHECK_THROWS_AS(factorize_cuts(raw, RankRule::fixed({99, 1, 1, 1})), std::invalid_argument);
}

TEST_CASE("threshold rule and ill-conditioned cuts") {
  SketchMoments m;
  m.n = 2;
  m.z.push_back(Eigen::Vector3d(1.0, 0.5, 1e-9).asDiagonal());
  m.b.push_back(RealTensor({1, 4, 3}));
  m.b.push_back(RealTensor({3, 4, 1}));
  CHECK(factorize_cuts(m, RankRule::relative(1e-2)).ranks()[0] == 2);
  const auto forced = factorize_cuts(m, RankRule::fixed({3}));
  CHECK(forced.ranks()[0] == 2);
  REQUIRE(forced.warnings.size() == 1);
  CHECK(forced.warnings[0].find("ill-conditioned") != std::string::npos);
}

TEST_CASE("noiseless recovery of random states") {
  for (int n : {4, 6, 8}) {
    const auto psi = random_mps(n, 2, 30 + static_cast<unsigned>(n));
    const auto f = default_sketch_family(n, 8, 2, 7);
    TomographyOptions o;
    o.rank_rule = RankRule::fixed(true_ranks(psi));
    const auto rep = sketch_tomography_exact(psi, f, o);
    CHECK(rel_error(rep.recovered, mps_to_tt_coeff(psi)) < 1e-8);
    for (double r : rep.residuals) CHECK(r < 1e-8);
    CHECK(rep.warnings.empty());
  }
}

TEST_CASE("two-site product state recovers the product of single-site coefficients") {
  std::vector<DenseTensor> comps(2, DenseTensor({1, 2, 1}));
  comps[0](0, 0, 0) = 0.6;
  comps[0](0, 1, 0) = cplx(0, 0.8);
  comps[1](0, 0, 0) = 1.0;
  const MPS psi(comps);
  const auto rep = sketch_tomography_exact(psi, default_sketch_family(2, 4, 1, 1), TomographyOptions{RankRule::fixed({1})});
  const MatrixXcd rho = oracle::density(psi);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const double ca = oracle::coefficient(oracle::partial_trace(rho, 2, {0}), {a});
      const double cb = oracle::coefficient(oracle::partial_trace(rho, 2, {1}), {b});
      CHECK(tt_entry(rep.recovered, {a, b}) == doctest::Approx(ca * cb).epsilon(1e-10));
    }
}

TEST_CASE("reconstruction does not depend on the gauge of the cut factors") {
  const auto psi = random_mps(5, 2, 12);
  const auto f = default_sketch_family(5, 8, 2, 3);
  auto m = factorize_cuts(exact_moments(psi, f), RankRule::fixed(true_ranks(psi)));
  const auto base = solve_components(m).recovered;
  for (std::size_t c = 0; c < m.a_lt.size(); ++c) {
    const MatrixXd q = random_orthogonal(static_cast<int>(m.a_lt[c].cols()), 40 + static_cast<unsigned>(c));
    m.a_lt[c] = m.a_lt[c] * q;
    m.a_gt[c] = q.transpose() * m.a_gt[c];
  }
  const auto rotated = solve_components(m).recovered;
  const auto fa = tt_full(base), fb = tt_full(rotated);
  CHECK((fa - fb).frobenius_norm() < 1e-9);
}

TEST_CASE("identity gauge gives the same reconstruction at full rank") {
  const auto psi = random_mps(4, 2, 2);
  const auto f = default_sketch_family(4, 4, 1, 3);
  const auto ranks = f.r_tilde();
  TomographyOptions a{RankRule::fixed(ranks), false, Gauge::kSvd};
  TomographyOptions b{RankRule::fixed(ranks), false, Gauge::kIdentity};
  const auto ra = sketch_tomography_exact(psi, f, a), rb = sketch_tomography_exact(psi, f, b);
  CHECK((tt_full(ra.recovered) - tt_full(rb.recovered)).frobenius_norm() < 1e-9);
  CHECK_THROWS_AS(sketch_tomography_exact(psi, default_sketch_family(4, 6, 2, 3), TomographyOptions{RankRule::fixed({2, 2, 2}), false, Gauge::kIdentity}),
                  std::invalid_argument);
}

TEST_CASE("shadow tomography: determinism and worker independence") {
  const auto psi = random_mps(5, 2, 3);
  const auto f = default_sketch_family(5, 8, 2, 1);
  const auto batch = sample_shadows(psi, 20000, 4, 6);
  TomographyOptions o1{RankRule::fixed(true_ranks(psi)), true, Gauge::kSvd, 1};
  TomographyOptions o3 = o1;
  o3.workers = 3;
  const auto a = sketch_tomography(TraceTable(batch), f, o1);
  const auto b = sketch_tomography(TraceTable(batch), f, o3);
  for (int k = 0; k < 5; ++k) CHECK(a.recovered[k].entries() == b.recovered[k].entries());
  CHECK(rel_error(a.recovered, mps_to_tt_coeff(psi)) < 0.5);
}

TEST_CASE("ground-truth constants") {
  const auto psi = random_mps(4, 2, 5);
  const auto f = default_sketch_family(4, 4, 1, 3);
  auto rep = sketch_tomography_exact(psi, f, TomographyOptions{RankRule::fixed(true_ranks(psi))});
  attach_ground_truth(rep, psi, f, Gauge::kSvd);
  REQUIRE(rep.c_z.has_value());
  CHECK(*rep.c_z >= 1.0);
  CHECK(*rep.c_g >= 1.0);
}

TEST_CASE("chain_full and the perturbation constant") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> g;
  std::vector<RealTensor> comps{RealTensor({1, 3, 2}), RealTensor({2, 5, 2}), RealTensor({2, 3, 1})};
  for (auto& c : comps)
    for (auto& x : c.data()) x = g(gen);
  const auto full = chain_full(comps);
  REQUIRE(full.shape() == Shape{3, 5, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t k = 0; k < 3; ++k) {
        double ref = 0;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) ref += comps[0](0, i, a) * comps[1](a, j, b) * comps[2](b, k, 0);
        CHECK(full(i, j, k) == doctest::Approx(ref).epsilon(1e-12));
      }
  MatrixXd u(5, 4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a * 2 + b)) = comps[1](a, i, b);
  const double own = 1.0 / Eigen::JacobiSVD<MatrixXd>(u).singularValues()(3);
  CHECK(tt_perturbation_constant(comps) >= own - 1e-12);
  CHECK_THROWS_AS(chain_full({RealTensor({1, 2, 2}), RealTensor({3, 2, 1})}), std::invalid_argument);
}
