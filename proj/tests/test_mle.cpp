#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "sketchtomo/mle.hpp"

using namespace sketchtomo;

namespace {

MPS product_zero(int n, std::size_t bond = 1) {
  std::vector<DenseTensor> comps;
  for (int k = 0; k < n; ++k) {
    DenseTensor f({k == 0 ? 1 : bond, 2, k == n - 1 ? 1 : bond});
    f(0, 0, 0) = 1.0;
    comps.push_back(f);
  }
  return MPS(std::move(comps));
}

ShadowBatch constant_batch(int n, std::size_t count, std::uint8_t code) {
  return ShadowBatch(n, 1, 0, std::vector<std::uint8_t>(count * static_cast<std::size_t>(n), code));
}

// <b|U|psi> with the library's eigenvector convention, by dense vectors.
cplx dense_amplitude(const VectorXcd& psi, std::span<const std::uint8_t> rec) {
  VectorXcd bra = VectorXcd::Ones(1);
  for (auto code : rec) {
    const Eigen::Vector2cd e = basis_eigenvector(record_basis(code), record_bit(code));
    VectorXcd next(bra.size() * 2);
    for (Eigen::Index i = 0; i < bra.size(); ++i) next.segment(2 * i, 2) = bra(i) * e;
    bra = next;
  }
  return bra.dot(psi);
}

double dense_nll(const MPS& phi, const ShadowBatch& batch) {
  const VectorXcd v = oracle::statevector(phi);
  double s = 0;
  for (std::size_t j = 0; j < batch.count(); ++j) s += std::log(std::norm(dense_amplitude(v, batch.record(j))));
  return -s / static_cast<double>(batch.count()) + std::log(v.squaredNorm());
}

MPS perturbed(const MPS& phi, int site, std::size_t flat, cplx delta) {
  MPS out = phi;
  out[site][flat] += delta;
  return out;
}

}  // namespace

TEST_CASE("amplitudes: product states and the dense oracle") {
  CHECK(std::abs(amplitude(product_zero(4), std::vector<std::uint8_t>(4, encode_record(Basis::Z, 0))) - 1.0) < 1e-14);
  std::vector<DenseTensor> plus{DenseTensor({1, 2, 1}), DenseTensor({1, 2, 1})};
  for (auto& f : plus) f(0, 0, 0) = f(0, 1, 0) = 1.0 / std::sqrt(2.0);
  const MPS pp(plus);
  const std::uint8_t x0 = encode_record(Basis::X, 0), x1 = encode_record(Basis::X, 1);
  CHECK(std::abs(amplitude(pp, std::vector<std::uint8_t>{x0, x0})) == doctest::Approx(1.0));
  CHECK(std::abs(amplitude(pp, std::vector<std::uint8_t>{x1, x0})) < 1e-14);

  const auto psi = random_mps(5, 2, 4);
  const VectorXcd v = oracle::statevector(psi);
  const auto batch = sample_shadows(psi, 50, 1, 3);
  for (std::size_t j = 0; j < 50; ++j) {
    CHECK(std::abs(amplitude(psi, batch.record(j)) - dense_amplitude(v, batch.record(j))) < 1e-10);
    CHECK(std::abs(amplitude(psi, batch.sample(j)) - amplitude(psi, batch.record(j))) < 1e-15);
  }
  CHECK_THROWS_AS(amplitude(psi, std::vector<std::uint8_t>(4, 0)), std::invalid_argument);
}

TEST_CASE("nll: exact data, invariances and the dense oracle") {
  CHECK(std::abs(nll(product_zero(3), constant_batch(3, 20, encode_record(Basis::Z, 0)))) < 1e-14);

  const auto truth = random_mps(4, 2, 8);
  const auto batch = sample_shadows(truth, 400, 1, 2);
  const auto phi = random_mps(4, 2, 9);
  const double base = nll(phi, batch);
  CHECK(base == doctest::Approx(dense_nll(phi, batch)).epsilon(1e-10));
  MPS scaled = phi;
  scaled.scale(7.0);
  CHECK(nll(scaled, batch) == doctest::Approx(base).epsilon(1e-12));
  scaled.scale(std::polar(1.0, 1.1));
  CHECK(nll(scaled, batch) == doctest::Approx(base).epsilon(1e-12));
  CHECK(nll(phi, batch, nullptr, 3) == base);
}

TEST_CASE("nll clamps vanishing amplitudes") {
  std::size_t clamped = 0;
  std::vector<std::uint8_t> rec(2 * 10, encode_record(Basis::Z, 0));
  rec[0] = encode_record(Basis::Z, 1);
  const double v = nll(product_zero(2), ShadowBatch(2, 1, 0, rec), &clamped);
  CHECK(clamped == 1);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-2.0 * std::log(kAmplitudeFloor) / 10.0));
}

TEST_CASE("gradient matches central finite differences") {
  int checked = 0;
  for (unsigned t = 0; t < 20; ++t) {
    const int n = 4;
    const auto truth = random_mps(n, 2, 100 + t);
    const auto batch = sample_shadows(truth, 300, 1, 200 + t);
    const int site = static_cast<int>(t % n);
    const auto phi = canonicalize(random_mps(n, 2, 300 + t), site);
    const auto g = nll_gradient(phi, batch, site);
    REQUIRE(g.shape() == phi[site].shape());
    const double h = 1e-5;
    std::vector<double> fd, an;
    for (std::size_t x = 0; x < g.size(); ++x) {
      const double dre = (nll(perturbed(phi, site, x, h), batch) - nll(perturbed(phi, site, x, -h), batch)) / (2 * h);
      const double dim = (nll(perturbed(phi, site, x, cplx(0, h)), batch) - nll(perturbed(phi, site, x, cplx(0, -h)), batch)) / (2 * h);
      // dL/dRe = 2 Re g, dL/dIm = 2 Im g for g = dL/dconj(F)
      fd.push_back(dre);
      fd.push_back(dim);
      an.push_back(2 * g[x].real());
      an.push_back(2 * g[x].imag());
    }
    double num = 0, den = 0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      num += (fd[i] - an[i]) * (fd[i] - an[i]);
      den += fd[i] * fd[i];
    }
    CHECK(std::sqrt(num / den) < 1e-4);
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("gradient outside the canonical center also matches finite differences") {
  const auto batch = sample_shadows(random_mps(3, 2, 1), 200, 1, 1);
  const auto phi = random_mps(3, 2, 2);
  const auto g = nll_gradient(phi, batch, 1);
  const double h = 1e-5;
  for (std::size_t x = 0; x < g.size(); x += 3) {
    const double dre = (nll(perturbed(phi, 1, x, h), batch) - nll(perturbed(phi, 1, x, -h), batch)) / (2 * h);
    CHECK(dre == doctest::Approx(2 * g[x].real()).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("gradient: duplicated batches, stationarity, workers") {
  const auto truth = random_mps(4, 2, 5);
  const auto batch = sample_shadows(truth, 256, 1, 6);
  std::vector<std::uint8_t> twice(batch.records().begin(), batch.records().end());
  twice.insert(twice.end(), batch.records().begin(), batch.records().end());
  const ShadowBatch doubled(4, 1, 0, twice);
  const auto phi = canonicalize(random_mps(4, 2, 7), 2);
  const auto a = nll_gradient(phi, batch, 2), b = nll_gradient(phi, doubled, 2);
  CHECK((a - b).frobenius_norm() < 1e-12 * (1 + a.frobenius_norm()));
  CHECK(nll_gradient(phi, batch, 2, nullptr, 3).entries() == a.entries());

  // |0...0> with only Z/bit-0 data is a minimum of the loss
  const auto zero = canonicalize(product_zero(3), 1);
  const auto g0 = nll_gradient(zero, constant_batch(3, 10, encode_record(Basis::Z, 0)), 1);
  CHECK(g0.frobenius_norm() < 1e-8);
}

TEST_CASE("train: zero learning rate leaves the state alone") {
  const auto batch = sample_shadows(random_mps(4, 2, 1), 200, 1, 1);
  const auto phi = random_mps(4, 2, 2);
  MLEConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.max_sweeps = 2;
  const auto r = train(phi, batch, cfg);
  CHECK(r.sweeps == 2);
  CHECK(r.trace.size() == 12);
  for (const auto& s : r.trace) CHECK(s.nll == doctest::Approx(nll(phi, batch)).epsilon(1e-10));
  const VectorXcd a = oracle::statevector(phi), b = oracle::statevector(r.state);
  CHECK(std::norm(a.dot(b)) / (a.squaredNorm() * b.squaredNorm()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("train: deterministic product-state data reaches the entropy floor") {
  std::vector<std::uint8_t> rec;
  for (int j = 0; j < 200; ++j)
    for (int l = 0; l < 4; ++l) rec.push_back(encode_record(Basis::Z, 0));
  const ShadowBatch batch(4, 1, 0, rec);
  MLEConfig cfg;
  cfg.bond = 1;
  cfg.max_sweeps = 200;
  const auto r = train(random_mps(4, 1, 17), batch, cfg);
  // every outcome is certain, so the empirical entropy is 0
  CHECK(r.trace.back().nll < 0.05);
  CHECK(nll(r.state, batch) == doctest::Approx(r.trace.back().nll).epsilon(1e-9));
}

TEST_CASE("train: small enough steps never increase the loss") {
  for (unsigned t = 0; t < 20; ++t) {
    const auto batch = sample_shadows(random_mps(4, 2, 50 + t), 300, 1, 60 + t);
    const auto phi = random_mps(4, 2, 70 + t);
    const double before = nll(phi, batch);
    MLEConfig cfg;
    cfg.max_sweeps = 1;
    bool ok = false;
    for (int halvings = 0; halvings <= 10 && !ok; ++halvings, cfg.learning_rate /= 2) {
      ok = train(phi, batch, cfg).trace.front().nll <= before + 1e-12;
    }
    CHECK(ok);
  }
}

TEST_CASE("train: target stopping and trace bookkeeping") {
  const auto truth = random_mps(3, 2, 3);
  const auto batch = sample_shadows(truth, 500, 1, 4);
  MLEConfig cfg;
  cfg.target_nll = 1e9;
  const auto r = train(random_mps(3, 2, 5), batch, cfg);
  CHECK(r.reached_target);
  CHECK(r.trace.size() == 1);
  CHECK(r.trace[0].sweep == 1);
  CHECK(r.trace[0].site == 0);
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(train(random_mps(3, 2, 5), batch, cfg), std::invalid_argument);
}

TEST_CASE("train is independent of the worker count") {
  const auto batch = sample_shadows(random_mps(4, 2, 9), 5000, 1, 9);
  MLEConfig cfg;
  cfg.max_sweeps = 2;
  const auto a = train(random_mps(4, 2, 1), batch, cfg);
  cfg.workers = 3;
  const auto b = train(random_mps(4, 2, 1), batch, cfg);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].nll == b.trace[i].nll);
}
