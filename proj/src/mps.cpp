#include "sketchtomo/mps.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace sketchtomo {

namespace {

// Physical slice F(:, s, :) as an (a_left x a_right) matrix.
MatrixXcd slice(const DenseTensor& f, std::size_t s) {
  const std::size_t l = f.dim(0), r = f.dim(2);
  MatrixXcd m(l, r);
  for (std::size_t a = 0; a < l; ++a)
    for (std::size_t b = 0; b < r; ++b) m(a, b) = f(a, s, b);
  return m;
}

void check_guard(int n, int max_sites, const char* what) {
  if (n > max_sites) {
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(n) + " sites exceeds the limit of " +
                                std::to_string(max_sites));
  }
}

}  // namespace

MPS::MPS(std::vector<DenseTensor> components) : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("MPS: no components");
  std::size_t left = 1;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& f = components_[k];
    if (f.rank() != 3 || f.dim(1) != 2) {
      throw std::invalid_argument("MPS: component " + std::to_string(k) + " must have shape (a, 2, b)");
    }
    if (f.dim(0) != left) {
      throw std::invalid_argument("MPS: bond mismatch entering component " + std::to_string(k));
    }
    left = f.dim(2);
  }
  if (left != 1) throw std::invalid_argument("MPS: last bond must be 1");
}

std::vector<std::size_t> MPS::bonds() const {
  std::vector<std::size_t> b{1};
  for (const auto& f : components_) b.push_back(f.dim(2));
  return b;
}

std::size_t MPS::max_bond() const {
  auto b = bonds();
  return *std::max_element(b.begin(), b.end());
}

double MPS::norm_squared() const { return std::real(mps_inner(*this, *this)); }

void MPS::normalize() {
  const double nrm = std::sqrt(norm_squared());
  if (nrm == 0.0) throw std::runtime_error("MPS::normalize: zero state");
  components_.front() *= cplx(1.0 / nrm);
}

void MPS::scale(cplx factor) { components_.front() *= factor; }

MPS random_mps(int n, int bond, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("random_mps: n must be >= 2");
  if (bond < 1) throw std::invalid_argument("random_mps: bond must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(2.0));
  std::vector<DenseTensor> comps;
  std::size_t left = 1;
  for (int k = 0; k < n; ++k) {
    // Never exceed the exact Schmidt rank across the cut.
    const int to_left = std::min(k + 1, 30), to_right = std::min(n - k - 1, 30);
    std::size_t right = static_cast<std::size_t>(
        std::min<long long>({static_cast<long long>(bond), 1LL << to_left, 1LL << to_right}));
    if (k == n - 1) right = 1;
    DenseTensor f({left, 2, right});
    for (auto& v : f.data()) {
      const double re = normal(rng);
      const double im = normal(rng);
      v = cplx(re, im);
    }
    comps.push_back(std::move(f));
    left = right;
  }
  MPS psi(std::move(comps));
  psi.normalize();
  return psi;
}

MPS canonicalize(const MPS& psi, int center) {
  const int n = psi.size();
  if (center < 0 || center >= n) throw std::invalid_argument("canonicalize: center out of range");
  std::vector<DenseTensor> c = psi.components();

  for (int k = 0; k < center; ++k) {
    const std::size_t l = c[k].dim(0), r = c[k].dim(2);
    MatrixXcd m = c[k].as_matrix(l * 2, r);
    Eigen::HouseholderQR<MatrixXcd> qr(m);
    const Eigen::Index p = std::min<Eigen::Index>(m.rows(), m.cols());
    MatrixXcd q = qr.householderQ() * MatrixXcd::Identity(m.rows(), p);
    MatrixXcd rr = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    c[k] = DenseTensor::from_matrix(q, {l, 2, static_cast<std::size_t>(p)});
    const std::size_t nr = c[k + 1].dim(2);
    MatrixXcd next = rr * c[k + 1].as_matrix(r, 2 * nr);
    c[k + 1] = DenseTensor::from_matrix(next, {static_cast<std::size_t>(p), 2, nr});
  }
  for (int k = n - 1; k > center; --k) {
    const std::size_t l = c[k].dim(0), r = c[k].dim(2);
    MatrixXcd m = c[k].as_matrix(l, 2 * r);
    MatrixXcd mh = m.adjoint();
    Eigen::HouseholderQR<MatrixXcd> qr(mh);
    const Eigen::Index p = std::min<Eigen::Index>(mh.rows(), mh.cols());
    MatrixXcd q = qr.householderQ() * MatrixXcd::Identity(mh.rows(), p);
    MatrixXcd rr = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    // m = rr^H q^H
    MatrixXcd qh = q.adjoint();
    c[k] = DenseTensor::from_matrix(qh, {static_cast<std::size_t>(p), 2, r});
    const std::size_t pl = c[k - 1].dim(0);
    MatrixXcd prev = c[k - 1].as_matrix(pl * 2, l) * rr.adjoint();
    c[k - 1] = DenseTensor::from_matrix(prev, {pl, 2, static_cast<std::size_t>(p)});
  }
  return MPS(std::move(c));
}

VectorXcd mps_to_statevector(const MPS& psi) {
  const int n = psi.size();
  check_guard(n, kStatevectorMaxSites, "mps_to_statevector");
  // Rows enumerate the sites processed so far, columns the open bond.
  MatrixXcd acc = MatrixXcd::Ones(1, 1);
  for (int k = 0; k < n; ++k) {
    const auto& f = psi[k];
    const std::size_t l = f.dim(0), r = f.dim(2);
    MatrixXcd next(acc.rows() * 2, static_cast<Eigen::Index>(r));
    const auto fm = f.as_matrix(l, 2 * r);
    MatrixXcd prod = acc * fm;  // rows x (2 r)
    for (Eigen::Index row = 0; row < acc.rows(); ++row)
      for (Eigen::Index s = 0; s < 2; ++s)
        next.row(row * 2 + s) = prod.block(row, s * static_cast<Eigen::Index>(r), 1, static_cast<Eigen::Index>(r));
    acc = std::move(next);
  }
  return acc.col(0);
}

MPS statevector_to_mps(const VectorXcd& v, int max_bond, double tol) {
  const auto len = static_cast<std::size_t>(v.size());
  if (len < 2 || (len & (len - 1)) != 0) {
    throw std::invalid_argument("statevector_to_mps: length " + std::to_string(len) + " is not a power of two");
  }
  if (max_bond < 1) throw std::invalid_argument("statevector_to_mps: max_bond must be >= 1");
  int n = 0;
  while ((std::size_t{1} << n) < len) ++n;
  const double total = v.squaredNorm();
  const double budget = n > 1 ? tol * total / (n - 1) : 0.0;

  std::vector<DenseTensor> comps;
  std::size_t left = 1;
  MatrixXcd rest = Eigen::Map<const RowMatrix<cplx>>(v.data(), 2, static_cast<Eigen::Index>(len / 2));
  for (int k = 0; k < n - 1; ++k) {
    SVDResult<cplx> svd = thin_svd<cplx>(rest);
    const auto& s = svd.singular_values;
    Eigen::Index keep = s.size();
    double tail = 0.0;
    while (keep > 1 && tail + s(keep - 1) * s(keep - 1) <= budget) {
      tail += s(keep - 1) * s(keep - 1);
      --keep;
    }
    keep = std::min<Eigen::Index>(keep, max_bond);
    const auto right = static_cast<std::size_t>(keep);
    comps.push_back(DenseTensor::from_matrix(svd.left.leftCols(keep), {left, 2, right}));
    MatrixXcd carry = s.head(keep).asDiagonal() * svd.right.topRows(keep);  // keep x cols
    const Eigen::Index cols = carry.cols() / 2;
    // Regroup (bond, s_{k+1} s_rest) into (bond s_{k+1}, s_rest) in row-major order.
    RowMatrix<cplx> carry_rm = carry;
    rest = Eigen::Map<const RowMatrix<cplx>>(carry_rm.data(), keep * 2, cols);
    left = right;
  }
  comps.push_back(DenseTensor::from_matrix(rest, {left, 2, 1}));
  MPS psi(std::move(comps));
  if (psi.norm_squared() > 0.0) psi.normalize();
  return psi;
}

cplx mps_inner(const MPS& psi, const MPS& phi) {
  if (psi.size() != phi.size()) throw std::invalid_argument("mps_inner: site counts differ");
  MatrixXcd env = MatrixXcd::Ones(1, 1);
  for (int k = 0; k < psi.size(); ++k) {
    MatrixXcd next = MatrixXcd::Zero(static_cast<Eigen::Index>(psi[k].dim(2)),
                                     static_cast<Eigen::Index>(phi[k].dim(2)));
    for (std::size_t s = 0; s < 2; ++s) next.noalias() += slice(psi[k], s).adjoint() * env * slice(phi[k], s);
    env = std::move(next);
  }
  return env(0, 0);
}

double mps_expectation(const MPS& psi, const PauliString& p) {
  const int n = psi.size();
  check_support(p, n);
  MatrixXcd env = MatrixXcd::Ones(1, 1);
  for (int k = 0; k < n; ++k) {
    const auto& f = psi[k];
    const MatrixXcd f0 = slice(f, 0), f1 = slice(f, 1);
    const Pauli label = p.at(k);
    MatrixXcd next;
    switch (label) {
      case Pauli::I: next = f0.adjoint() * env * f0 + f1.adjoint() * env * f1; break;
      case Pauli::Z: next = f0.adjoint() * env * f0 - f1.adjoint() * env * f1; break;
      case Pauli::X: next = f0.adjoint() * env * f1 + f1.adjoint() * env * f0; break;
      case Pauli::Y: {
        const cplx i{0.0, 1.0};
        // <0|Y|1> = -i, <1|Y|0> = i
        next = -i * (f0.adjoint() * env * f1) + i * (f1.adjoint() * env * f0);
        break;
      }
    }
    env = std::move(next);
  }
  const cplx val = env(0, 0);
  if (std::abs(val.imag()) > 1e-8 * std::max(1.0, std::abs(val.real()))) {
    throw std::runtime_error("mps_expectation: non-negligible imaginary part " + std::to_string(val.imag()));
  }
  return p.coefficient * val.real();
}

double mps_expectation(const MPS& psi, const PauliSum& terms) {
  double s = 0.0;
  for (const auto& t : terms) s += mps_expectation(psi, t);
  return s;
}

MatrixXcd mps_reduced_density(const MPS& psi, const std::vector<int>& sites) {
  const int n = psi.size();
  if (sites.empty() || sites.size() > 4) throw std::invalid_argument("mps_reduced_density: 1 to 4 sites");
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (sites[i] < 0 || sites[i] >= n) throw std::invalid_argument("mps_reduced_density: site out of range");
    if (i > 0 && sites[i] <= sites[i - 1]) throw std::invalid_argument("mps_reduced_density: sites must be ascending");
  }
  // blocks[o * dim + o'] holds the (ket bond x bra bond) environment for open
  // ket index o and bra index o'.
  std::size_t dim = 1;
  std::vector<MatrixXcd> blocks{MatrixXcd::Ones(1, 1)};
  std::size_t next_site = 0;
  for (int k = 0; k < n; ++k) {
    const MatrixXcd f[2] = {slice(psi[k], 0), slice(psi[k], 1)};
    const bool open = next_site < sites.size() && sites[next_site] == k;
    if (!open) {
      for (auto& b : blocks) b = f[0].transpose() * b * f[0].conjugate() + f[1].transpose() * b * f[1].conjugate();
      continue;
    }
    ++next_site;
    const std::size_t nd = dim * 2;
    std::vector<MatrixXcd> nb(nd * nd);
    for (std::size_t o = 0; o < dim; ++o)
      for (std::size_t op = 0; op < dim; ++op)
        for (std::size_t s = 0; s < 2; ++s)
          for (std::size_t sp = 0; sp < 2; ++sp)
            nb[(o * 2 + s) * nd + (op * 2 + sp)] = f[s].transpose() * blocks[o * dim + op] * f[sp].conjugate();
    blocks = std::move(nb);
    dim = nd;
  }
  MatrixXcd rho(dim, dim);
  for (std::size_t o = 0; o < dim; ++o)
    for (std::size_t op = 0; op < dim; ++op) rho(o, op) = blocks[o * dim + op](0, 0);
  return rho;
}

HamiltonianSpec heisenberg_1d(int n, bool periodic) {
  if (n < 2) throw std::invalid_argument("heisenberg_1d: n must be >= 2");
  HamiltonianSpec h{n, {}};
  auto bond = [&](int a, int b) {
    for (Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) h.terms.emplace_back(std::map<int, Pauli>{{a, p}, {b, p}}, 1.0);
  };
  for (int i = 0; i + 1 < n; ++i) bond(i, i + 1);
  // On two sites the wrap bond is the interior bond.
  if (periodic && n > 2) bond(n - 1, 0);
  return h;
}

HamiltonianSpec tfim_1d(int n, double coupling, double field) {
  if (n < 2) throw std::invalid_argument("tfim_1d: n must be >= 2");
  HamiltonianSpec h{n, {}};
  for (int i = 0; i + 1 < n; ++i) h.terms.emplace_back(std::map<int, Pauli>{{i, Pauli::Z}, {i + 1, Pauli::Z}}, -coupling);
  if (n > 2) h.terms.emplace_back(std::map<int, Pauli>{{0, Pauli::Z}, {n - 1, Pauli::Z}}, -coupling);
  for (int i = 0; i < n; ++i) h.terms.emplace_back(std::map<int, Pauli>{{i, Pauli::X}}, -field);
  return h;
}

MatrixXcd dense_pauli(const PauliString& p, int n) {
  check_guard(n, kDenseMaxSites, "dense_pauli");
  check_support(p, n);
  const std::size_t dim = std::size_t{1} << n;
  std::size_t flip = 0;
  for (auto [site, label] : p.support)
    if (label == Pauli::X || label == Pauli::Y) flip |= std::size_t{1} << (n - 1 - site);
  MatrixXcd m = MatrixXcd::Zero(dim, dim);
  const cplx i{0.0, 1.0};
  for (std::size_t x = 0; x < dim; ++x) {
    cplx phase = p.coefficient;
    for (auto [site, label] : p.support) {
      const int bit = static_cast<int>((x >> (n - 1 - site)) & 1U);
      if (label == Pauli::Z && bit) phase = -phase;
      if (label == Pauli::Y) phase *= bit ? -i : i;
    }
    m(static_cast<Eigen::Index>(x ^ flip), static_cast<Eigen::Index>(x)) = phase;
  }
  return m;
}

MatrixXcd dense_hamiltonian(const HamiltonianSpec& h) {
  check_guard(h.n, kDenseMaxSites, "dense_hamiltonian");
  const std::size_t dim = std::size_t{1} << h.n;
  MatrixXcd m = MatrixXcd::Zero(dim, dim);
  for (const auto& t : h.terms) m += dense_pauli(t, h.n);
  return m;
}

GroundState exact_ground_state(const HamiltonianSpec& h) {
  check_guard(h.n, kDenseMaxSites, "exact_ground_state");
  const MatrixXcd hm = dense_hamiltonian(h);
  GroundState gs;
  VectorXcd v;
  double e0 = 0.0, e1 = 0.0;
  if (hm.imag().cwiseAbs().maxCoeff() == 0.0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(hm.real());
    if (es.info() != Eigen::Success) throw std::runtime_error("exact_ground_state: eigensolver failed");
    v = es.eigenvectors().col(0).cast<cplx>();
    e0 = es.eigenvalues()(0);
    e1 = es.eigenvalues().size() > 1 ? es.eigenvalues()(1) : e0;
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(hm);
    if (es.info() != Eigen::Success) throw std::runtime_error("exact_ground_state: eigensolver failed");
    v = es.eigenvectors().col(0);
    e0 = es.eigenvalues()(0);
    e1 = es.eigenvalues().size() > 1 ? es.eigenvalues()(1) : e0;
  }
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(best)) * (1.0 + 1e-12)) best = i;
  v *= std::conj(v(best)) / std::abs(v(best));
  v.normalize();

  gs.energy = e0;
  gs.gap = e1 - e0;
  gs.degenerate = gs.gap < kDegeneracyGap;
  gs.psi = statevector_to_mps(v, 1 << (h.n / 2), 1e-14);
  gs.statevector = std::move(v);
  return gs;
}

}  // namespace sketchtomo
