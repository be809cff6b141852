#include "sketchtomo/pauli_tt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <unsupported/Eigen/KroneckerProduct>

namespace sketchtomo {

namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

// Normalized sigma^i as a 2x2 matrix.
Eigen::Matrix2cd sigma(int i) { return pauli_matrix(static_cast<Pauli>(i)) * kInvSqrt2; }

// Unitary change of basis on the (gamma, gamma') pair space whose rows are an
// orthonormal basis of Hermitian a x a matrices, so that T G T^dagger is real.
MatrixXcd hermitian_basis(std::size_t a) {
  const auto d = static_cast<Eigen::Index>(a * a);
  MatrixXcd t = MatrixXcd::Zero(d, d);
  Eigen::Index row = 0;
  const cplx i{0.0, 1.0};
  for (std::size_t g = 0; g < a; ++g) {
    t(row++, static_cast<Eigen::Index>(g * a + g)) = 1.0;
    for (std::size_t h = g + 1; h < a; ++h) {
      const auto gh = static_cast<Eigen::Index>(g * a + h), hg = static_cast<Eigen::Index>(h * a + g);
      t(row, gh) = kInvSqrt2;
      t(row, hg) = kInvSqrt2;
      ++row;
      t(row, gh) = i * kInvSqrt2;
      t(row, hg) = -i * kInvSqrt2;
      ++row;
    }
  }
  return t;
}

MatrixXd real_slice(const RealTensor& g, std::size_t i) {
  const std::size_t l = g.dim(0), r = g.dim(2);
  MatrixXd m(l, r);
  for (std::size_t a = 0; a < l; ++a)
    for (std::size_t b = 0; b < r; ++b) m(a, b) = g(a, i, b);
  return m;
}

void check_same_length(const TTCoeff& a, const TTCoeff& b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": site counts differ");
}

int site_count_of(std::size_t dim) {
  int n = 0;
  while ((std::size_t{1} << n) < dim) ++n;
  if ((std::size_t{1} << n) != dim) throw std::invalid_argument("matrix dimension is not a power of two");
  return n;
}

}  // namespace

TTCoeff::TTCoeff(std::vector<RealTensor> components) : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("TTCoeff: no components");
  std::size_t left = 1;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& g = components_[k];
    if (g.rank() != 3 || g.dim(1) != 4) {
      throw std::invalid_argument("TTCoeff: component " + std::to_string(k) + " must have shape (r, 4, r')");
    }
    if (g.dim(0) != left) throw std::invalid_argument("TTCoeff: rank mismatch entering component " + std::to_string(k));
    left = g.dim(2);
  }
  if (left != 1) throw std::invalid_argument("TTCoeff: last rank must be 1");
}

std::vector<std::size_t> TTCoeff::ranks() const {
  std::vector<std::size_t> r{1};
  for (const auto& g : components_) r.push_back(g.dim(2));
  return r;
}

TTCoeff mps_to_tt_coeff(const MPS& psi) {
  std::vector<RealTensor> comps;
  for (int k = 0; k < psi.size(); ++k) {
    const auto& f = psi[k];
    const std::size_t l = f.dim(0), r = f.dim(2);
    const MatrixXcd tl = hermitian_basis(l), tr = hermitian_basis(r);
    RealTensor g({l * l, 4, r * r});
    for (int i = 0; i < 4; ++i) {
      const Eigen::Matrix2cd s = sigma(i);
      // G((g,g'),(d,d')) = sum_{j,j'} s(j',j) F(g,j,d) conj F(g',j',d')
      MatrixXcd gi = MatrixXcd::Zero(static_cast<Eigen::Index>(l * l), static_cast<Eigen::Index>(r * r));
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t jp = 0; jp < 2; ++jp) {
          const cplx w = s(static_cast<Eigen::Index>(jp), static_cast<Eigen::Index>(j));
          if (w == cplx(0.0)) continue;
          for (std::size_t a = 0; a < l; ++a)
            for (std::size_t ap = 0; ap < l; ++ap)
              for (std::size_t b = 0; b < r; ++b)
                for (std::size_t bp = 0; bp < r; ++bp)
                  gi(static_cast<Eigen::Index>(a * l + ap), static_cast<Eigen::Index>(b * r + bp)) +=
                      w * f(a, j, b) * std::conj(f(ap, jp, bp));
        }
      const MatrixXcd real_form = tl * gi * tr.adjoint();
      const double residue = real_form.imag().cwiseAbs().maxCoeff();
      if (residue > 1e-9) {
        throw std::runtime_error("mps_to_tt_coeff: imaginary residue " + std::to_string(residue) + " at site " +
                                 std::to_string(k));
      }
      for (std::size_t a = 0; a < l * l; ++a)
        for (std::size_t b = 0; b < r * r; ++b)
          g(a, static_cast<std::size_t>(i), b) = real_form(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)).real();
    }
    comps.push_back(std::move(g));
  }
  return TTCoeff(std::move(comps));
}

double tt_entry(const TTCoeff& c, std::span<const int> indices) {
  if (static_cast<int>(indices.size()) != c.size()) throw std::invalid_argument("tt_entry: wrong index count");
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Ones(1);
  for (int k = 0; k < c.size(); ++k) {
    const int i = indices[static_cast<std::size_t>(k)];
    if (i < 0 || i > 3) throw std::out_of_range("tt_entry: Pauli index must be in 0..3");
    v = v * real_slice(c[k], static_cast<std::size_t>(i));
  }
  return v(0);
}

double tt_entry(const TTCoeff& c, const std::vector<int>& indices) {
  return tt_entry(c, std::span<const int>(indices));
}

MatrixXcd tt_to_density(const TTCoeff& c) {
  const int n = c.size();
  if (n > kDensityMaxSites) {
    throw std::invalid_argument("tt_to_density: " + std::to_string(n) + " sites exceeds the limit of " +
                                std::to_string(kDensityMaxSites));
  }
  std::vector<MatrixXcd> acc{MatrixXcd::Ones(1, 1)};
  for (int k = 0; k < n; ++k) {
    const auto& g = c[k];
    const std::size_t l = g.dim(0), r = g.dim(2);
    const Eigen::Index dim = acc.front().rows() * 2;
    std::vector<MatrixXcd> next(r, MatrixXcd::Zero(dim, dim));
    for (std::size_t a = 0; a < l; ++a)
      for (int i = 0; i < 4; ++i) {
        const MatrixXcd kron = Eigen::kroneckerProduct(acc[a], sigma(i)).eval();
        for (std::size_t b = 0; b < r; ++b) {
          const double w = g(a, static_cast<std::size_t>(i), b);
          if (w != 0.0) next[b] += w * kron;
        }
      }
    acc = std::move(next);
  }
  return acc.front();
}

namespace {

// Apply a 4x4 per-site map along every site axis of a (4, ..., 4) tensor.
DenseTensor apply_site_map(DenseTensor x, const DenseTensor& map, int n) {
  for (int k = 0; k < n; ++k) x = contract(x, map, {AxisPair{0, 1}});
  return x;
}

}  // namespace

RealTensor density_to_coeff(const MatrixXcd& rho) {
  if (rho.rows() != rho.cols()) throw std::invalid_argument("density_to_coeff: matrix must be square");
  const int n = site_count_of(static_cast<std::size_t>(rho.rows()));
  if (n > kCoeffMaxSites) {
    throw std::invalid_argument("density_to_coeff: " + std::to_string(n) + " sites exceeds the limit of " +
                                std::to_string(kCoeffMaxSites));
  }
  const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  if (herm > 1e-8) throw std::invalid_argument("density_to_coeff: input is not Hermitian (" + std::to_string(herm) + ")");

  Shape bits(static_cast<std::size_t>(2 * n), 2);
  RowMatrix<cplx> rm = rho;
  DenseTensor x(bits, std::vector<cplx>(rm.data(), rm.data() + rm.size()));
  std::vector<std::size_t> perm;
  for (int k = 0; k < n; ++k) {
    perm.push_back(static_cast<std::size_t>(k));
    perm.push_back(static_cast<std::size_t>(n + k));
  }
  x = x.permuted(perm).reshaped(Shape(static_cast<std::size_t>(n), 4));

  // map(i, (j, j')) = sigma^i(j', j), so sum_{jj'} rho(j,j') sigma(j',j) = tr(rho sigma).
  DenseTensor map({4, 4});
  for (int i = 0; i < 4; ++i) {
    const Eigen::Matrix2cd s = sigma(i);
    for (int j = 0; j < 2; ++j)
      for (int jp = 0; jp < 2; ++jp) map(i, j * 2 + jp) = s(jp, j);
  }
  const DenseTensor cx = apply_site_map(std::move(x), map, n);
  RealTensor out(Shape(static_cast<std::size_t>(n), 4));
  for (std::size_t i = 0; i < cx.size(); ++i) out[i] = cx[i].real();
  return out;
}

MatrixXcd coeff_to_density(const RealTensor& coeff) {
  const int n = static_cast<int>(coeff.rank());
  DenseTensor x(coeff.shape());
  for (std::size_t i = 0; i < coeff.size(); ++i) x[i] = coeff[i];
  DenseTensor map({4, 4});
  for (int i = 0; i < 4; ++i) {
    const Eigen::Matrix2cd s = sigma(i);
    for (int j = 0; j < 2; ++j)
      for (int jp = 0; jp < 2; ++jp) map(j * 2 + jp, i) = s(j, jp);
  }
  x = apply_site_map(std::move(x), map, n).reshaped(Shape(static_cast<std::size_t>(2 * n), 2));
  std::vector<std::size_t> perm;
  for (int k = 0; k < n; ++k) perm.push_back(static_cast<std::size_t>(2 * k));
  for (int k = 0; k < n; ++k) perm.push_back(static_cast<std::size_t>(2 * k + 1));
  x = x.permuted(perm);
  const std::size_t dim = std::size_t{1} << n;
  return MatrixXcd(x.as_matrix(dim, dim));
}

RealTensor tt_full(const TTCoeff& c) {
  RealTensor acc({1, 1}, {1.0});
  for (int k = 0; k < c.size(); ++k) acc = contract(acc, c[k], {AxisPair{acc.rank() - 1, 0}});
  // Drop the two unit boundary axes.
  Shape s(acc.shape().begin() + 1, acc.shape().end() - 1);
  return acc.reshaped(s);
}

double tt_inner(const TTCoeff& a, const TTCoeff& b) {
  check_same_length(a, b, "tt_inner");
  MatrixXd env = MatrixXd::Ones(1, 1);
  for (int k = 0; k < a.size(); ++k) {
    MatrixXd next = MatrixXd::Zero(static_cast<Eigen::Index>(a[k].dim(2)), static_cast<Eigen::Index>(b[k].dim(2)));
    for (std::size_t i = 0; i < 4; ++i) next.noalias() += real_slice(a[k], i).transpose() * env * real_slice(b[k], i);
    env = std::move(next);
  }
  return env(0, 0);
}

double tt_norm(const TTCoeff& c) {
  // Left-orthogonalize and read the norm off the last core; avoids squaring.
  const int n = c.size();
  MatrixXd carry = MatrixXd::Ones(1, 1);
  for (int k = 0; k < n; ++k) {
    const std::size_t l = c[k].dim(0), r = c[k].dim(2);
    MatrixXd core = carry * MatrixXd(c[k].as_matrix(l, 4 * r));  // rows: carry rank
    const Eigen::Index rows = core.rows();
    // regroup (p, i*r + b) -> ((p, i), b)
    MatrixXd unfolded(rows * 4, static_cast<Eigen::Index>(r));
    for (Eigen::Index p = 0; p < rows; ++p)
      for (Eigen::Index i = 0; i < 4; ++i)
        unfolded.row(p * 4 + i) = core.block(p, i * static_cast<Eigen::Index>(r), 1, static_cast<Eigen::Index>(r));
    if (k == n - 1) return unfolded.norm();
    Eigen::HouseholderQR<MatrixXd> qr(unfolded);
    const Eigen::Index q = std::min(unfolded.rows(), unfolded.cols());
    carry = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
  }
  return 0.0;
}

double tt_frobenius_distance(const TTCoeff& a, const TTCoeff& b) {
  check_same_length(a, b, "tt_frobenius_distance");
  const int n = a.size();
  if (n == 1) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += std::pow(a[0][i] - b[0][i], 2);
    return std::sqrt(s);
  }
  // Difference as a single TT with block-diagonal interior components.
  std::vector<RealTensor> comps;
  for (int k = 0; k < n; ++k) {
    const auto& ga = a[k];
    const auto& gb = b[k];
    const std::size_t la = ga.dim(0), ra = ga.dim(2), lb = gb.dim(0), rb = gb.dim(2);
    const std::size_t l = k == 0 ? 1 : la + lb;
    const std::size_t r = k == n - 1 ? 1 : ra + rb;
    RealTensor g({l, 4, r});
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t p = 0; p < la; ++p)
        for (std::size_t q = 0; q < ra; ++q) g(p, i, q) = ga(p, i, q);
      const std::size_t lo = k == 0 ? 0 : la, ro = k == n - 1 ? 0 : ra;
      const double sign = k == 0 ? -1.0 : 1.0;
      for (std::size_t p = 0; p < lb; ++p)
        for (std::size_t q = 0; q < rb; ++q) g(lo + p, i, ro + q) += sign * gb(p, i, q);
    }
    comps.push_back(std::move(g));
  }
  return std::max(0.0, tt_norm(TTCoeff(std::move(comps))));
}

double tt_pauli_expectation(const TTCoeff& c, const PauliString& p) {
  const int n = c.size();
  check_support(p, n);
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (auto [site, label] : p.support) idx[static_cast<std::size_t>(site)] = static_cast<int>(label);
  return p.coefficient * std::pow(2.0, 0.5 * n) * tt_entry(c, idx);
}

double tt_pauli_expectation(const TTCoeff& c, const PauliSum& terms) {
  double s = 0.0;
  for (const auto& t : terms) s += tt_pauli_expectation(c, t);
  return s;
}

double tt_trace(const TTCoeff& c) { return tt_pauli_expectation(c, PauliString{}); }

double tt_purity(const TTCoeff& c, const std::vector<int>& subsystem) {
  const int n = c.size();
  if (subsystem.empty()) throw std::invalid_argument("tt_purity: empty subsystem");
  std::vector<bool> in_a(static_cast<std::size_t>(n), false);
  for (int s : subsystem) {
    if (s < 0 || s >= n) throw std::invalid_argument("tt_purity: site out of range");
    if (in_a[static_cast<std::size_t>(s)]) throw std::invalid_argument("tt_purity: repeated site");
    in_a[static_cast<std::size_t>(s)] = true;
  }
  MatrixXd env = MatrixXd::Ones(1, 1);
  for (int k = 0; k < n; ++k) {
    const auto& g = c[k];
    if (in_a[static_cast<std::size_t>(k)]) {
      MatrixXd next = MatrixXd::Zero(static_cast<Eigen::Index>(g.dim(2)), static_cast<Eigen::Index>(g.dim(2)));
      for (std::size_t i = 0; i < 4; ++i) {
        const MatrixXd gi = real_slice(g, i);
        next.noalias() += gi.transpose() * env * gi;
      }
      env = std::move(next);
    } else {
      const MatrixXd g0 = real_slice(g, 0);
      env = 2.0 * (g0.transpose() * env * g0);
    }
  }
  return env(0, 0);
}

double tt_renyi2(const TTCoeff& c, const std::vector<int>& subsystem) {
  return -std::log(std::max(tt_purity(c, subsystem), kPurityFloor));
}

MatrixXcd partial_trace(const MatrixXcd& rho, int n, const std::vector<int>& keep) {
  const std::size_t dim = std::size_t{1} << n;
  if (static_cast<std::size_t>(rho.rows()) != dim) throw std::invalid_argument("partial_trace: size mismatch");
  std::size_t keep_mask = 0;
  for (int s : keep) keep_mask |= std::size_t{1} << (n - 1 - s);
  auto compress = [&](std::size_t x) {
    std::size_t out = 0;
    for (int s : keep) out = (out << 1) | ((x >> (n - 1 - s)) & 1U);
    return out;
  };
  const std::size_t kd = std::size_t{1} << keep.size();
  MatrixXcd out = MatrixXcd::Zero(static_cast<Eigen::Index>(kd), static_cast<Eigen::Index>(kd));
  for (std::size_t x = 0; x < dim; ++x)
    for (std::size_t y = 0; y < dim; ++y) {
      if ((x & ~keep_mask) != (y & ~keep_mask)) continue;
      out(static_cast<Eigen::Index>(compress(x)), static_cast<Eigen::Index>(compress(y))) +=
          rho(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
    }
  return out;
}

}  // namespace sketchtomo
