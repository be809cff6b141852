#pragma once

// Brute-force dense reference computations used as test oracles. Nothing here
// calls into the library's contraction or conversion code.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sketchtomo/mps.hpp"

namespace oracle {

using cplx = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

inline Eigen::Matrix2cd pauli(int i) {
  Eigen::Matrix2cd m;
  const cplx I(0, 1);
  switch (i) {
    case 0: m << 1, 0, 0, 1; break;
    case 1: m << 0, 1, 1, 0; break;
    case 2: m << 0, -I, I, 0; break;
    default: m << 1, 0, 0, -1; break;
  }
  return m;
}

inline MatrixXcd kron(const MatrixXcd& a, const MatrixXcd& b) {
  MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Tensor product of Paulis, site 0 most significant. labels[l] in 0..3.
inline MatrixXcd pauli_string(const std::vector<int>& labels) {
  MatrixXcd m = MatrixXcd::Identity(1, 1);
  for (int l : labels) m = kron(m, pauli(l));
  return m;
}

inline std::vector<int> labels_of(const sketchtomo::PauliString& p, int n) {
  std::vector<int> out(static_cast<std::size_t>(n), 0);
  for (const auto& [site, label] : p.support) out[static_cast<std::size_t>(site)] = static_cast<int>(label);
  return out;
}

/// psi(s_1..s_n) = F_1[s_1] ... F_n[s_n] by explicit matrix products per basis state.
inline VectorXcd statevector(const sketchtomo::MPS& psi) {
  const int n = psi.size();
  VectorXcd v(Eigen::Index{1} << n);
  for (Eigen::Index x = 0; x < v.size(); ++x) {
    MatrixXcd row = MatrixXcd::Identity(1, 1);
    for (int k = 0; k < n; ++k) {
      const int s = static_cast<int>((x >> (n - 1 - k)) & 1);
      const auto& f = psi[k];
      MatrixXcd slice(f.dim(0), f.dim(2));
      for (std::size_t a = 0; a < f.dim(0); ++a)
        for (std::size_t b = 0; b < f.dim(2); ++b) slice(a, b) = f(a, s, b);
      row = row * slice;
    }
    v(x) = row(0, 0);
  }
  return v;
}

inline MatrixXcd density(const sketchtomo::MPS& psi) {
  VectorXcd v = statevector(psi);
  v /= v.norm();
  return v * v.adjoint();
}

inline double expectation(const MatrixXcd& rho, const sketchtomo::PauliString& p, int n) {
  return p.coefficient * (rho * pauli_string(labels_of(p, n))).trace().real();
}

/// Partial trace by explicit index loops; keep is sorted, site 0 most significant.
inline MatrixXcd partial_trace(const MatrixXcd& rho, int n, const std::vector<int>& keep) {
  const int m = static_cast<int>(keep.size());
  MatrixXcd out = MatrixXcd::Zero(Eigen::Index{1} << m, Eigen::Index{1} << m);
  auto sub = [&](Eigen::Index x) {
    Eigen::Index r = 0;
    for (int s : keep) r = (r << 1) | ((x >> (n - 1 - s)) & 1);
    return r;
  };
  auto rest = [&](Eigen::Index x) {
    Eigen::Index r = 0;
    for (int s = 0; s < n; ++s)
      if (std::find(keep.begin(), keep.end(), s) == keep.end()) r = (r << 1) | ((x >> (n - 1 - s)) & 1);
    return r;
  };
  for (Eigen::Index x = 0; x < rho.rows(); ++x)
    for (Eigen::Index y = 0; y < rho.cols(); ++y)
      if (rest(x) == rest(y)) out(sub(x), sub(y)) += rho(x, y);
  return out;
}

inline double renyi2(const MatrixXcd& rho_a) { return -std::log((rho_a * rho_a).trace().real()); }

/// Coefficient C(i) = tr(rho prod sigma^{i_l}), sigma = Pauli / sqrt(2).
inline double coefficient(const MatrixXcd& rho, const std::vector<int>& labels) {
  return (rho * pauli_string(labels)).trace().real() / std::pow(std::sqrt(2.0), static_cast<double>(labels.size()));
}

inline VectorXcd haar_vector(int n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g;
  VectorXcd v(Eigen::Index{1} << n);
  for (auto& z : v) z = cplx(g(gen), g(gen));
  return v / v.norm();
}

inline MatrixXcd random_hermitian(int dim, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g;
  MatrixXcd a(dim, dim);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = cplx(g(gen), g(gen));
  return (a + a.adjoint()) / 2.0;
}

/// Random string with the given number of non-identity sites among n.
inline sketchtomo::PauliString random_string(int n, int weight, std::mt19937_64& gen) {
  std::vector<int> sites(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) sites[static_cast<std::size_t>(i)] = i;
  std::shuffle(sites.begin(), sites.end(), gen);
  std::map<int, sketchtomo::Pauli> sup;
  for (int i = 0; i < weight; ++i) {
    sup.emplace(sites[static_cast<std::size_t>(i)], static_cast<sketchtomo::Pauli>(1 + gen() % 3));
  }
  return sketchtomo::PauliString(std::move(sup));
}

}  // namespace oracle
