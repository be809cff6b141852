#pragma once

// The Pauli-basis coefficient tensor C of a density matrix,
//   rho = sum_i C(i_1..i_n) prod_l sigma^{i_l},  sigma^i = {I, X, Y, Z} / sqrt(2),
// stored as a real tensor train.

#include <vector>

#include "sketchtomo/mps.hpp"
#include "sketchtomo/tensor.hpp"

namespace sketchtomo {

/// Chain of real components G_k with shape (r_{k-1}, 4, r_k), r_0 = r_n = 1.
class TTCoeff {
 public:
  TTCoeff() = default;
  explicit TTCoeff(std::vector<RealTensor> components);

  int size() const { return static_cast<int>(components_.size()); }
  const RealTensor& operator[](int k) const { return components_.at(static_cast<std::size_t>(k)); }
  RealTensor& operator[](int k) { return components_.at(static_cast<std::size_t>(k)); }
  const std::vector<RealTensor>& components() const { return components_; }

  /// r_0 .. r_n.
  std::vector<std::size_t> ranks() const;

 private:
  std::vector<RealTensor> components_;
};

/// Coefficient TT of |psi><psi| with r_k = a_k^2. The bond-pair space is
/// expressed in an orthonormal Hermitian basis so every component is real.
/// Throws std::runtime_error if an imaginary residue above 1e-9 survives.
TTCoeff mps_to_tt_coeff(const MPS& psi);

/// C(indices); indices are Pauli codes 0..3.
double tt_entry(const TTCoeff& c, std::span<const int> indices);
double tt_entry(const TTCoeff& c, const std::vector<int>& indices);

constexpr int kDensityMaxSites = 10;
constexpr int kCoeffMaxSites = 8;

/// sum_i C(i) prod sigma^{i_l}, n <= 10.
MatrixXcd tt_to_density(const TTCoeff& c);

/// Full coefficient array tr(rho prod sigma^{i_l}) of shape (4, ..., 4); n <= 8.
/// Throws std::invalid_argument if rho is non-Hermitian beyond 1e-8.
RealTensor density_to_coeff(const MatrixXcd& rho);

/// Expand a coefficient array back into a density matrix (dense oracle path).
MatrixXcd coeff_to_density(const RealTensor& coeff);

/// Full tensor of a TT (dense oracle), shape (4, ..., 4).
RealTensor tt_full(const TTCoeff& c);

double tt_inner(const TTCoeff& a, const TTCoeff& b);
double tt_norm(const TTCoeff& c);

/// ||C1 - C2||_F (= ||rho1 - rho2||_F) without densifying.
double tt_frobenius_distance(const TTCoeff& a, const TTCoeff& b);

/// tr(rho P) = coefficient * 2^{n/2} * C(i_P).
double tt_pauli_expectation(const TTCoeff& c, const PauliString& p);
double tt_pauli_expectation(const TTCoeff& c, const PauliSum& terms);

/// tr(rho) = 2^{n/2} C(I, ..., I).
double tt_trace(const TTCoeff& c);

constexpr double kPurityFloor = 1e-300;

/// tr(rho_A^2) = 2^{n-|A|} sum_{i_A} C(i_A, I elsewhere)^2 for 0-based sites A.
double tt_purity(const TTCoeff& c, const std::vector<int>& subsystem);

/// -log tr(rho_A^2), purity clamped below at kPurityFloor.
double tt_renyi2(const TTCoeff& c, const std::vector<int>& subsystem);

/// Partial trace of a dense 2^n x 2^n matrix onto the listed sites (oracle).
MatrixXcd partial_trace(const MatrixXcd& rho, int n, const std::vector<int>& keep);

}  // namespace sketchtomo
