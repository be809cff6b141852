#pragma once

// Matrix product states: generation, gauge moves, dense conversion, exact
// expectation values, and small-n ground states for the 1D benchmark models.

#include <cstdint>
#include <optional>
#include <vector>

#include "sketchtomo/pauli.hpp"
#include "sketchtomo/tensor.hpp"

namespace sketchtomo {

/// Pure state as a chain of components F_k with shape (a_{k-1}, 2, a_k),
/// a_0 = a_n = 1. Sites are 0-based.
class MPS {
 public:
  MPS() = default;
  /// Validates shapes; throws std::invalid_argument on an inconsistent chain.
  explicit MPS(std::vector<DenseTensor> components);

  int size() const { return static_cast<int>(components_.size()); }
  const DenseTensor& operator[](int k) const { return components_.at(static_cast<std::size_t>(k)); }
  DenseTensor& operator[](int k) { return components_.at(static_cast<std::size_t>(k)); }
  const std::vector<DenseTensor>& components() const { return components_; }

  /// a_0 .. a_n.
  std::vector<std::size_t> bonds() const;
  std::size_t max_bond() const;

  /// <psi|psi> by transfer contraction.
  double norm_squared() const;
  /// Rescale the first component so that <psi|psi> = 1.
  void normalize();

  void scale(cplx factor);

 private:
  std::vector<DenseTensor> components_;
};

MPS random_mps(int n, int bond, std::uint64_t seed);

/// Mixed canonical form: sites < center left-orthonormal, sites > center
/// right-orthonormal. Bond dimensions shrink where the QR rank is smaller.
MPS canonicalize(const MPS& psi, int center);

constexpr int kStatevectorMaxSites = 14;
VectorXcd mps_to_statevector(const MPS& psi);

/// Sequential SVD compression. Per cut, discards the smallest singular values
/// whose squared mass stays below tol / (n - 1), keeping at most max_bond.
MPS statevector_to_mps(const VectorXcd& v, int max_bond, double tol = 1e-12);

/// <psi|phi>.
cplx mps_inner(const MPS& psi, const MPS& phi);

/// <psi| P |psi> including P's coefficient. Not divided by the norm.
double mps_expectation(const MPS& psi, const PauliString& p);
double mps_expectation(const MPS& psi, const PauliSum& terms);

/// Reduced density matrix on a few sites (sorted ascending, at most 4). The
/// row index enumerates the listed sites with the first listed site most
/// significant.
MatrixXcd mps_reduced_density(const MPS& psi, const std::vector<int>& sites);

struct HamiltonianSpec {
  int n = 0;
  PauliSum terms;
};

HamiltonianSpec heisenberg_1d(int n, bool periodic);
HamiltonianSpec tfim_1d(int n, double coupling, double field);

constexpr int kDenseMaxSites = 12;

/// Dense 2^n x 2^n matrix of a Hamiltonian. Site 0 is the most significant bit.
MatrixXcd dense_hamiltonian(const HamiltonianSpec& h);

/// Dense matrix of a single Pauli string on n sites.
MatrixXcd dense_pauli(const PauliString& p, int n);

struct GroundState {
  double energy = 0.0;
  MPS psi;
  double gap = 0.0;
  bool degenerate = false;
  VectorXcd statevector;
};

constexpr double kDegeneracyGap = 1e-9;

/// Lowest eigenpair of the dense Hamiltonian. The eigenvector's global phase is
/// fixed so that its largest-magnitude entry is real and positive.
GroundState exact_ground_state(const HamiltonianSpec& h);

}  // namespace sketchtomo
