#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sketchtomo/tensor.hpp"

namespace sketchtomo {

/// Single-site Pauli label. The integer value is the coefficient-tensor index,
/// so (I, X, Y, Z) <-> (0, 1, 2, 3).
enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

/// Measurement basis for the shadow protocol; values match the on-disk code.
enum class Basis : std::uint8_t { X = 0, Y = 1, Z = 2 };

constexpr Pauli to_pauli(Basis b) { return static_cast<Pauli>(static_cast<int>(b) + 1); }

char pauli_char(Pauli p);
Pauli pauli_from_char(char c);

/// Unnormalized 2x2 Pauli matrix.
const Eigen::Matrix2cd& pauli_matrix(Pauli p);

/// Eigenvector of the basis' Pauli matrix; bit 0 <-> eigenvalue +1.
const Eigen::Vector2cd& basis_eigenvector(Basis b, int bit);

/// A real multiple of a tensor product of Pauli matrices. Sites are 0-based;
/// sites not in `support` carry the identity.
struct PauliString {
  std::map<int, Pauli> support;
  double coefficient = 1.0;

  PauliString() = default;
  PauliString(std::map<int, Pauli> s, double c = 1.0);

  int weight() const { return static_cast<int>(support.size()); }
  bool is_identity() const { return support.empty(); }
  int max_site() const { return support.empty() ? -1 : support.rbegin()->first; }
  int min_site() const { return support.empty() ? -1 : support.begin()->first; }

  /// Label at `site` (I when unsupported).
  Pauli at(int site) const;

  /// Product of two strings on disjoint supports.
  PauliString operator*(const PauliString& other) const;

  /// Compact text form, 1-based sites: "X1Z3", "I" for identity.
  std::string label() const;
  /// Parses label() output. Throws std::invalid_argument.
  static PauliString parse(const std::string& text, double coefficient = 1.0);

  bool operator==(const PauliString&) const = default;
};

/// Coefficient-weighted list of strings, interpreted as their sum.
using PauliSum = std::vector<PauliString>;

/// Throws std::invalid_argument if any string touches a site outside [0, n).
void check_support(const PauliString& p, int n);

}  // namespace sketchtomo
