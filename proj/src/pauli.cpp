#include "sketchtomo/pauli.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace sketchtomo {

char pauli_char(Pauli p) {
  static constexpr std::array<char, 4> kChars{'I', 'X', 'Y', 'Z'};
  return kChars[static_cast<int>(p)];
}

Pauli pauli_from_char(char c) {
  switch (std::toupper(static_cast<unsigned char>(c))) {
    case 'I': return Pauli::I;
    case 'X': return Pauli::X;
    case 'Y': return Pauli::Y;
    case 'Z': return Pauli::Z;
    default: throw std::invalid_argument(std::string("unknown Pauli label '") + c + "'");
  }
}

const Eigen::Matrix2cd& pauli_matrix(Pauli p) {
  static const std::array<Eigen::Matrix2cd, 4> kMats = [] {
    std::array<Eigen::Matrix2cd, 4> m;
    const cplx i{0.0, 1.0};
    m[0] << 1, 0, 0, 1;
    m[1] << 0, 1, 1, 0;
    m[2] << 0, -i, i, 0;
    m[3] << 1, 0, 0, -1;
    return m;
  }();
  return kMats[static_cast<int>(p)];
}

const Eigen::Vector2cd& basis_eigenvector(Basis b, int bit) {
  static const std::array<Eigen::Vector2cd, 6> kVecs = [] {
    std::array<Eigen::Vector2cd, 6> v;
    const double h = 1.0 / std::sqrt(2.0);
    const cplx i{0.0, 1.0};
    v[0] << h, h;
    v[1] << h, -h;
    v[2] << h, i * h;
    v[3] << h, -i * h;
    v[4] << 1, 0;
    v[5] << 0, 1;
    return v;
  }();
  if (bit != 0 && bit != 1) throw std::invalid_argument("basis_eigenvector: bit must be 0 or 1");
  return kVecs[static_cast<std::size_t>(static_cast<int>(b) * 2 + bit)];
}

PauliString::PauliString(std::map<int, Pauli> s, double c) : coefficient(c) {
  for (auto [site, label] : s) {
    if (site < 0) throw std::invalid_argument("PauliString: negative site");
    if (label != Pauli::I) support.emplace(site, label);
  }
}

Pauli PauliString::at(int site) const {
  auto it = support.find(site);
  return it == support.end() ? Pauli::I : it->second;
}

PauliString PauliString::operator*(const PauliString& other) const {
  PauliString out = *this;
  out.coefficient *= other.coefficient;
  for (auto [site, label] : other.support) {
    if (!out.support.emplace(site, label).second) {
      throw std::invalid_argument("PauliString product: overlapping supports at site " +
                                  std::to_string(site + 1));
    }
  }
  return out;
}

std::string PauliString::label() const {
  if (support.empty()) return "I";
  std::string s;
  for (auto [site, p] : support) {
    s += pauli_char(p);
    s += std::to_string(site + 1);
  }
  return s;
}

PauliString PauliString::parse(const std::string& text, double coefficient) {
  std::map<int, Pauli> support;
  std::size_t pos = 0;
  if (text == "I" || text.empty()) return PauliString({}, coefficient);
  while (pos < text.size()) {
    const Pauli p = pauli_from_char(text[pos++]);
    std::size_t start = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (start == pos) throw std::invalid_argument("PauliString::parse: missing site in '" + text + "'");
    const int site = std::stoi(text.substr(start, pos - start)) - 1;
    if (site < 0) throw std::invalid_argument("PauliString::parse: sites are 1-based in '" + text + "'");
    if (p == Pauli::I) continue;
    if (!support.emplace(site, p).second) {
      throw std::invalid_argument("PauliString::parse: repeated site in '" + text + "'");
    }
  }
  return PauliString(std::move(support), coefficient);
}

void check_support(const PauliString& p, int n) {
  if (!p.support.empty() && (p.min_site() < 0 || p.max_site() >= n)) {
    throw std::invalid_argument("Pauli string " + p.label() + " has support outside a " +
                                std::to_string(n) + "-site chain");
  }
}

}  // namespace sketchtomo
