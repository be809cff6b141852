#include "sketchtomo/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "sketchtomo/parallel.hpp"
#include "sketchtomo/random.hpp"

namespace sketchtomo {

namespace {

const double kSqrt2 = std::sqrt(2.0);
const double kInvSqrt2 = 1.0 / kSqrt2;

constexpr std::size_t kMomentChunk = 1024;
constexpr std::size_t kChunksPerWave = 64;

std::size_t pow4(int w) { return std::size_t{1} << (2 * w); }

// Largest family one side can hold: the identity, every candidate string on
// its own, and every distinct sign-canonical m-term combination.
double side_capacity(std::size_t candidates) {
  const std::size_t m = std::min<std::size_t>(kSketchTermsPerObservable, candidates);
  double c = 1.0;
  for (std::size_t j = 0; j < m; ++j) c = c * static_cast<double>(candidates - j) / static_cast<double>(j + 1);
  return 1.0 + static_cast<double>(candidates) + c * std::pow(2.0, static_cast<double>(m) - 1.0);
}

// All non-identity strings on sites [lo, hi], in lexicographic label order.
std::vector<PauliString> window_strings(int lo, int hi) {
  const int w = hi - lo + 1;
  std::vector<PauliString> out;
  for (std::size_t code = 1; code < pow4(w); ++code) {
    std::map<int, Pauli> support;
    for (int s = 0; s < w; ++s) {
      const auto label = static_cast<Pauli>((code >> (2 * (w - 1 - s))) & 3U);
      if (label != Pauli::I) support.emplace(lo + s, label);
    }
    out.emplace_back(std::move(support), 1.0);
  }
  return out;
}

// Candidate strings for one side of a cut: strings inside the window next to
// the cut and, on a ring, strings inside the window at the far end of the
// half-chain (which borders the other half across the wrap-around bond).
std::vector<PauliString> side_candidates(int n, int cut, bool left, int window, SketchGeometry geometry) {
  std::vector<std::pair<int, int>> windows;
  if (geometry == SketchGeometry::kHalfChain) {
    const int lo = left ? 0 : cut + 1, hi = left ? cut : n - 1;
    for (int a = lo; a <= hi; ++a) windows.emplace_back(a, std::min(hi, a + window - 1));
  } else if (left) {
    windows.emplace_back(std::max(0, cut - window + 1), cut);
    if (geometry == SketchGeometry::kPeriodic) windows.emplace_back(0, std::min(window - 1, cut));
  } else {
    windows.emplace_back(cut + 1, std::min(n - 1, cut + window));
    if (geometry == SketchGeometry::kPeriodic) windows.emplace_back(std::max(cut + 1, n - window), n - 1);
  }
  std::vector<PauliString> out;
  for (const auto& [lo, hi] : windows)
    for (auto& s : window_strings(lo, hi))
      if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  return out;
}

constexpr int kMaxFamilyDraws = 100000;

void add_combination(std::vector<PauliSum>& obs, const std::vector<PauliString>& candidates,
                     const std::vector<std::pair<std::size_t, int>>& pick) {
  PauliSum sum;
  for (const auto& [idx, sign] : pick) {
    PauliString s = candidates[idx];
    s.coefficient = static_cast<double>(sign) / static_cast<double>(pick.size());
    sum.push_back(std::move(s));
  }
  obs.push_back(std::move(sum));
}

// Identity first. If the whole operator basis of the candidate strings fits,
// it is taken as is (the sketch is then exact on that side); the remaining
// slots are random sign-canonical m-term combinations. While the span is not
// yet full, a combination must be linearly independent of the observables
// chosen so far, so that Z keeps the largest possible rank.
std::vector<PauliSum> side_observables(const std::vector<PauliString>& candidates, std::size_t count, CounterRng rng) {
  const std::size_t m = std::min<std::size_t>(kSketchTermsPerObservable, candidates.size());
  const auto dim = static_cast<Eigen::Index>(candidates.size() + 1);
  std::vector<VectorXd> basis{VectorXd::Unit(dim, 0)};
  std::vector<PauliSum> obs{PauliSum{PauliString{}}};
  if (count >= candidates.size() + 1) {
    for (std::size_t i = 0; i < candidates.size(); ++i) add_combination(obs, candidates, {{i, 1}});
    basis.clear();
  }
  std::set<std::vector<std::pair<std::size_t, int>>> seen;
  std::vector<std::size_t> pool(candidates.size());
  for (int draw = 0; obs.size() < count; ++draw) {
    if (draw == kMaxFamilyDraws) throw std::runtime_error("default_sketch_family: could not draw enough observables");
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::pair<std::size_t, int>> pick;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t r = j + rng.below(pool.size() - j);
      std::swap(pool[j], pool[r]);
      pick.emplace_back(pool[j], rng.below(2) == 0 ? 1 : -1);
    }
    std::sort(pick.begin(), pick.end());
    // An observable and its negation span the same direction.
    if (pick.front().second < 0)
      for (auto& p : pick) p.second = -p.second;
    if (seen.count(pick)) continue;
    if (!basis.empty() && static_cast<Eigen::Index>(basis.size()) < dim) {
      VectorXd v = VectorXd::Zero(dim);
      for (const auto& [idx, sign] : pick) v(static_cast<Eigen::Index>(idx + 1)) = sign;
      for (const auto& b : basis) v -= b.dot(v) * b;
      if (v.norm() < 1e-8) continue;
      basis.push_back(v.normalized());
    }
    seen.insert(pick);
    add_combination(obs, candidates, pick);
  }
  return obs;
}

// ---- exact moments via transfer environments --------------------------------

using Env = MatrixXcd;

Eigen::Matrix2cd site_operator(Pauli p) { return pauli_matrix(p); }

// E'(b, b') = sum O(s, s') conj F(a, s, b) E(a, a') F(a', s', b').
Env push_left(const Env& e, const DenseTensor& f, const Eigen::Matrix2cd& op) {
  const auto a = static_cast<Eigen::Index>(f.dim(0)), b = static_cast<Eigen::Index>(f.dim(2));
  std::array<MatrixXcd, 2> fs;
  for (int s = 0; s < 2; ++s) {
    fs[static_cast<std::size_t>(s)].resize(a, b);
    for (Eigen::Index x = 0; x < a; ++x)
      for (Eigen::Index y = 0; y < b; ++y)
        fs[static_cast<std::size_t>(s)](x, y) = f(static_cast<std::size_t>(x), s, static_cast<std::size_t>(y));
  }
  Env out = Env::Zero(b, b);
  for (int s = 0; s < 2; ++s) {
    const MatrixXcd left = fs[static_cast<std::size_t>(s)].adjoint() * e;
    for (int sp = 0; sp < 2; ++sp) {
      const cplx w = op(s, sp);
      if (w != cplx(0.0)) out.noalias() += w * (left * fs[static_cast<std::size_t>(sp)]);
    }
  }
  return out;
}

// R'(a, a') = sum O(s, s') conj F(a, s, b) R(b, b') F(a', s', b').
Env push_right(const Env& r, const DenseTensor& f, const Eigen::Matrix2cd& op) {
  const auto a = static_cast<Eigen::Index>(f.dim(0)), b = static_cast<Eigen::Index>(f.dim(2));
  std::array<MatrixXcd, 2> fs;
  for (int s = 0; s < 2; ++s) {
    fs[static_cast<std::size_t>(s)].resize(a, b);
    for (Eigen::Index x = 0; x < a; ++x)
      for (Eigen::Index y = 0; y < b; ++y)
        fs[static_cast<std::size_t>(s)](x, y) = f(static_cast<std::size_t>(x), s, static_cast<std::size_t>(y));
  }
  Env out = Env::Zero(a, a);
  for (int s = 0; s < 2; ++s) {
    const MatrixXcd left = fs[static_cast<std::size_t>(s)].conjugate() * r;
    for (int sp = 0; sp < 2; ++sp) {
      const cplx w = op(s, sp);
      if (w != cplx(0.0)) out.noalias() += w * (left * fs[static_cast<std::size_t>(sp)].transpose());
    }
  }
  return out;
}

double real_pairing(const Env& left, const Env& right, const char* what) {
  const cplx v = (left.array() * right.array()).sum();
  if (std::abs(v.imag()) > 1e-8 * std::max(1.0, std::abs(v.real()))) {
    throw std::runtime_error(std::string("exact_moments: imaginary part in ") + what);
  }
  return v.real();
}

struct ExactEnvs {
  std::vector<Env> left_id;   // left_id[l]: identity env of sites < l
  std::vector<Env> right_id;  // right_id[l]: identity env of sites >= l
};

ExactEnvs identity_envs(const MPS& psi) {
  const int n = psi.size();
  const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
  ExactEnvs e;
  e.left_id.assign(static_cast<std::size_t>(n + 1), Env());
  e.right_id.assign(static_cast<std::size_t>(n + 1), Env());
  e.left_id[0] = Env::Ones(1, 1);
  for (int l = 0; l < n; ++l) e.left_id[static_cast<std::size_t>(l + 1)] = push_left(e.left_id[static_cast<std::size_t>(l)], psi[l], id);
  e.right_id[static_cast<std::size_t>(n)] = Env::Ones(1, 1);
  for (int l = n - 1; l >= 0; --l) e.right_id[static_cast<std::size_t>(l)] = push_right(e.right_id[static_cast<std::size_t>(l + 1)], psi[l], id);
  return e;
}

// Environment of a left observable ending at cut c (sites <= c).
Env left_observable_env(const MPS& psi, const ExactEnvs& ids, const PauliSum& obs, int c) {
  int lo = c;
  for (const auto& s : obs)
    if (!s.is_identity()) lo = std::min(lo, s.min_site());
  Env total;
  for (const auto& s : obs) {
    Env e = ids.left_id[static_cast<std::size_t>(lo)];
    for (int l = lo; l <= c; ++l) e = push_left(e, psi[l], site_operator(s.at(l)));
    e *= s.coefficient;
    total = total.size() == 0 ? e : Env(total + e);
  }
  return total;
}

// Environment of a right observable starting after cut c (sites >= c + 1).
Env right_observable_env(const MPS& psi, const ExactEnvs& ids, const PauliSum& obs, int c) {
  int hi = c + 1;
  for (const auto& s : obs)
    if (!s.is_identity()) hi = std::max(hi, s.max_site());
  Env total;
  for (const auto& s : obs) {
    Env e = ids.right_id[static_cast<std::size_t>(hi + 1)];
    for (int l = hi; l >= c + 1; --l) e = push_right(e, psi[l], site_operator(s.at(l)));
    e *= s.coefficient;
    total = total.size() == 0 ? e : Env(total + e);
  }
  return total;
}

// ---- shadow moments ----------------------------------------------------------

struct CompiledTerm {
  double coefficient;
  std::vector<std::pair<int, int>> factors;  // (site, pauli)
};
using CompiledObservable = std::vector<CompiledTerm>;

CompiledObservable compile(const PauliSum& obs) {
  CompiledObservable out;
  for (const auto& s : obs) {
    CompiledTerm t{s.coefficient, {}};
    for (const auto& [site, label] : s.support) t.factors.emplace_back(site, static_cast<int>(label));
    out.push_back(std::move(t));
  }
  return out;
}

double evaluate(const CompiledObservable& obs, const TraceTable& table, std::size_t j) {
  double total = 0.0;
  for (const auto& t : obs) {
    double v = t.coefficient;
    for (const auto& [site, label] : t.factors) v *= kSqrt2 * table(j, site, label);
    total += v;
  }
  return total;
}

struct MomentLayout {
  std::vector<std::size_t> b_offset, z_offset;
  std::vector<std::size_t> b_left, b_right;  // per-site axis lengths
  std::size_t total = 0;
};

MomentLayout layout_for(const SketchFamily& f) {
  MomentLayout lay;
  const int n = f.n;
  for (int k = 0; k < n; ++k) {
    const std::size_t l = k == 0 ? 1 : f.r_tilde(k - 1);
    const std::size_t r = k == n - 1 ? 1 : f.r_tilde(k);
    lay.b_left.push_back(l);
    lay.b_right.push_back(r);
    lay.b_offset.push_back(lay.total);
    lay.total += l * 4 * r;
  }
  for (int c = 0; c + 1 < n; ++c) {
    lay.z_offset.push_back(lay.total);
    lay.total += f.r_tilde(c) * f.r_tilde(c);
  }
  return lay;
}

using RowMat = RowMatrix<double>;

// Adds the moment sums over samples [begin, end) into out (layout order).
void accumulate_chunk(const TraceTable& table, const std::vector<std::vector<CompiledObservable>>& left,
                      const std::vector<std::vector<CompiledObservable>>& right, const MomentLayout& lay,
                      std::size_t begin, std::size_t end, std::vector<double>& out) {
  const int n = table.n();
  const auto rows = static_cast<Eigen::Index>(end - begin);
  std::vector<RowMat> lv(static_cast<std::size_t>(n - 1)), rv(static_cast<std::size_t>(n - 1));
  for (int c = 0; c + 1 < n; ++c) {
    const auto& lo = left[static_cast<std::size_t>(c)];
    const auto& ro = right[static_cast<std::size_t>(c)];
    RowMat& l = lv[static_cast<std::size_t>(c)];
    RowMat& r = rv[static_cast<std::size_t>(c)];
    l.resize(rows, static_cast<Eigen::Index>(lo.size()));
    r.resize(rows, static_cast<Eigen::Index>(ro.size()));
    for (Eigen::Index j = 0; j < rows; ++j) {
      const std::size_t s = begin + static_cast<std::size_t>(j);
      for (std::size_t z = 0; z < lo.size(); ++z) l(j, static_cast<Eigen::Index>(z)) = evaluate(lo[z], table, s);
      for (std::size_t u = 0; u < ro.size(); ++u) r(j, static_cast<Eigen::Index>(u)) = evaluate(ro[u], table, s);
    }
  }
  out.assign(lay.total, 0.0);
  const RowMat ones = RowMat::Ones(rows, 1);
  for (int k = 0; k < n; ++k) {
    const RowMat& lk = k == 0 ? ones : lv[static_cast<std::size_t>(k - 1)];
    const RowMat& rk = k == n - 1 ? ones : rv[static_cast<std::size_t>(k)];
    const auto rr = rk.cols();
    RowMat tr(rows, 4 * rr);
    for (Eigen::Index j = 0; j < rows; ++j) {
      const double* t = table.entries(begin + static_cast<std::size_t>(j), k);
      for (int i = 0; i < 4; ++i) tr.row(j).segment(i * rr, rr) = t[i] * rk.row(j);
    }
    Eigen::Map<RowMat> dst(out.data() + lay.b_offset[static_cast<std::size_t>(k)], lk.cols(), 4 * rr);
    dst.noalias() = lk.transpose() * tr;
  }
  for (int c = 0; c + 1 < n; ++c) {
    const RowMat& l = lv[static_cast<std::size_t>(c)];
    const RowMat& r = rv[static_cast<std::size_t>(c)];
    Eigen::Map<RowMat> dst(out.data() + lay.z_offset[static_cast<std::size_t>(c)], l.cols(), r.cols());
    dst.noalias() = l.transpose() * r;
  }
}

SketchMoments unpack(const SketchFamily& f, const MomentLayout& lay, const std::vector<double>& flat) {
  SketchMoments m;
  m.n = f.n;
  for (int k = 0; k < f.n; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    RealTensor b({lay.b_left[ku], 4, lay.b_right[ku]});
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(lay.b_offset[ku]), b.size(), b.data().begin());
    m.b.push_back(std::move(b));
  }
  for (int c = 0; c + 1 < f.n; ++c) {
    const auto rt = static_cast<Eigen::Index>(f.r_tilde(c));
    m.z.push_back(Eigen::Map<const RowMat>(flat.data() + lay.z_offset[static_cast<std::size_t>(c)], rt, rt));
  }
  return m;
}

MatrixXd slice(const RealTensor& t, std::size_t i) {
  MatrixXd m(t.dim(0), t.dim(2));
  for (std::size_t a = 0; a < t.dim(0); ++a)
    for (std::size_t b = 0; b < t.dim(2); ++b) m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = t(a, i, b);
  return m;
}

void check_family_matches(const SketchFamily& f, int n, const char* what) {
  if (f.n != n) {
    throw std::invalid_argument(std::string(what) + ": family is for " + std::to_string(f.n) + " sites, data has " +
                                std::to_string(n));
  }
  f.validate();
}

}  // namespace

std::vector<std::size_t> SketchFamily::r_tilde() const {
  std::vector<std::size_t> r;
  for (const auto& side : right) r.push_back(side.size());
  return r;
}

void SketchFamily::validate() const {
  if (n < 2) throw std::invalid_argument("SketchFamily: at least two sites are required");
  if (left.size() != static_cast<std::size_t>(n - 1) || right.size() != static_cast<std::size_t>(n - 1)) {
    throw std::invalid_argument("SketchFamily: expected one left and one right set per cut");
  }
  for (int c = 0; c + 1 < n; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    if (left[cu].empty() || left[cu].size() != right[cu].size()) {
      throw std::invalid_argument("SketchFamily: cut " + std::to_string(c) + " needs equal nonzero left/right counts");
    }
    auto check = [&](const PauliSum& obs, bool is_left) {
      double weight = 0.0;
      for (const auto& s : obs) {
        weight += std::abs(s.coefficient);
        if (s.is_identity()) continue;
        const bool ok = is_left ? (s.min_site() >= 0 && s.max_site() <= c) : (s.min_site() >= c + 1 && s.max_site() < n);
        if (!ok) {
          throw std::invalid_argument("SketchFamily: string " + s.label() + " lies on the wrong side of cut " +
                                      std::to_string(c));
        }
      }
      if (weight > 1.0 + 1e-12) {
        throw std::invalid_argument("SketchFamily: observable weight exceeds 1 at cut " + std::to_string(c));
      }
    };
    for (const auto& obs : left[cu]) check(obs, true);
    for (const auto& obs : right[cu]) check(obs, false);
  }
}

SketchFamily default_sketch_family(int n, const std::vector<std::size_t>& r_tilde, int window, std::uint64_t seed,
                                   SketchGeometry geometry) {
  if (n < 2) throw std::invalid_argument("default_sketch_family: at least two sites are required");
  if (window < 1 || window > kMaxSketchWindow) {
    throw std::invalid_argument("default_sketch_family: window must be in 1.." + std::to_string(kMaxSketchWindow));
  }
  if (r_tilde.size() != static_cast<std::size_t>(n - 1)) {
    throw std::invalid_argument("default_sketch_family: expected " + std::to_string(n - 1) + " sketch sizes");
  }
  // Window-adjacent families cannot hold more than the window's operator
  // basis; the half-chain family is bounded by its candidate capacity only.
  const std::size_t nominal = geometry == SketchGeometry::kHalfChain
                                  ? std::numeric_limits<std::size_t>::max()
                                  : pow4(window) * (geometry == SketchGeometry::kPeriodic ? 2 : 1);
  SketchFamily f;
  f.n = n;
  f.window = window;
  f.seed = seed;
  f.geometry = geometry;
  for (int c = 0; c + 1 < n; ++c) {
    const std::size_t rt = r_tilde[static_cast<std::size_t>(c)];
    if (rt < 1 || rt > nominal) {
      throw std::invalid_argument("default_sketch_family: sketch size " + std::to_string(rt) + " at cut " +
                                  std::to_string(c) + " must be in 1.." + std::to_string(nominal));
    }
    const auto uc = static_cast<std::uint64_t>(c);
    for (bool left : {true, false}) {
      const auto cand = side_candidates(n, c, left, window, geometry);
      const double cap = side_capacity(cand.size());
      if (static_cast<double>(rt) > cap) {
        throw std::invalid_argument("default_sketch_family: only " + std::to_string(static_cast<long long>(cap)) +
                                    " distinct observables fit on the " + (left ? "left" : "right") + " of cut " +
                                    std::to_string(c));
      }
      auto obs = side_observables(cand, rt, CounterRng(hash_key(seed, uc, left ? 0 : 1, 0x534B)));
      (left ? f.left : f.right).push_back(std::move(obs));
    }
  }
  return f;
}

SketchFamily default_sketch_family(int n, std::size_t r_tilde, int window, std::uint64_t seed,
                                   SketchGeometry geometry) {
  if (n < 2) throw std::invalid_argument("default_sketch_family: at least two sites are required");
  std::vector<std::size_t> sizes;
  for (int c = 0; c + 1 < n; ++c) {
    const double cap = std::min(side_capacity(side_candidates(n, c, true, window, geometry).size()),
                                side_capacity(side_candidates(n, c, false, window, geometry).size()));
    std::size_t rt = r_tilde;
    if (static_cast<double>(rt) > cap) rt = static_cast<std::size_t>(cap);
    if (geometry != SketchGeometry::kHalfChain)
      rt = std::min(rt, pow4(window) * (geometry == SketchGeometry::kPeriodic ? 2 : 1));
    sizes.push_back(rt);
  }
  return default_sketch_family(n, sizes, window, seed, geometry);
}

std::string geometry_name(SketchGeometry g) {
  switch (g) {
    case SketchGeometry::kOpen: return "open";
    case SketchGeometry::kPeriodic: return "periodic";
    case SketchGeometry::kHalfChain: return "half-chain";
  }
  throw std::invalid_argument("geometry_name: unknown geometry");
}

SketchGeometry geometry_from_name(const std::string& name) {
  if (name == "open") return SketchGeometry::kOpen;
  if (name == "periodic") return SketchGeometry::kPeriodic;
  if (name == "half-chain") return SketchGeometry::kHalfChain;
  throw std::invalid_argument("unknown sketch geometry '" + name + "'");
}

std::vector<std::size_t> SketchMoments::ranks() const {
  std::vector<std::size_t> r;
  for (const auto& a : a_lt) r.push_back(static_cast<std::size_t>(a.cols()));
  return r;
}

SketchMoments exact_moments(const MPS& psi, const SketchFamily& family) {
  check_family_matches(family, psi.size(), "exact_moments");
  const int n = psi.size();
  const ExactEnvs ids = identity_envs(psi);
  std::vector<std::vector<Env>> lenv(static_cast<std::size_t>(n - 1)), renv(static_cast<std::size_t>(n - 1));
  for (int c = 0; c + 1 < n; ++c) {
    for (const auto& obs : family.left[static_cast<std::size_t>(c)])
      lenv[static_cast<std::size_t>(c)].push_back(left_observable_env(psi, ids, obs, c));
    for (const auto& obs : family.right[static_cast<std::size_t>(c)])
      renv[static_cast<std::size_t>(c)].push_back(right_observable_env(psi, ids, obs, c));
  }
  const std::vector<Env> unit{Env::Ones(1, 1)};
  SketchMoments m;
  m.n = n;
  for (int k = 0; k < n; ++k) {
    const auto& ls = k == 0 ? unit : lenv[static_cast<std::size_t>(k - 1)];
    const auto& rs = k == n - 1 ? unit : renv[static_cast<std::size_t>(k)];
    RealTensor b({ls.size(), 4, rs.size()});
    for (std::size_t z = 0; z < ls.size(); ++z)
      for (int i = 0; i < 4; ++i) {
        const Env pushed = push_left(ls[z], psi[k], site_operator(static_cast<Pauli>(i)));
        for (std::size_t u = 0; u < rs.size(); ++u)
          b(z, i, u) = kInvSqrt2 * real_pairing(pushed, rs[u], "B");
      }
    m.b.push_back(std::move(b));
  }
  for (int c = 0; c + 1 < n; ++c) {
    const auto& ls = lenv[static_cast<std::size_t>(c)];
    const auto& rs = renv[static_cast<std::size_t>(c)];
    MatrixXd z(static_cast<Eigen::Index>(ls.size()), static_cast<Eigen::Index>(rs.size()));
    for (std::size_t a = 0; a < ls.size(); ++a)
      for (std::size_t u = 0; u < rs.size(); ++u)
        z(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(u)) = real_pairing(ls[a], rs[u], "Z");
    m.z.push_back(std::move(z));
  }
  return m;
}

SketchMoments estimate_moments(const TraceTable& table, const SketchFamily& family, bool median_of_means,
                               int workers) {
  check_family_matches(family, table.n(), "estimate_moments");
  std::vector<std::vector<CompiledObservable>> left, right;
  for (const auto& side : family.left) {
    left.emplace_back();
    for (const auto& obs : side) left.back().push_back(compile(obs));
  }
  for (const auto& side : family.right) {
    right.emplace_back();
    for (const auto& obs : side) right.back().push_back(compile(obs));
  }
  const MomentLayout lay = layout_for(family);
  const std::size_t w = table.w_groups(), g = table.count() / w;

  // Chunks never straddle groups; partial sums are reduced in chunk order, so
  // the floating-point result does not depend on the worker count.
  struct Chunk {
    std::size_t group, begin, end;
  };
  std::vector<Chunk> chunks;
  for (std::size_t grp = 0; grp < w; ++grp)
    for (std::size_t s = grp * g; s < (grp + 1) * g; s += kMomentChunk)
      chunks.push_back({grp, s, std::min((grp + 1) * g, s + kMomentChunk)});

  std::vector<std::vector<double>> group_sums(w, std::vector<double>(lay.total, 0.0));
  std::vector<std::vector<double>> partial(kChunksPerWave);
  for (std::size_t wave = 0; wave < chunks.size(); wave += kChunksPerWave) {
    const std::size_t len = std::min(kChunksPerWave, chunks.size() - wave);
    parallel_for(len, workers, [&](std::size_t i) {
      const Chunk& ch = chunks[wave + i];
      accumulate_chunk(table, left, right, lay, ch.begin, ch.end, partial[i]);
    });
    for (std::size_t i = 0; i < len; ++i) {
      auto& dst = group_sums[chunks[wave + i].group];
      for (std::size_t e = 0; e < lay.total; ++e) dst[e] += partial[i][e];
    }
  }

  std::vector<double> flat(lay.total, 0.0);
  if (!median_of_means) {
    for (const auto& s : group_sums)
      for (std::size_t e = 0; e < lay.total; ++e) flat[e] += s[e];
    for (double& v : flat) v /= static_cast<double>(table.count());
  } else {
    std::vector<double> col(w);
    for (std::size_t e = 0; e < lay.total; ++e) {
      for (std::size_t grp = 0; grp < w; ++grp) col[grp] = group_sums[grp][e] / static_cast<double>(g);
      flat[e] = median_of(col);
    }
  }
  return unpack(family, lay, flat);
}

SketchMoments factorize_cuts(SketchMoments m, const RankRule& rule, Gauge gauge) {
  const std::size_t cuts = m.z.size();
  if (!rule.ranks.empty() && rule.ranks.size() != cuts) {
    throw std::invalid_argument("factorize_cuts: expected " + std::to_string(cuts) + " ranks, got " +
                                std::to_string(rule.ranks.size()));
  }
  m.a_lt.clear();
  m.a_gt.clear();
  m.spectra.clear();
  for (std::size_t c = 0; c < cuts; ++c) {
    const MatrixXd& z = m.z[c];
    const auto full = static_cast<std::size_t>(std::min(z.rows(), z.cols()));
    const SVDResult<double> svd = thin_svd(z);
    const VectorXd& s = svd.singular_values;
    m.spectra.push_back(s);
    std::size_t r;
    if (!rule.ranks.empty()) {
      r = rule.ranks[c];
      if (r < 1 || r > full) {
        throw std::invalid_argument("factorize_cuts: rank " + std::to_string(r) + " at cut " + std::to_string(c) +
                                    " exceeds the sketch size " + std::to_string(full));
      }
    } else {
      r = 0;
      while (r < full && s(static_cast<Eigen::Index>(r)) >= rule.threshold * s(0)) ++r;
      r = std::max<std::size_t>(r, 1);
    }
    const std::size_t requested = r;
    while (r > 1 && !(s(static_cast<Eigen::Index>(r - 1)) >= kIllConditionedRatio * s(0))) --r;
    if (r != requested) {
      m.warnings.push_back("cut " + std::to_string(c) + ": ill-conditioned, rank reduced from " +
                           std::to_string(requested) + " to " + std::to_string(r));
    }
    if (gauge == Gauge::kIdentity) {
      if (r != static_cast<std::size_t>(z.rows()) || z.rows() != z.cols()) {
        throw std::invalid_argument("factorize_cuts: identity gauge needs rank equal to the sketch size at cut " +
                                    std::to_string(c));
      }
      m.a_lt.push_back(MatrixXd::Identity(z.rows(), z.rows()));
      m.a_gt.push_back(z);
    } else {
      const auto ri = static_cast<Eigen::Index>(r);
      m.a_lt.push_back(svd.left.leftCols(ri));
      m.a_gt.push_back(s.head(ri).asDiagonal() * svd.right.topRows(ri));
    }
  }
  return m;
}

ComponentSolve solve_components(const SketchMoments& m, int workers) {
  if (!m.has_factors()) throw std::invalid_argument("solve_components: moments have not been factorized");
  const int n = m.n;
  const MatrixXd unit = MatrixXd::Ones(1, 1);
  std::vector<RealTensor> comps(static_cast<std::size_t>(n));
  std::vector<double> residuals(static_cast<std::size_t>(n), 0.0);
  std::vector<std::string> flags(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t ku) {
    const int k = static_cast<int>(ku);
    const MatrixXd& al = k == 0 ? unit : m.a_lt[ku - 1];
    const MatrixXd& ar = k == n - 1 ? unit : m.a_gt[ku];
    const RealTensor& b = m.b[ku];
    if (static_cast<std::size_t>(al.rows()) != b.dim(0) || static_cast<std::size_t>(ar.cols()) != b.dim(2)) {
      throw std::invalid_argument("solve_components: factor shapes do not match B at site " + std::to_string(k));
    }
    for (const MatrixXd* f : {&al, &ar}) {
      const VectorXd s = thin_svd(*f).singular_values;
      if (s.size() > 0 && s(s.size() - 1) < kPinvRelativeCutoff * s(0)) {
        flags[ku] = "site " + std::to_string(k) + ": ill-conditioned factor";
      }
    }
    const MatrixXd al_pinv = pseudoinverse(al);
    RealTensor g({static_cast<std::size_t>(al.cols()), 4, static_cast<std::size_t>(ar.rows())});
    double res2 = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      const MatrixXd bi = slice(b, i);
      const MatrixXd gi = least_squares<double>(ar, al_pinv * bi);
      res2 += (al * gi * ar - bi).squaredNorm();
      for (Eigen::Index x = 0; x < gi.rows(); ++x)
        for (Eigen::Index y = 0; y < gi.cols(); ++y) g(static_cast<std::size_t>(x), i, static_cast<std::size_t>(y)) = gi(x, y);
    }
    comps[ku] = std::move(g);
    residuals[ku] = std::sqrt(res2);
  });
  ComponentSolve out{TTCoeff(std::move(comps)), std::move(residuals), {}};
  for (auto& f : flags)
    if (!f.empty()) out.warnings.push_back(std::move(f));
  return out;
}

TomographyReport tomography_from_moments(SketchMoments m, const TomographyOptions& opts) {
  m = factorize_cuts(std::move(m), opts.rank_rule, opts.gauge);
  ComponentSolve solved = solve_components(m, opts.workers);
  TomographyReport rep;
  rep.recovered = std::move(solved.recovered);
  rep.ranks = m.ranks();
  rep.spectra = m.spectra;
  rep.residuals = std::move(solved.residuals);
  rep.warnings = m.warnings;
  rep.warnings.insert(rep.warnings.end(), solved.warnings.begin(), solved.warnings.end());
  return rep;
}

TomographyReport sketch_tomography(const TraceTable& table, const SketchFamily& family, const TomographyOptions& opts) {
  return tomography_from_moments(estimate_moments(table, family, opts.median_of_means, opts.workers), opts);
}

TomographyReport sketch_tomography_exact(const MPS& psi, const SketchFamily& family, const TomographyOptions& opts) {
  return tomography_from_moments(exact_moments(psi, family), opts);
}

void attach_ground_truth(TomographyReport& report, const MPS& psi, const SketchFamily& family, Gauge gauge) {
  SketchMoments exact = factorize_cuts(exact_moments(psi, family), RankRule::fixed(report.ranks), gauge);
  double cz = 1.0;
  for (std::size_t c = 0; c < exact.spectra.size(); ++c) {
    const double s = exact.spectra[c](static_cast<Eigen::Index>(report.ranks[c] - 1));
    cz = std::max(cz, s > 0.0 ? 2.0 / s : HUGE_VAL);
  }
  const ComponentSolve truth = solve_components(exact);
  double cg = 1.0;
  for (const auto& g : truth.recovered.components()) cg = std::max(cg, g.frobenius_norm());
  report.c_z = cz;
  report.c_g = cg;
}

RealTensor chain_full(const std::vector<RealTensor>& components) {
  if (components.empty()) throw std::invalid_argument("chain_full: empty chain");
  RowMat acc = RowMat::Ones(1, 1);  // (prod m) x r
  Shape shape;
  for (const auto& g : components) {
    if (g.rank() != 3 || static_cast<std::size_t>(acc.cols()) != g.dim(0)) {
      throw std::invalid_argument("chain_full: inconsistent component shapes");
    }
    const auto m = g.as_matrix(g.dim(0), g.dim(1) * g.dim(2));
    RowMat next = acc * m;  // (P) x (m r')
    acc = Eigen::Map<RowMat>(next.data(), next.rows() * static_cast<Eigen::Index>(g.dim(1)),
                             static_cast<Eigen::Index>(g.dim(2)));
    shape.push_back(g.dim(1));
  }
  if (acc.cols() != 1) throw std::invalid_argument("chain_full: last rank must be 1");
  return RealTensor(shape, std::vector<double>(acc.data(), acc.data() + acc.size()));
}

double tt_perturbation_constant(const std::vector<RealTensor>& components) {
  double c = 0.0;
  for (const auto& g : components) {
    const std::size_t l = g.dim(0), m = g.dim(1), r = g.dim(2);
    MatrixXd unfolding(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(l * r));
    for (std::size_t a = 0; a < l; ++a)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t b = 0; b < r; ++b)
          unfolding(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a * r + b)) = g(a, i, b);
    c = std::max(c, pinv_norm(unfolding));
  }
  return c;
}

}  // namespace sketchtomo
