#pragma once

// Sketch tomography: recover the Pauli coefficient TT of a state from local
// observable moments via small linear systems, one per site.
//
// Cuts are 0-based: cut c separates sites <= c from sites >= c + 1, c in
// [0, n-2]. For site k the linear system is
//   A_lt(k) * G_k(:, i, :) * A_gt(k) = B_k(:, i, :)
// with B_k(z, i, u) = tr(rho L^z sigma^i_k R^u), L from left[k-1] and R from
// right[k], and the factors A_lt, A_gt come from the cut matrices
//   Z_c(z, u) = tr(rho left[c][z] right[c][u]) ~= A_lt(c+1) * A_gt(c).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sketchtomo/mps.hpp"
#include "sketchtomo/pauli.hpp"
#include "sketchtomo/pauli_tt.hpp"
#include "sketchtomo/shadow.hpp"
#include "sketchtomo/tensor.hpp"

namespace sketchtomo {

enum class SketchGeometry {
  kOpen,      // observables near the cut only
  kPeriodic,  // also near the far end of each half (the wrap-around bond)
  kHalfChain, // window-local strings anywhere on each half
};

struct SketchFamily {
  int n = 0;
  int window = 0;
  std::uint64_t seed = 0;
  SketchGeometry geometry = SketchGeometry::kOpen;
  /// left[c]: observables supported on sites <= c.
  std::vector<std::vector<PauliSum>> left;
  /// right[c]: observables supported on sites >= c + 1. Same count as left[c].
  std::vector<std::vector<PauliSum>> right;

  std::size_t r_tilde(int cut) const { return right.at(static_cast<std::size_t>(cut)).size(); }
  std::vector<std::size_t> r_tilde() const;

  /// Checks sides, sizes and the unit-weight bound sum |coef| <= 1.
  /// Throws std::invalid_argument.
  void validate() const;

  friend bool operator==(const SketchFamily&, const SketchFamily&) = default;
};

constexpr int kSketchTermsPerObservable = 3;
constexpr int kMaxSketchWindow = 6;

/// First observable on each side is the identity with weight 1; the rest are
/// random +-1/3 combinations of 3 distinct non-identity strings, each string
/// inside one window of `window` sites: the window bordering the other half
/// (kOpen), also the far-end window (kPeriodic), or any window of the half
/// (kHalfChain). When the identity plus every candidate string fit, they are
/// taken individually. A combination and its negation count as the same
/// observable, and combinations are kept linearly independent while possible.
/// Throws std::invalid_argument if a size exceeds 4^window (twice that for
/// kPeriodic, no such cap for kHalfChain) or the distinct combinations
/// available at a cut.
SketchFamily default_sketch_family(int n, const std::vector<std::size_t>& r_tilde, int window, std::uint64_t seed,
                                   SketchGeometry geometry = SketchGeometry::kOpen);
/// Uniform size, clipped per cut to the number of distinct observables both
/// sides can hold (and the window cap). Near the chain ends this exceeds the
/// smaller side's operator span, so Z is rank-deficient there: use a rank
/// rule (SVD gauge), or the per-cut overload for the identity gauge.
SketchFamily default_sketch_family(int n, std::size_t r_tilde, int window, std::uint64_t seed,
                                   SketchGeometry geometry = SketchGeometry::kOpen);

std::string geometry_name(SketchGeometry g);
/// "open", "periodic" or "half-chain"; throws std::invalid_argument otherwise.
SketchGeometry geometry_from_name(const std::string& name);

struct SketchMoments {
  int n = 0;
  /// b[k] has shape (r~_{k-1}, 4, r~_k) with unit axes at the chain ends.
  std::vector<RealTensor> b;
  /// z[c] is r~_c x r~_c.
  std::vector<MatrixXd> z;

  /// Filled by factorize_cuts: a_lt[c] = A_lt(c+1) (r~_c x r_c) and
  /// a_gt[c] = A_gt(c) (r_c x r~_c); spectra[c] are the singular values of z[c].
  std::vector<MatrixXd> a_lt;
  std::vector<MatrixXd> a_gt;
  std::vector<VectorXd> spectra;
  std::vector<std::string> warnings;

  bool has_factors() const { return !a_lt.empty(); }
  std::vector<std::size_t> ranks() const;
};

/// Moments from exact expectation values of a (normalized) MPS.
SketchMoments exact_moments(const MPS& psi, const SketchFamily& family);

/// Moments estimated from shadows. With median_of_means every entry is the
/// median over the table's groups; otherwise the grand mean. Identical for any
/// worker count.
SketchMoments estimate_moments(const TraceTable& table, const SketchFamily& family, bool median_of_means,
                               int workers = 1);

/// Explicit per-cut ranks, or the number of singular values >= threshold*s1.
struct RankRule {
  std::vector<std::size_t> ranks;
  double threshold = 1e-2;

  static RankRule fixed(std::vector<std::size_t> r) { return RankRule{std::move(r), 0.0}; }
  static RankRule relative(double tau = 1e-2) { return RankRule{{}, tau}; }
};

enum class Gauge {
  kSvd,       // A_lt = U, A_gt = S V^T
  kIdentity,  // A_lt = I, A_gt = Z (requires rank = r~ at every cut)
};

/// A rank whose singular value falls below this fraction of s1 is dropped.
constexpr double kIllConditionedRatio = 1e-6;

/// Throws std::invalid_argument if a rank exceeds the size of z[c].
SketchMoments factorize_cuts(SketchMoments m, const RankRule& rule, Gauge gauge = Gauge::kSvd);

struct ComponentSolve {
  TTCoeff recovered;
  std::vector<double> residuals;
  std::vector<std::string> warnings;
};

/// Solves every site's system: left factor by pseudoinverse, right factor by
/// least squares. Factors with singular values below the pseudoinverse cutoff
/// are reported as ill-conditioned in warnings.
ComponentSolve solve_components(const SketchMoments& m, int workers = 1);

struct TomographyOptions {
  RankRule rank_rule = RankRule::relative();
  bool median_of_means = false;
  Gauge gauge = Gauge::kSvd;
  int workers = 1;
};

struct TomographyReport {
  TTCoeff recovered;
  std::vector<std::size_t> ranks;
  std::vector<VectorXd> spectra;
  std::vector<double> residuals;
  std::vector<std::string> warnings;
  std::optional<double> c_z;
  std::optional<double> c_g;
};

TomographyReport tomography_from_moments(SketchMoments m, const TomographyOptions& opts);
TomographyReport sketch_tomography(const TraceTable& table, const SketchFamily& family, const TomographyOptions& opts);
/// Same pipeline on exact moments (infinite-sample limit).
TomographyReport sketch_tomography_exact(const MPS& psi, const SketchFamily& family, const TomographyOptions& opts);

/// c_Z = max(1, max_c 2 / s_{r_c}(Z_c)) and c_G = max(1, max_k ||G_k||_F),
/// evaluated on exact moments at the report's ranks and gauge.
void attach_ground_truth(TomographyReport& report, const MPS& psi, const SketchFamily& family, Gauge gauge);

// Tensor-train perturbation diagnostics on general chains with components of
// shape (r_{k-1}, m_k, r_k).

/// Full tensor of a chain, shape (m_1, ..., m_d).
RealTensor chain_full(const std::vector<RealTensor>& components);

/// max_k ||F_k^+||_2 over the unfoldings F_k(i_k; (a_{k-1}, a_k)).
double tt_perturbation_constant(const std::vector<RealTensor>& components);

}  // namespace sketchtomo
