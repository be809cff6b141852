#pragma once

// Maximum-likelihood MPS fitting on Pauli measurement records by one-site
// gradient sweeps.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sketchtomo/mps.hpp"
#include "sketchtomo/shadow.hpp"

namespace sketchtomo {

struct MLEConfig {
  double learning_rate = 0.1;
  int max_sweeps = 200;
  std::optional<double> target_nll;
  int bond = 2;
  std::uint64_t seed = 0;
  int workers = 1;

  /// Throws std::invalid_argument unless learning_rate >= 0, bond >= 1 and
  /// max_sweeps >= 0.
  void validate() const;
};

/// Amplitudes with magnitude below this are clamped in the loss.
constexpr double kAmplitudeFloor = 1e-150;

/// <b| U |phi>: every site contracted with the conjugated eigenvector of its
/// measured basis.
cplx amplitude(const MPS& phi, std::span<const std::uint8_t> record);
cplx amplitude(const MPS& phi, const ShadowSample& sample);

/// -(1/B) sum_j log |<b_j|U_j|phi>|^2 + log <phi|phi>. `clamped` receives the
/// number of samples whose amplitude hit the floor.
double nll(const MPS& phi, const ShadowBatch& batch, std::size_t* clamped = nullptr, int workers = 1);

/// Gradient with respect to conj(F_site) for phi in mixed canonical form with
/// center `site`: -(1/B) sum_j conj(E_j) / conj(a_j) + F_site / <phi|phi>,
/// where E_j is the amplitude chain with the site removed. Clamped samples
/// are left out of the sum.
DenseTensor nll_gradient(const MPS& phi, const ShadowBatch& batch, int site, std::size_t* clamped = nullptr,
                         int workers = 1);

struct TrainStep {
  int sweep = 0;
  int site = 0;
  double nll = 0.0;
};

struct TrainResult {
  MPS state;
  std::vector<TrainStep> trace;
  int sweeps = 0;
  bool reached_target = false;
  std::size_t clamped = 0;
};

/// Each sweep updates sites 0..n-2 moving right, then n-1..1 moving left,
/// re-orthonormalizing after every update. Stops after max_sweeps or once the
/// loss is at or below target_nll. Throws std::runtime_error if the loss
/// becomes non-finite.
TrainResult train(const MPS& phi0, const ShadowBatch& batch, const MLEConfig& cfg);

}  // namespace sketchtomo
