#pragma once

// Experiment driver: JSON configs in, JSON / SHDW / CSV artefacts out. Every
// command is a pure function of its config and inputs; worker counts never
// change the output.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sketchtomo/mle.hpp"
#include "sketchtomo/mps.hpp"
#include "sketchtomo/serialize.hpp"
#include "sketchtomo/shadow.hpp"
#include "sketchtomo/sketch.hpp"

namespace sketchtomo {

struct ModelConfig {
  std::string type = "random-mps";  // random-mps | heisenberg-1d | tfim-1d
  int n = 6;
  int bond = 2;  // random-mps only
  double J = 1.0;
  double h = 1.0;
  bool periodic = false;  // heisenberg-1d only
  std::uint64_t seed = 0;
};

struct ShadowConfig {
  std::size_t count = 10000;
  std::uint32_t w_groups = 1;
  std::uint64_t seed = 1;
};

enum class RankMode { kThreshold, kFixed, kTruth };

struct SketchConfig {
  std::size_t r_tilde = 64;
  int window = 2;
  std::uint64_t seed = 2;
  SketchGeometry geometry = SketchGeometry::kHalfChain;
  RankMode rank_mode = RankMode::kThreshold;
  std::vector<std::size_t> ranks;  // kFixed: one per cut
  double threshold = 1e-2;         // kThreshold
  bool median_of_means = false;
};

struct MLESection {
  double learning_rate = 0.1;
  int max_sweeps = 200;
  bool target_truth = true;       // target = nll of the true state on the batch
  std::optional<double> target_nll;  // used when target_truth is false
  std::optional<int> bond;        // nullopt: the true state's maximal bond
  std::uint64_t seed = 3;
};

struct EvaluationConfig {
  std::vector<std::string> observables;
  /// Renyi-2 rows for every subsystem of at most this many sites (0: none),
  /// unless subsystems lists them explicitly (0-based in memory).
  int renyi_max_size = 2;
  std::vector<std::vector<int>> subsystems;
  /// Groups used for the median-of-means shadow column.
  std::uint32_t shadow_w_groups = 10;
};

struct ScalingConfig {
  std::vector<std::size_t> counts{10000, 40000, 160000};
  int seeds = 10;
};

struct ExperimentConfig {
  ModelConfig model;
  ShadowConfig shadow;
  SketchConfig sketch;
  std::optional<MLESection> mle;
  EvaluationConfig evaluation;
  ScalingConfig scaling;

  /// Throws std::invalid_argument with the offending field.
  void validate() const;
};

json config_to_json(const ExperimentConfig& cfg);
/// Missing keys take defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const json& j);
ExperimentConfig read_config_file(const std::filesystem::path& path);

/// Target state of the model (ground states by exact diagonalization).
struct ModelState {
  MPS psi;
  std::optional<double> energy;
  bool degenerate = false;
};
ModelState make_model_state(const ModelConfig& model);

/// {"state": MPS, "metadata": {...}}.
json cmd_gen_state(const ExperimentConfig& cfg);
/// Accepts gen-state output or a bare MPS object.
MPS state_from_json(const json& j);

ShadowBatch cmd_shadow(const ExperimentConfig& cfg, const MPS& psi, int workers = 1);

/// Per-cut ranks for the configured rank rule; `truth` is needed for kTruth.
RankRule rank_rule_for(const SketchConfig& sketch, const SketchFamily& family, const MPS* truth);
SketchFamily family_for(const ExperimentConfig& cfg);

struct TomoInputs {
  const ShadowBatch* batch = nullptr;  // shadow mode
  const MPS* state = nullptr;          // noiseless mode, or kTruth ranks
  bool noiseless = false;
  bool timings = false;
  int workers = 1;
};

/// Report JSON: recovered train, ranks, spectra, residuals, warnings and a
/// description of the sketch family; wall-clock timings only on request.
json cmd_tomo(const ExperimentConfig& cfg, const TomoInputs& in);

struct MLEOutput {
  json state;           // {"state": MPS, "metadata": {...}}
  std::string trace_csv;  // sweep,site,nll
};
MLEOutput cmd_mle(const ExperimentConfig& cfg, const ShadowBatch& batch, const MPS* truth, int workers = 1);

/// One row of the evaluation table; absent estimates are nullopt.
/// sketch_rescaled divides by the reconstruction's trace (raw sketch is the
/// primary column); it is empty when that trace is not positive.
struct EvalRow {
  std::string id;
  double exact = 0.0;
  std::optional<double> shadow, sketch, sketch_rescaled, mle;
};

struct EvalInputs {
  const ShadowBatch* batch = nullptr;
  const TTCoeff* sketch = nullptr;
  const MPS* mle = nullptr;
  int workers = 1;
};

/// Observable ids (sites 1-based):
///   pauli:LABEL      e.g. pauli:X1Z3
///   heis2pt:i        (X1Xi + Y1Yi + Z1Zi) / 3
///   xprod:k          X1 X2 ... Xk
///   tfim_zxz:k       Z1 Zn X2 ... X(k-1)
///   zz:j             Zj Z(j+1)
/// heis2pt, xprod and tfim_zxz accept '*' for every admissible index.
/// Renyi rows have ids renyi2:a or renyi2:a_b.
/// Throws std::invalid_argument on an unknown or out-of-range id.
std::vector<EvalRow> evaluate(const ExperimentConfig& cfg, const MPS& truth, const EvalInputs& in);
std::string eval_csv(const std::vector<EvalRow>& rows);
std::string cmd_eval(const ExperimentConfig& cfg, const MPS& truth, const EvalInputs& in);

/// Expands one observable id into the Pauli sums it denotes.
std::vector<std::pair<std::string, PauliSum>> parse_observable(const std::string& id, int n);

struct ScalingRow {
  std::size_t count = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
};
struct ScalingResult {
  std::vector<ScalingRow> rows;
  std::optional<double> slope;
};

/// For each count and seed: sample, reconstruct, and measure the Frobenius
/// distance to the true coefficient train. The slope is the least-squares fit
/// of log(mean error) against log(count).
ScalingResult run_scaling(const ExperimentConfig& cfg, int workers = 1);
std::string scaling_csv(const ScalingResult& r);
std::string cmd_scaling(const ExperimentConfig& cfg, int workers = 1);

/// Least-squares slope of log(y) against log(x); nullopt for fewer than two points.
std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Fixed-precision decimal used in every CSV.
std::string format_number(double v);

}  // namespace sketchtomo
