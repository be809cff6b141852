#pragma once

// Random single-qubit Pauli measurements simulated exactly on an MPS, and the
// classical-shadow estimators built from them.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sketchtomo/mps.hpp"
#include "sketchtomo/pauli.hpp"

namespace sketchtomo {

/// Outcome of measuring every site: a basis and a bit per site. Bit 0 is the
/// +1 eigenvalue of the measured Pauli.
struct ShadowSample {
  std::vector<Basis> bases;
  std::vector<std::uint8_t> bits;
};

/// Byte code of one site record: basis * 2 + bit, in 0..5.
constexpr std::uint8_t encode_record(Basis b, int bit) {
  return static_cast<std::uint8_t>(static_cast<int>(b) * 2 + bit);
}
constexpr Basis record_basis(std::uint8_t code) { return static_cast<Basis>(code / 2); }
constexpr int record_bit(std::uint8_t code) { return code % 2; }

/// Samples stored row-major as one byte per site. Groups for median-of-means
/// are contiguous runs of count / w_groups samples.
class ShadowBatch {
 public:
  ShadowBatch() = default;
  ShadowBatch(int n, std::uint32_t w_groups, std::uint64_t seed, std::vector<std::uint8_t> records);

  int n() const { return n_; }
  std::size_t count() const { return n_ == 0 ? 0 : records_.size() / static_cast<std::size_t>(n_); }
  std::uint32_t w_groups() const { return w_groups_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t group_size() const { return count() / w_groups_; }

  std::span<const std::uint8_t> records() const { return records_; }
  std::span<const std::uint8_t> record(std::size_t j) const {
    return std::span<const std::uint8_t>(records_).subspan(j * static_cast<std::size_t>(n_), static_cast<std::size_t>(n_));
  }
  ShadowSample sample(std::size_t j) const;

  /// Same samples, regrouped. The count must be divisible by w.
  ShadowBatch with_groups(std::uint32_t w) const;

  friend bool operator==(const ShadowBatch&, const ShadowBatch&) = default;

 private:
  int n_ = 0;
  std::uint32_t w_groups_ = 1;
  std::uint64_t seed_ = 0;
  std::vector<std::uint8_t> records_;
};

/// Exact sampling by sequential conditional marginals. Sample j only depends
/// on (seed, j), so the batch is identical for any worker count.
/// Throws std::invalid_argument if |<psi|psi> - 1| > 1e-6 or count is not a
/// positive multiple of w_groups.
ShadowBatch sample_shadows(const MPS& psi, std::size_t count, std::uint32_t w_groups, std::uint64_t seed,
                           int workers = 1);

/// t_l^(j)(i) = tr(M_l^(j) sigma^i) with M = 3 U^dag |b><b| U - I and
/// normalized sigma. Entries are 1/sqrt(2) at i = 0, +-3/sqrt(2) at the
/// measured basis and 0 elsewhere.
class TraceTable {
 public:
  explicit TraceTable(const ShadowBatch& batch);

  int n() const { return n_; }
  std::size_t count() const { return count_; }
  std::uint32_t w_groups() const { return w_groups_; }

  double operator()(std::size_t sample, int site, int pauli) const {
    return values_[(sample * static_cast<std::size_t>(n_) + static_cast<std::size_t>(site)) * 4 +
                   static_cast<std::size_t>(pauli)];
  }
  /// Pointer to the four entries of (sample, site).
  const double* entries(std::size_t sample, int site) const {
    return values_.data() + (sample * static_cast<std::size_t>(n_) + static_cast<std::size_t>(site)) * 4;
  }

 private:
  int n_;
  std::size_t count_;
  std::uint32_t w_groups_;
  std::vector<double> values_;
};

TraceTable build_trace_table(const ShadowBatch& batch);

/// Per-sample estimate of a string: prod over support of sqrt(2) * t(label)
/// (off-support factors are 1), times the string's coefficient.
double shadow_pauli_estimate(const TraceTable& table, const PauliString& p, bool median_of_means);

/// Median (or grand mean) of the group means of the weighted per-sample sum.
double shadow_weighted_estimate(const TraceTable& table, const PauliSum& obs, bool median_of_means);

/// Aggregates per-sample values: grand mean, or median of the means of
/// w_groups contiguous groups. With one group both coincide exactly.
double aggregate_samples(std::span<const double> values, std::uint32_t w_groups, bool median_of_means);

/// Entry-wise median of group means for a stack of group sums.
double median_of(std::vector<double> values);

/// SHDW binary format: "SHDW", version byte 1, three reserved zero bytes,
/// u32 n, u32 count, u32 w_groups, u64 seed (little endian), then the records.
constexpr std::size_t kShadowHeaderBytes = 28;
std::vector<std::uint8_t> encode_shadow(const ShadowBatch& batch);
ShadowBatch decode_shadow(std::span<const std::uint8_t> bytes);
void write_shadow_file(const std::filesystem::path& path, const ShadowBatch& batch);
ShadowBatch read_shadow_file(const std::filesystem::path& path);

}  // namespace sketchtomo
