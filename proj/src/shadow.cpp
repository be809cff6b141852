#include "sketchtomo/shadow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

#include "sketchtomo/parallel.hpp"
#include "sketchtomo/random.hpp"

namespace sketchtomo {

namespace {

const double kSqrt2 = std::sqrt(2.0);

constexpr std::size_t kSampleBlock = 256;
constexpr std::uint8_t kShadowVersion = 1;

void validate_records(int n, std::uint32_t w_groups, std::span<const std::uint8_t> records) {
  if (n < 1) throw std::invalid_argument("ShadowBatch: n must be positive");
  if (w_groups < 1) throw std::invalid_argument("ShadowBatch: w_groups must be at least 1");
  if (records.size() % static_cast<std::size_t>(n) != 0) {
    throw std::invalid_argument("ShadowBatch: record length is not a multiple of n");
  }
  const std::size_t count = records.size() / static_cast<std::size_t>(n);
  if (count % w_groups != 0) {
    throw std::invalid_argument("ShadowBatch: sample count " + std::to_string(count) +
                                " is not divisible by w_groups " + std::to_string(w_groups));
  }
  for (auto code : records) {
    if (code > 5) throw std::invalid_argument("ShadowBatch: record byte out of range");
  }
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>(value >> (8 * b)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t pos) {
  T value = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) value |= static_cast<T>(static_cast<T>(in[pos + b]) << (8 * b));
  return value;
}

}  // namespace

ShadowBatch::ShadowBatch(int n, std::uint32_t w_groups, std::uint64_t seed, std::vector<std::uint8_t> records)
    : n_(n), w_groups_(w_groups), seed_(seed), records_(std::move(records)) {
  validate_records(n_, w_groups_, records_);
}

ShadowSample ShadowBatch::sample(std::size_t j) const {
  if (j >= count()) throw std::out_of_range("ShadowBatch::sample: index out of range");
  ShadowSample s;
  for (auto code : record(j)) {
    s.bases.push_back(record_basis(code));
    s.bits.push_back(static_cast<std::uint8_t>(record_bit(code)));
  }
  return s;
}

ShadowBatch ShadowBatch::with_groups(std::uint32_t w) const { return ShadowBatch(n_, w, seed_, records_); }

ShadowBatch sample_shadows(const MPS& psi, std::size_t count, std::uint32_t w_groups, std::uint64_t seed,
                           int workers) {
  const double norm2 = psi.norm_squared();
  if (std::abs(norm2 - 1.0) > 1e-6) {
    throw std::invalid_argument("sample_shadows: state is not normalized (<psi|psi> = " + std::to_string(norm2) + ")");
  }
  if (w_groups < 1 || count == 0 || count % w_groups != 0) {
    throw std::invalid_argument("sample_shadows: count must be a positive multiple of w_groups");
  }
  const int n = psi.size();
  // Right-orthonormal sites > 0 make every right environment the identity, so
  // the conditional marginal only needs the running left vector.
  const MPS rc = canonicalize(psi, 0);

  // rotated[l][basis*2 + bit] = sum_s conj(e_{basis,bit}(s)) F_l(:, s, :).
  std::vector<std::array<MatrixXcd, 6>> rotated(static_cast<std::size_t>(n));
  for (int l = 0; l < n; ++l) {
    const auto& f = rc[l];
    const auto a = static_cast<Eigen::Index>(f.dim(0)), c = static_cast<Eigen::Index>(f.dim(2));
    for (int b = 0; b < 3; ++b)
      for (int bit = 0; bit < 2; ++bit) {
        const Eigen::Vector2cd e = basis_eigenvector(static_cast<Basis>(b), bit);
        MatrixXcd m = MatrixXcd::Zero(a, c);
        for (Eigen::Index x = 0; x < a; ++x)
          for (Eigen::Index y = 0; y < c; ++y)
            for (int s = 0; s < 2; ++s) m(x, y) += std::conj(e(s)) * f(static_cast<std::size_t>(x), s, static_cast<std::size_t>(y));
        rotated[static_cast<std::size_t>(l)][static_cast<std::size_t>(b * 2 + bit)] = std::move(m);
      }
  }

  std::vector<std::uint8_t> records(count * static_cast<std::size_t>(n));
  const std::size_t blocks = (count + kSampleBlock - 1) / kSampleBlock;
  parallel_for(blocks, workers, [&](std::size_t block) {
    const std::size_t end = std::min(count, (block + 1) * kSampleBlock);
    Eigen::RowVectorXcd v, u0, u1;
    for (std::size_t j = block * kSampleBlock; j < end; ++j) {
      v = Eigen::RowVectorXcd::Ones(1);
      for (int l = 0; l < n; ++l) {
        const auto ul = static_cast<std::uint64_t>(l);
        const int b = std::min(2, static_cast<int>(3.0 * to_unit(hash_key(seed, j, ul, 0))));
        const auto& rot = rotated[static_cast<std::size_t>(l)];
        u0 = v * rot[static_cast<std::size_t>(b * 2)];
        u1 = v * rot[static_cast<std::size_t>(b * 2 + 1)];
        const double p0 = u0.squaredNorm(), p1 = u1.squaredNorm();
        const int bit = to_unit(hash_key(seed, j, ul, 1)) * (p0 + p1) < p0 ? 0 : 1;
        v = bit == 0 ? u0 / std::sqrt(p0) : u1 / std::sqrt(p1);
        records[j * static_cast<std::size_t>(n) + static_cast<std::size_t>(l)] = encode_record(static_cast<Basis>(b), bit);
      }
    }
  });
  return ShadowBatch(n, w_groups, seed, std::move(records));
}

TraceTable::TraceTable(const ShadowBatch& batch)
    : n_(batch.n()), count_(batch.count()), w_groups_(batch.w_groups()), values_(batch.records().size() * 4, 0.0) {
  const double id = 1.0 / kSqrt2, hit = 3.0 / kSqrt2;
  const auto records = batch.records();
  for (std::size_t r = 0; r < records.size(); ++r) {
    double* t = values_.data() + r * 4;
    t[0] = id;
    t[1 + static_cast<int>(record_basis(records[r]))] = record_bit(records[r]) == 0 ? hit : -hit;
  }
}

TraceTable build_trace_table(const ShadowBatch& batch) { return TraceTable(batch); }

double median_of(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median_of: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

double aggregate_samples(std::span<const double> values, std::uint32_t w_groups, bool median_of_means) {
  if (w_groups < 1 || values.empty() || values.size() % w_groups != 0) {
    throw std::invalid_argument("aggregate_samples: sample count must be a positive multiple of the group count");
  }
  const std::size_t g = values.size() / w_groups;
  std::vector<double> sums(w_groups, 0.0);
  for (std::size_t w = 0; w < w_groups; ++w)
    for (std::size_t j = w * g; j < (w + 1) * g; ++j) sums[w] += values[j];
  if (!median_of_means) {
    double total = 0.0;
    for (double s : sums) total += s;
    return total / static_cast<double>(values.size());
  }
  for (double& s : sums) s /= static_cast<double>(g);
  return median_of(std::move(sums));
}

namespace {

void check_table_support(const TraceTable& table, const PauliString& p) {
  check_support(p, table.n());
}

double string_value(const TraceTable& table, std::size_t j, const PauliString& p) {
  double v = p.coefficient;
  for (const auto& [site, label] : p.support) v *= kSqrt2 * table(j, site, static_cast<int>(label));
  return v;
}

}  // namespace

double shadow_pauli_estimate(const TraceTable& table, const PauliString& p, bool median_of_means) {
  check_table_support(table, p);
  std::vector<double> values(table.count());
  for (std::size_t j = 0; j < values.size(); ++j) values[j] = string_value(table, j, p);
  return aggregate_samples(values, table.w_groups(), median_of_means);
}

double shadow_weighted_estimate(const TraceTable& table, const PauliSum& obs, bool median_of_means) {
  for (const auto& p : obs) check_table_support(table, p);
  std::vector<double> values(table.count(), 0.0);
  for (std::size_t j = 0; j < values.size(); ++j)
    for (const auto& p : obs) values[j] += string_value(table, j, p);
  return aggregate_samples(values, table.w_groups(), median_of_means);
}

std::vector<std::uint8_t> encode_shadow(const ShadowBatch& batch) {
  std::vector<std::uint8_t> out{'S', 'H', 'D', 'W', kShadowVersion, 0, 0, 0};
  out.reserve(kShadowHeaderBytes + batch.records().size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(batch.n()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(batch.count()));
  put_le<std::uint32_t>(out, batch.w_groups());
  put_le<std::uint64_t>(out, batch.seed());
  out.insert(out.end(), batch.records().begin(), batch.records().end());
  return out;
}

ShadowBatch decode_shadow(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kShadowHeaderBytes || bytes[0] != 'S' || bytes[1] != 'H' || bytes[2] != 'D' || bytes[3] != 'W') {
    throw std::runtime_error("decode_shadow: missing SHDW header");
  }
  if (bytes[4] != kShadowVersion) {
    throw std::runtime_error("decode_shadow: unsupported version " + std::to_string(bytes[4]));
  }
  const auto n = get_le<std::uint32_t>(bytes, 8);
  const auto count = get_le<std::uint32_t>(bytes, 12);
  const auto w = get_le<std::uint32_t>(bytes, 16);
  const auto seed = get_le<std::uint64_t>(bytes, 20);
  const std::size_t payload = static_cast<std::size_t>(n) * count;
  if (bytes.size() != kShadowHeaderBytes + payload) {
    throw std::runtime_error("decode_shadow: payload is " + std::to_string(bytes.size() - kShadowHeaderBytes) +
                             " bytes, expected " + std::to_string(payload));
  }
  try {
    return ShadowBatch(static_cast<int>(n), w, seed,
                       std::vector<std::uint8_t>(bytes.begin() + kShadowHeaderBytes, bytes.end()));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("decode_shadow: ") + e.what());
  }
}

void write_shadow_file(const std::filesystem::path& path, const ShadowBatch& batch) {
  const auto bytes = encode_shadow(batch);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ShadowBatch read_shadow_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_shadow(bytes);
}

}  // namespace sketchtomo
