#include "sketchtomo/mle.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sketchtomo/parallel.hpp"

namespace sketchtomo {

namespace {

using Env = RowMatrix<cplx>;  // one row per sample
using Rotated = std::array<MatrixXcd, 6>;

constexpr std::size_t kSampleChunk = 2048;
const double kLogFloor = 2.0 * std::log(kAmplitudeFloor);

// rot[code](a, b) = sum_s conj(e_code(s)) F(a, s, b)
Rotated rotate(const DenseTensor& f) {
  const auto a = static_cast<Eigen::Index>(f.dim(0)), b = static_cast<Eigen::Index>(f.dim(2));
  Rotated out;
  for (int code = 0; code < 6; ++code) {
    const Eigen::Vector2cd& e = basis_eigenvector(record_basis(static_cast<std::uint8_t>(code)), code % 2);
    MatrixXcd m(a, b);
    for (Eigen::Index x = 0; x < a; ++x)
      for (Eigen::Index y = 0; y < b; ++y)
        m(x, y) = std::conj(e(0)) * f(static_cast<std::size_t>(x), 0, static_cast<std::size_t>(y)) +
                  std::conj(e(1)) * f(static_cast<std::size_t>(x), 1, static_cast<std::size_t>(y));
    out[static_cast<std::size_t>(code)] = std::move(m);
  }
  return out;
}

std::vector<Rotated> rotate_all(const MPS& phi) {
  std::vector<Rotated> r;
  for (int l = 0; l < phi.size(); ++l) r.push_back(rotate(phi[l]));
  return r;
}

void check_batch(const MPS& phi, const ShadowBatch& batch, const char* what) {
  if (batch.n() != phi.size()) {
    throw std::invalid_argument(std::string(what) + ": batch has " + std::to_string(batch.n()) + " sites, state has " +
                                std::to_string(phi.size()));
  }
  if (batch.count() == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
}

std::size_t chunk_count(std::size_t count) { return (count + kSampleChunk - 1) / kSampleChunk; }

// Rows of `src` selected by `rows`.
Env gather(const Env& src, const std::vector<Eigen::Index>& rows) {
  Env out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = src.row(rows[r]);
  return out;
}

// Sample indices of [begin, end) grouped by their record code at `site`.
std::array<std::vector<Eigen::Index>, 6> by_code(const ShadowBatch& batch, int site, std::size_t begin,
                                                 std::size_t end) {
  std::array<std::vector<Eigen::Index>, 6> out;
  for (std::size_t j = begin; j < end; ++j)
    out[batch.record(j)[static_cast<std::size_t>(site)]].push_back(static_cast<Eigen::Index>(j));
  return out;
}

// env rows advanced through `site`: rightward row * rot, leftward row * rot^T.
void advance(Env& env, const ShadowBatch& batch, const Rotated& rot, int site, bool rightward, int workers) {
  const Eigen::Index width = rightward ? rot[0].cols() : rot[0].rows();
  Env next(env.rows(), width);
  const std::size_t count = batch.count();
  parallel_for(chunk_count(count), workers, [&](std::size_t ch) {
    const std::size_t begin = ch * kSampleChunk, end = std::min(count, begin + kSampleChunk);
    const auto groups = by_code(batch, site, begin, end);
    for (std::size_t code = 0; code < 6; ++code) {
      const auto& rows = groups[code];
      if (rows.empty()) continue;
      const Env part = rightward ? Env(gather(env, rows) * rot[code]) : Env(gather(env, rows) * rot[code].transpose());
      for (std::size_t r = 0; r < rows.size(); ++r) next.row(rows[r]) = part.row(static_cast<Eigen::Index>(r));
    }
  });
  env = std::move(next);
}

struct LocalTerms {
  double log_sum = 0.0;  // sum_j log |a_j|^2 (clamped)
  std::size_t clamped = 0;
  MatrixXcd grad_sum[6];  // sum_j conj(L_j) conj(R_j)^T / conj(a_j), per code
};

// Amplitude terms at `site` given per-sample left rows (B x a) and right rows
// (B x b). Chunks are reduced in order so the result is worker-independent.
LocalTerms local_terms(const Env& left, const Env& right, const Rotated& rot, const ShadowBatch& batch, int site,
                       bool with_gradient, int workers) {
  const std::size_t count = batch.count(), chunks = chunk_count(count);
  std::vector<LocalTerms> parts(chunks);
  parallel_for(chunks, workers, [&](std::size_t ch) {
    const std::size_t begin = ch * kSampleChunk, end = std::min(count, begin + kSampleChunk);
    const auto groups = by_code(batch, site, begin, end);
    LocalTerms& out = parts[ch];
    for (std::size_t code = 0; code < 6; ++code) {
      const auto& rows = groups[code];
      if (with_gradient) out.grad_sum[code] = MatrixXcd::Zero(left.cols(), right.cols());
      if (rows.empty()) continue;
      const Env l = gather(left, rows), r = gather(right, rows);
      const Env t = l * rot[code];
      VectorXcd weight(static_cast<Eigen::Index>(rows.size()));
      for (Eigen::Index j = 0; j < t.rows(); ++j) {
        cplx amp(0.0);
        for (Eigen::Index x = 0; x < t.cols(); ++x) amp += t(j, x) * r(j, x);
        const double mag2 = std::norm(amp);
        if (std::sqrt(mag2) < kAmplitudeFloor) {
          out.log_sum += kLogFloor;
          ++out.clamped;
          weight(j) = 0.0;
        } else {
          out.log_sum += std::log(mag2);
          weight(j) = 1.0 / std::conj(amp);
        }
      }
      if (with_gradient) out.grad_sum[code] = l.conjugate().transpose() * weight.asDiagonal() * r.conjugate();
    }
  });
  LocalTerms total;
  for (std::size_t code = 0; code < 6 && with_gradient; ++code)
    total.grad_sum[code] = MatrixXcd::Zero(left.cols(), right.cols());
  for (const auto& p : parts) {
    total.log_sum += p.log_sum;
    total.clamped += p.clamped;
    if (with_gradient)
      for (std::size_t code = 0; code < 6; ++code) total.grad_sum[code] += p.grad_sum[code];
  }
  return total;
}

DenseTensor assemble_gradient(const LocalTerms& terms, const DenseTensor& norm_env, double norm2, std::size_t count) {
  const std::size_t a = norm_env.dim(0), b = norm_env.dim(2);
  DenseTensor g({a, 2, b});
  const double inv_b = 1.0 / static_cast<double>(count);
  for (int code = 0; code < 6; ++code) {
    const Eigen::Vector2cd& e = basis_eigenvector(record_basis(static_cast<std::uint8_t>(code)), code % 2);
    const MatrixXcd& m = terms.grad_sum[code];
    for (std::size_t x = 0; x < a; ++x)
      for (int s = 0; s < 2; ++s)
        for (std::size_t y = 0; y < b; ++y)
          g(x, s, y) -= inv_b * e(s) * m(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  }
  for (std::size_t x = 0; x < g.size(); ++x) g[x] += norm_env[x] / norm2;
  return g;
}

// Per-sample rows of the chain products left of `site` (B x a_site).
Env left_rows(const std::vector<Rotated>& rot, const ShadowBatch& batch, int site, int workers) {
  Env env = Env::Ones(static_cast<Eigen::Index>(batch.count()), 1);
  for (int l = 0; l < site; ++l) advance(env, batch, rot[static_cast<std::size_t>(l)], l, true, workers);
  return env;
}

// Per-sample rows of the chain products right of `site` (B x a_{site+1}).
Env right_rows(const MPS& phi, const std::vector<Rotated>& rot, const ShadowBatch& batch, int site, int workers) {
  Env env = Env::Ones(static_cast<Eigen::Index>(batch.count()), 1);
  for (int l = phi.size() - 1; l > site; --l) advance(env, batch, rot[static_cast<std::size_t>(l)], l, false, workers);
  return env;
}

// d<phi|phi>/d conj(F_site) for a general gauge.
DenseTensor norm_environment(const MPS& phi, int site) {
  MatrixXcd le = MatrixXcd::Ones(1, 1);
  for (int l = 0; l < site; ++l) {
    const auto& f = phi[l];
    const std::size_t a = f.dim(0), b = f.dim(2);
    MatrixXcd next = MatrixXcd::Zero(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b));
    for (int s = 0; s < 2; ++s) {
      MatrixXcd fs(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      for (std::size_t x = 0; x < a; ++x)
        for (std::size_t y = 0; y < b; ++y) fs(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = f(x, s, y);
      next += fs.adjoint() * le * fs;
    }
    le = std::move(next);
  }
  MatrixXcd re = MatrixXcd::Ones(1, 1);
  for (int l = phi.size() - 1; l > site; --l) {
    const auto& f = phi[l];
    const std::size_t a = f.dim(0), b = f.dim(2);
    MatrixXcd next = MatrixXcd::Zero(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
    for (int s = 0; s < 2; ++s) {
      MatrixXcd fs(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      for (std::size_t x = 0; x < a; ++x)
        for (std::size_t y = 0; y < b; ++y) fs(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = f(x, s, y);
      next += fs * re * fs.adjoint();
    }
    re = std::move(next);
  }
  // le(x, x') = sum conj F(.., x) F(.., x') and re(y', y) = sum F(y', ..) conj F(y, ..),
  // so N(x, s, y) = sum le(x, x') F(x', s, y') re(y', y).
  const auto& f = phi[site];
  const std::size_t a = f.dim(0), b = f.dim(2);
  DenseTensor out({a, 2, b});
  for (int s = 0; s < 2; ++s) {
    MatrixXcd fs(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    for (std::size_t x = 0; x < a; ++x)
      for (std::size_t y = 0; y < b; ++y) fs(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = f(x, s, y);
    const MatrixXcd ns = le * fs * re;
    for (std::size_t x = 0; x < a; ++x)
      for (std::size_t y = 0; y < b; ++y) out(x, s, y) = ns(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  }
  return out;
}

// Moves the orthogonality center from `site` to site + 1.
void shift_right(std::vector<DenseTensor>& c, int site) {
  auto& f = c[static_cast<std::size_t>(site)];
  auto& g = c[static_cast<std::size_t>(site + 1)];
  const std::size_t l = f.dim(0), r = f.dim(2), nr = g.dim(2);
  const MatrixXcd m = f.as_matrix(l * 2, r);
  Eigen::HouseholderQR<MatrixXcd> qr(m);
  const Eigen::Index p = std::min<Eigen::Index>(m.rows(), m.cols());
  const MatrixXcd q = qr.householderQ() * MatrixXcd::Identity(m.rows(), p);
  const MatrixXcd rr = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  f = DenseTensor::from_matrix(q, {l, 2, static_cast<std::size_t>(p)});
  const MatrixXcd next = rr * g.as_matrix(r, 2 * nr);
  g = DenseTensor::from_matrix(next, {static_cast<std::size_t>(p), 2, nr});
}

// Moves the orthogonality center from `site` to site - 1.
void shift_left(std::vector<DenseTensor>& c, int site) {
  auto& f = c[static_cast<std::size_t>(site)];
  auto& g = c[static_cast<std::size_t>(site - 1)];
  const std::size_t l = f.dim(0), r = f.dim(2), pl = g.dim(0);
  const MatrixXcd mh = MatrixXcd(f.as_matrix(l, 2 * r)).adjoint();
  Eigen::HouseholderQR<MatrixXcd> qr(mh);
  const Eigen::Index p = std::min<Eigen::Index>(mh.rows(), mh.cols());
  const MatrixXcd q = qr.householderQ() * MatrixXcd::Identity(mh.rows(), p);
  const MatrixXcd rr = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  f = DenseTensor::from_matrix(q.adjoint(), {static_cast<std::size_t>(p), 2, r});
  const MatrixXcd prev = g.as_matrix(pl * 2, l) * rr.adjoint();
  g = DenseTensor::from_matrix(prev, {pl, 2, static_cast<std::size_t>(p)});
}

double squared_norm(const DenseTensor& f) {
  double s = 0.0;
  for (const auto& v : f.entries()) s += std::norm(v);
  return s;
}

}  // namespace

void MLEConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("MLEConfig: learning_rate must be finite and nonnegative");
  }
  if (bond < 1) throw std::invalid_argument("MLEConfig: bond must be at least 1");
  if (max_sweeps < 0) throw std::invalid_argument("MLEConfig: max_sweeps must be nonnegative");
}

cplx amplitude(const MPS& phi, std::span<const std::uint8_t> record) {
  if (record.size() != static_cast<std::size_t>(phi.size())) throw std::invalid_argument("amplitude: record length mismatch");
  Eigen::RowVectorXcd v = Eigen::RowVectorXcd::Ones(1);
  for (int l = 0; l < phi.size(); ++l) {
    const auto& f = phi[l];
    const std::uint8_t code = record[static_cast<std::size_t>(l)];
    if (code > 5) throw std::invalid_argument("amplitude: record byte out of range");
    const Eigen::Vector2cd& e = basis_eigenvector(record_basis(code), record_bit(code));
    Eigen::RowVectorXcd next = Eigen::RowVectorXcd::Zero(static_cast<Eigen::Index>(f.dim(2)));
    for (std::size_t a = 0; a < f.dim(0); ++a)
      for (std::size_t b = 0; b < f.dim(2); ++b)
        next(static_cast<Eigen::Index>(b)) +=
            v(static_cast<Eigen::Index>(a)) * (std::conj(e(0)) * f(a, 0, b) + std::conj(e(1)) * f(a, 1, b));
    v = std::move(next);
  }
  return v(0);
}

cplx amplitude(const MPS& phi, const ShadowSample& sample) {
  if (sample.bases.size() != sample.bits.size()) throw std::invalid_argument("amplitude: malformed sample");
  std::vector<std::uint8_t> record;
  for (std::size_t l = 0; l < sample.bases.size(); ++l) record.push_back(encode_record(sample.bases[l], sample.bits[l]));
  return amplitude(phi, record);
}

double nll(const MPS& phi, const ShadowBatch& batch, std::size_t* clamped, int workers) {
  check_batch(phi, batch, "nll");
  const auto rot = rotate_all(phi);
  const int last = phi.size() - 1;
  const Env left = left_rows(rot, batch, last, workers);
  const Env right = Env::Ones(static_cast<Eigen::Index>(batch.count()), 1);
  const LocalTerms t = local_terms(left, right, rot[static_cast<std::size_t>(last)], batch, last, false, workers);
  if (clamped) *clamped = t.clamped;
  return -t.log_sum / static_cast<double>(batch.count()) + std::log(phi.norm_squared());
}

DenseTensor nll_gradient(const MPS& phi, const ShadowBatch& batch, int site, std::size_t* clamped, int workers) {
  check_batch(phi, batch, "nll_gradient");
  if (site < 0 || site >= phi.size()) throw std::out_of_range("nll_gradient: site out of range");
  const auto rot = rotate_all(phi);
  const Env left = left_rows(rot, batch, site, workers);
  const Env right = right_rows(phi, rot, batch, site, workers);
  const LocalTerms t = local_terms(left, right, rot[static_cast<std::size_t>(site)], batch, site, true, workers);
  if (clamped) *clamped = t.clamped;
  return assemble_gradient(t, norm_environment(phi, site), phi.norm_squared(), batch.count());
}

TrainResult train(const MPS& phi0, const ShadowBatch& batch, const MLEConfig& cfg) {
  cfg.validate();
  check_batch(phi0, batch, "train");
  const int n = phi0.size();
  const int workers = cfg.workers;
  const auto count = static_cast<Eigen::Index>(batch.count());
  std::vector<DenseTensor> comps = canonicalize(phi0, 0).components();
  std::vector<Rotated> rot;
  for (const auto& f : comps) rot.push_back(rotate(f));

  // envs[l] holds, for the current sweep direction, the per-sample product of
  // the sites on the far side of l: right products in a forward pass, left
  // products in a backward pass.
  std::vector<Env> right(static_cast<std::size_t>(n)), left(static_cast<std::size_t>(n));
  right[static_cast<std::size_t>(n - 1)] = Env::Ones(count, 1);
  for (int l = n - 1; l > 0; --l) {
    right[static_cast<std::size_t>(l - 1)] = right[static_cast<std::size_t>(l)];
    advance(right[static_cast<std::size_t>(l - 1)], batch, rot[static_cast<std::size_t>(l)], l, false, workers);
  }
  left[0] = Env::Ones(count, 1);

  TrainResult result;
  auto update = [&](int sweep, int site) {
    const auto su = static_cast<std::size_t>(site);
    const LocalTerms t = local_terms(left[su], right[su], rot[su], batch, site, true, workers);
    const DenseTensor g = assemble_gradient(t, comps[su], squared_norm(comps[su]), batch.count());
    for (std::size_t x = 0; x < g.size(); ++x) comps[su][x] -= cfg.learning_rate * g[x];
    rot[su] = rotate(comps[su]);
    const LocalTerms after = local_terms(left[su], right[su], rot[su], batch, site, false, workers);
    const double value = -after.log_sum / static_cast<double>(batch.count()) + std::log(squared_norm(comps[su]));
    result.clamped += after.clamped;
    result.trace.push_back({sweep, site, value});
    if (!std::isfinite(value)) {
      throw std::runtime_error("train: loss became non-finite at sweep " + std::to_string(sweep) + ", site " +
                               std::to_string(site) + " after " + std::to_string(result.trace.size()) + " updates");
    }
    return cfg.target_nll && value <= *cfg.target_nll;
  };

  bool done = false;
  for (int sweep = 1; sweep <= cfg.max_sweeps && !done; ++sweep) {
    if (n == 1) {
      done = update(sweep, 0);
    } else {
      for (int i = 0; i + 1 < n && !done; ++i) {
        done = update(sweep, i);
        shift_right(comps, i);
        rot[static_cast<std::size_t>(i)] = rotate(comps[static_cast<std::size_t>(i)]);
        rot[static_cast<std::size_t>(i + 1)] = rotate(comps[static_cast<std::size_t>(i + 1)]);
        left[static_cast<std::size_t>(i + 1)] = left[static_cast<std::size_t>(i)];
        advance(left[static_cast<std::size_t>(i + 1)], batch, rot[static_cast<std::size_t>(i)], i, true, workers);
      }
      // Center is now at site n-1 (or at the site after the stopping update).
      for (int i = n - 1; i > 0 && !done; --i) {
        done = update(sweep, i);
        shift_left(comps, i);
        rot[static_cast<std::size_t>(i)] = rotate(comps[static_cast<std::size_t>(i)]);
        rot[static_cast<std::size_t>(i - 1)] = rotate(comps[static_cast<std::size_t>(i - 1)]);
        right[static_cast<std::size_t>(i - 1)] = right[static_cast<std::size_t>(i)];
        advance(right[static_cast<std::size_t>(i - 1)], batch, rot[static_cast<std::size_t>(i)], i, false, workers);
      }
    }
    result.sweeps = sweep;
  }
  result.reached_target = done;
  result.state = MPS(std::move(comps));
  return result;
}

}  // namespace sketchtomo
