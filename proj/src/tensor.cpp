#include "sketchtomo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sketchtomo {

namespace {

template <typename T>
double abs2(const T& v) {
  return std::norm(v);
}
template <>
double abs2<double>(const double& v) {
  return v * v;
}

template <typename T>
T conj_value(const T& v) {
  if constexpr (std::is_same_v<T, cplx>) {
    return std::conj(v);
  } else {
    return v;
  }
}

// Phase that maps v to |v|: conj(v)/|v| for complex, sign for real.
template <typename T>
T unit_phase_inverse(const T& v) {
  double mag = std::sqrt(abs2(v));
  if (mag == 0.0) return T(1);
  if constexpr (std::is_same_v<T, cplx>) {
    return std::conj(v) / mag;
  } else {
    return v > 0 ? 1.0 : -1.0;
  }
}

template <typename T>
void fix_signs(SVDResult<T>& svd) {
  for (Eigen::Index c = 0; c < svd.left.cols(); ++c) {
    Eigen::Index best = 0;
    double best_mag = -1.0;
    for (Eigen::Index r = 0; r < svd.left.rows(); ++r) {
      // Strict improvement by a relative margin picks the first of near ties,
      // keeping the convention stable under roundoff.
      double mag = std::sqrt(abs2(svd.left(r, c)));
      if (mag > best_mag * (1.0 + 1e-12) + 1e-300) {
        best_mag = mag;
        best = r;
      }
    }
    T phase = unit_phase_inverse(svd.left(best, c));
    svd.left.col(c) *= phase;
    svd.right.row(c) *= conj_value(phase);
  }
}

}  // namespace

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw std::invalid_argument("Tensor: shape entries must be >= 1");
  }
  data_.assign(shape_product(shape_), T{});
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> entries)
    : shape_(std::move(shape)), data_(std::move(entries)) {
  for (auto d : shape_) {
    if (d == 0) throw std::invalid_argument("Tensor: shape entries must be >= 1");
  }
  if (data_.size() != shape_product(shape_)) {
    throw std::invalid_argument("Tensor: entry count " + std::to_string(data_.size()) +
                                " does not match shape product " +
                                std::to_string(shape_product(shape_)));
  }
}

template <typename T>
std::size_t Tensor<T>::offset(std::span<const std::size_t> idx) const {
  if (idx.size() != shape_.size()) throw std::out_of_range("Tensor: wrong number of indices");
  std::size_t off = 0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    if (idx[a] >= shape_[a]) throw std::out_of_range("Tensor: index out of range");
    off = off * shape_[a] + idx[a];
  }
  return off;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_product(shape) != data_.size()) {
    throw std::invalid_argument("Tensor::reshaped: size mismatch");
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
Tensor<T> Tensor<T>::permuted(std::span<const std::size_t> axes) const {
  const std::size_t r = rank();
  if (axes.size() != r) throw std::invalid_argument("Tensor::permuted: wrong axis count");
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw std::invalid_argument("Tensor::permuted: not a permutation");
    seen[a] = true;
  }
  Shape new_shape(r);
  for (std::size_t i = 0; i < r; ++i) new_shape[i] = shape_[axes[i]];

  // Strides of the source, read in destination-axis order.
  std::vector<std::size_t> src_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) src_stride[i - 1] = src_stride[i] * shape_[i];
  std::vector<std::size_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) stride[i] = src_stride[axes[i]];

  std::vector<T> out(data_.size());
  std::vector<std::size_t> counter(r, 0);
  std::size_t src = 0;
  for (std::size_t dst = 0; dst < out.size(); ++dst) {
    out[dst] = data_[src];
    for (std::size_t i = r; i-- > 0;) {
      if (++counter[i] < new_shape[i]) {
        src += stride[i];
        break;
      }
      src -= stride[i] * (new_shape[i] - 1);
      counter[i] = 0;
    }
  }
  return Tensor(std::move(new_shape), std::move(out));
}

template <typename T>
Tensor<T> Tensor<T>::conj() const {
  Tensor out = *this;
  for (auto& v : out.data_) v = conj_value(v);
  return out;
}

template <typename T>
double Tensor<T>::frobenius_norm() const {
  double s = 0.0;
  for (const auto& v : data_) s += abs2(v);
  return std::sqrt(s);
}

template <typename T>
Eigen::Map<const RowMatrix<T>> Tensor<T>::as_matrix(std::size_t rows, std::size_t cols) const {
  if (rows * cols != data_.size()) throw std::invalid_argument("Tensor::as_matrix: size mismatch");
  return Eigen::Map<const RowMatrix<T>>(data_.data(), static_cast<Eigen::Index>(rows),
                                        static_cast<Eigen::Index>(cols));
}

template <typename T>
Eigen::Map<RowMatrix<T>> Tensor<T>::as_matrix(std::size_t rows, std::size_t cols) {
  if (rows * cols != data_.size()) throw std::invalid_argument("Tensor::as_matrix: size mismatch");
  return Eigen::Map<RowMatrix<T>>(data_.data(), static_cast<Eigen::Index>(rows),
                                  static_cast<Eigen::Index>(cols));
}

template <typename T>
Tensor<T> Tensor<T>::from_matrix(const Matrix<T>& m, Shape shape) {
  Tensor out(std::move(shape));
  if (out.size() != static_cast<std::size_t>(m.size())) {
    throw std::invalid_argument("Tensor::from_matrix: size mismatch");
  }
  out.as_matrix(m.rows(), m.cols()) = m;
  return out;
}

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
  if (shape_ != other.shape_) throw std::invalid_argument("Tensor +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

template <typename T>
Tensor<T>& Tensor<T>::operator-=(const Tensor& other) {
  if (shape_ != other.shape_) throw std::invalid_argument("Tensor -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

template <typename T>
Tensor<T>& Tensor<T>::operator*=(T scale) {
  for (auto& v : data_) v *= scale;
  return *this;
}

template <typename T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, std::span<const AxisPair> pairs) {
  std::vector<bool> a_used(a.rank(), false), b_used(b.rank(), false);
  std::size_t inner_size = 1;
  for (const auto& [ia, ib] : pairs) {
    if (ia >= a.rank() || ib >= b.rank()) throw std::invalid_argument("contract: axis out of range");
    if (a_used[ia] || b_used[ib]) throw std::invalid_argument("contract: axis paired twice");
    if (a.dim(ia) != b.dim(ib)) {
      throw std::invalid_argument("contract: dimension mismatch on axis pair (" + std::to_string(ia) +
                                  ", " + std::to_string(ib) + "): " + std::to_string(a.dim(ia)) +
                                  " vs " + std::to_string(b.dim(ib)));
    }
    a_used[ia] = b_used[ib] = true;
    inner_size *= a.dim(ia);
  }

  std::vector<std::size_t> a_perm, b_perm;
  Shape out_shape;
  std::size_t a_free = 1, b_free = 1;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (!a_used[i]) {
      a_perm.push_back(i);
      out_shape.push_back(a.dim(i));
      a_free *= a.dim(i);
    }
  }
  for (const auto& p : pairs) a_perm.push_back(p.first);
  for (const auto& p : pairs) b_perm.push_back(p.second);
  for (std::size_t i = 0; i < b.rank(); ++i) {
    if (!b_used[i]) {
      b_perm.push_back(i);
      out_shape.push_back(b.dim(i));
      b_free *= b.dim(i);
    }
  }
  if (out_shape.empty()) out_shape.push_back(1);

  const Tensor<T> ap = a.permuted(a_perm);
  const Tensor<T> bp = b.permuted(b_perm);
  Tensor<T> out(out_shape);
  out.as_matrix(a_free, b_free).noalias() = ap.as_matrix(a_free, inner_size) * bp.as_matrix(inner_size, b_free);
  return out;
}

template <typename T>
T inner(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("inner: shape mismatch");
  T s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += conj_value(a[i]) * b[i];
  return s;
}

template <typename T>
SVDResult<T> thin_svd(const Matrix<T>& m) {
  if (m.size() == 0) throw std::invalid_argument("thin_svd: empty matrix");
  Eigen::BDCSVD<Matrix<T>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SVDResult<T> out{svd.matrixU(), svd.singularValues(), svd.matrixV().adjoint()};
  fix_signs(out);
  return out;
}

template <typename T>
SVDResult<T> truncated_svd(const Matrix<T>& m, std::size_t rank) {
  const auto kmax = static_cast<std::size_t>(std::min(m.rows(), m.cols()));
  if (rank == 0 || rank > kmax) {
    throw std::invalid_argument("truncated_svd: rank " + std::to_string(rank) + " outside [1, " +
                                std::to_string(kmax) + "]");
  }
  SVDResult<T> full = thin_svd(m);
  const auto r = static_cast<Eigen::Index>(rank);
  return SVDResult<T>{full.left.leftCols(r), full.singular_values.head(r), full.right.topRows(r)};
}

template <typename T>
Matrix<T> pseudoinverse(const Matrix<T>& a, double relative_cutoff) {
  SVDResult<T> svd = thin_svd(a);
  const double s1 = svd.singular_values.size() > 0 ? svd.singular_values(0) : 0.0;
  Matrix<T> out = Matrix<T>::Zero(a.cols(), a.rows());
  if (s1 == 0.0) return out;
  for (Eigen::Index i = 0; i < svd.singular_values.size(); ++i) {
    const double s = svd.singular_values(i);
    if (s <= relative_cutoff * s1) break;
    out.noalias() += (svd.right.row(i).adjoint() / s) * svd.left.col(i).adjoint();
  }
  return out;
}

template <typename T>
Matrix<T> least_squares(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("least_squares: a has " + std::to_string(a.cols()) + " columns, b has " +
                                std::to_string(b.cols()));
  }
  return b * pseudoinverse(a);
}

template <typename T>
double pinv_norm(const Matrix<T>& a) {
  SVDResult<T> svd = thin_svd(a);
  const double s1 = svd.singular_values(0);
  double smin = 0.0;
  for (Eigen::Index i = 0; i < svd.singular_values.size(); ++i) {
    if (svd.singular_values(i) > kPinvRelativeCutoff * s1) smin = svd.singular_values(i);
  }
  return smin > 0.0 ? 1.0 / smin : 0.0;
}

#define SKETCHTOMO_INSTANTIATE(T)                                                                   \
  template class Tensor<T>;                                                                         \
  template Tensor<T> contract<T>(const Tensor<T>&, const Tensor<T>&, std::span<const AxisPair>);    \
  template T inner<T>(const Tensor<T>&, const Tensor<T>&);                                          \
  template SVDResult<T> thin_svd<T>(const Matrix<T>&);                                              \
  template SVDResult<T> truncated_svd<T>(const Matrix<T>&, std::size_t);                            \
  template Matrix<T> pseudoinverse<T>(const Matrix<T>&, double);                                    \
  template Matrix<T> least_squares<T>(const Matrix<T>&, const Matrix<T>&);                          \
  template double pinv_norm<T>(const Matrix<T>&);

SKETCHTOMO_INSTANTIATE(double)
SKETCHTOMO_INSTANTIATE(cplx)

#undef SKETCHTOMO_INSTANTIATE

}  // namespace sketchtomo
