#pragma once

// Dense row-major tensors and the handful of linear-algebra kernels the
// tomography pipeline is built from.

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sketchtomo {

using cplx = std::complex<double>;

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixXd = Matrix<double>;
using MatrixXcd = Matrix<cplx>;
using VectorXd = Eigen::VectorXd;
using VectorXcd = Eigen::VectorXcd;

using Shape = std::vector<std::size_t>;

/// Row-major dense tensor. Every axis has length >= 1.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> entries);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& entries() const noexcept { return data_; }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  template <typename... Idx>
  T& operator()(Idx... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Idx>
  const T& operator()(Idx... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  T& at(std::span<const std::size_t> idx) { return data_[offset(idx)]; }
  const T& at(std::span<const std::size_t> idx) const { return data_[offset(idx)]; }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    return offset(std::span<const std::size_t>(idx.begin(), idx.size()));
  }
  std::size_t offset(std::span<const std::size_t> idx) const;

  Tensor reshaped(Shape shape) const;
  Tensor permuted(std::span<const std::size_t> axes) const;
  Tensor permuted(std::initializer_list<std::size_t> axes) const {
    return permuted(std::span<const std::size_t>(axes.begin(), axes.size()));
  }
  Tensor conj() const;

  double frobenius_norm() const;

  /// View as a (rows x cols) row-major matrix; rows*cols must equal size().
  Eigen::Map<const RowMatrix<T>> as_matrix(std::size_t rows, std::size_t cols) const;
  Eigen::Map<RowMatrix<T>> as_matrix(std::size_t rows, std::size_t cols);

  static Tensor from_matrix(const Matrix<T>& m, Shape shape);

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(T scale);

 private:
  Shape shape_;
  std::vector<T> data_;
};

using DenseTensor = Tensor<cplx>;
using RealTensor = Tensor<double>;

template <typename T>
Tensor<T> operator+(Tensor<T> a, const Tensor<T>& b) {
  a += b;
  return a;
}
template <typename T>
Tensor<T> operator-(Tensor<T> a, const Tensor<T>& b) {
  a -= b;
  return a;
}
template <typename T>
Tensor<T> operator*(T s, Tensor<T> a) {
  a *= s;
  return a;
}

std::size_t shape_product(const Shape& shape);

using AxisPair = std::pair<std::size_t, std::size_t>;

/// tensordot: sum over each (axis of a, axis of b) pair. The result carries
/// the unpaired axes of `a` followed by the unpaired axes of `b`.
/// Throws std::invalid_argument on a length mismatch or repeated axis.
template <typename T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, std::span<const AxisPair> pairs);

template <typename T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, std::initializer_list<AxisPair> pairs) {
  return contract(a, b, std::span<const AxisPair>(pairs.begin(), pairs.size()));
}

/// Full contraction <a, b> = sum conj(a) * b (conjugation only for complex).
template <typename T>
T inner(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
struct SVDResult {
  Matrix<T> left;              // rows x k, orthonormal columns
  VectorXd singular_values;    // k, nonincreasing
  Matrix<T> right;             // k x cols, orthonormal rows

  Matrix<T> reconstruct() const { return left * singular_values.asDiagonal() * right; }
};

/// Full thin SVD with the same sign convention as truncated_svd.
template <typename T>
SVDResult<T> thin_svd(const Matrix<T>& m);

/// Best rank-`rank` approximation in Frobenius norm. Each left column is
/// rotated so its largest-magnitude entry is real and positive.
template <typename T>
SVDResult<T> truncated_svd(const Matrix<T>& m, std::size_t rank);

constexpr double kPinvRelativeCutoff = 1e-12;

/// Moore-Penrose pseudoinverse with singular values below cutoff*s1 dropped.
template <typename T>
Matrix<T> pseudoinverse(const Matrix<T>& a, double relative_cutoff = kPinvRelativeCutoff);

/// Minimum-norm X minimizing ||X a - b||_F.
template <typename T>
Matrix<T> least_squares(const Matrix<T>& a, const Matrix<T>& b);

/// Spectral norm of the pseudoinverse, i.e. 1 / smallest nonzero singular value.
template <typename T>
double pinv_norm(const Matrix<T>& a);

}  // namespace sketchtomo
