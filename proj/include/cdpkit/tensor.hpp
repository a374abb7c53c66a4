#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cdpkit {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& dims);

/// Dense row-major float tensor of rank 1..4 (last index fastest).
///
/// Convolution kernels are stored as [K, K, C, N], depthwise kernels as
/// [K, K, C] and feature maps as [H, W, C].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims);
  Tensor(Shape dims, std::vector<float> data);

  static Tensor filled(Shape dims, float value);

  const Shape& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t flat) { return data_[flat]; }
  float operator[](std::size_t flat) const { return data_[flat]; }

  float& at(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
  float at(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }
  float& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  float at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  float& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
  }
  float at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
  }

  bool all_finite() const noexcept;
  double frobenius_norm() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape dims_;
  std::vector<float> data_;
};

/// Dense row-major float matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Matrix identity(std::size_t n);
  /// Views a rank-2 tensor as a matrix.
  static Matrix from_tensor(const Tensor& t);
  Tensor to_tensor() const;

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  Matrix transposed() const;
  bool all_finite() const noexcept;
  double frobenius_norm() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Matrix product with double accumulation.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Mode-n matricization. Rows index dims[mode]; columns enumerate the
/// remaining indices in row-major order over the cyclic mode sequence
/// (mode+1, ..., rank-1, 0, ..., mode-1), the last listed mode fastest.
/// For mode 0 this is the plain row-major reshape.
Matrix unfold(const Tensor& t, std::size_t mode);

/// Inverse of unfold: fold(unfold(t, k), k, t.dims()) == t bit for bit.
Tensor fold(const Matrix& m, std::size_t mode, const Shape& dims);

/// Mode-n product: result = fold(m * unfold(t, mode)), with dims[mode]
/// replaced by m.rows().
Tensor mode_multiply(const Tensor& t, const Matrix& m, std::size_t mode);

/// Relative Frobenius distance ||a - b|| / max(||b||, tiny).
double relative_error(std::span<const float> actual, std::span<const float> expected);

}  // namespace cdpkit
