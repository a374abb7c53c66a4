#include "cdpkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "cdpkit/errors.hpp"

namespace cdpkit {

namespace {

void check_dims(const Shape& dims) {
  if (dims.empty() || dims.size() > 4) {
    throw InvalidArgument("tensor rank must be 1..4, got " + std::to_string(dims.size()));
  }
  for (auto d : dims) {
    if (d == 0) throw InvalidArgument("tensor dimensions must be positive");
  }
}

// Cyclic ordering of the non-row modes used by unfold/fold.
std::vector<std::size_t> column_modes(std::size_t rank, std::size_t mode) {
  std::vector<std::size_t> modes;
  for (std::size_t k = 1; k < rank; ++k) modes.push_back((mode + k) % rank);
  return modes;
}

// Maps every flat tensor offset to its (row, col) in the mode unfolding.
template <typename Fn>
void for_each_unfolded(const Shape& dims, std::size_t mode, Fn&& fn) {
  const std::size_t rank = dims.size();
  const auto modes = column_modes(rank, mode);
  // Column stride contributed by each tensor axis.
  std::vector<std::size_t> col_stride(rank, 0);
  std::size_t stride = 1;
  for (auto it = modes.rbegin(); it != modes.rend(); ++it) {
    col_stride[*it] = stride;
    stride *= dims[*it];
  }
  std::vector<std::size_t> idx(rank, 0);
  const std::size_t total = shape_size(dims);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t col = 0;
    for (std::size_t a = 0; a < rank; ++a) col += idx[a] * col_stride[a];
    fn(flat, idx[mode], col);
    for (std::size_t a = rank; a-- > 0;) {
      if (++idx[a] < dims[a]) break;
      idx[a] = 0;
    }
  }
}

}  // namespace

std::size_t shape_size(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(shape_size(dims_), 0.0f);
}

Tensor::Tensor(Shape dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (shape_size(dims_) != data_.size()) {
    throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape product " +
                          std::to_string(shape_size(dims_)));
  }
}

Tensor Tensor::filled(Shape dims, float value) {
  Tensor t(std::move(dims));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::frobenius_norm() const noexcept {
  double acc = 0.0;
  for (float v : data_) acc += double(v) * double(v);
  return std::sqrt(acc);
}

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {
  if (rows == 0 || cols == 0) throw InvalidArgument("matrix dimensions must be positive");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) throw InvalidArgument("matrix dimensions must be positive");
  if (rows * cols != data_.size()) {
    throw InvalidArgument("matrix data length does not match rows*cols");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

Matrix Matrix::from_tensor(const Tensor& t) {
  if (t.rank() != 2) throw InvalidArgument("expected a rank-2 tensor");
  return Matrix(t.dim(0), t.dim(1), t.values());
}

Tensor Matrix::to_tensor() const { return Tensor({rows_, cols_}, data_); }

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Matrix::frobenius_norm() const noexcept {
  double acc = 0.0;
  for (float v : data_) acc += double(v) * double(v);
  return std::sqrt(acc);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw InvalidArgument("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                          " vs " + std::to_string(b.rows()) + ")");
  }
  Matrix out(a.rows(), b.cols());
  std::vector<double> row(b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) row[j] += aik * b(k, j);
    }
    for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) = static_cast<float>(row[j]);
  }
  return out;
}

Matrix unfold(const Tensor& t, std::size_t mode) {
  if (mode >= t.rank()) {
    throw InvalidArgument("unfold: mode " + std::to_string(mode) + " out of range for rank " +
                          std::to_string(t.rank()));
  }
  const std::size_t rows = t.dim(mode);
  Matrix m(rows, t.size() / rows);
  const auto src = t.data();
  for_each_unfolded(t.dims(), mode, [&](std::size_t flat, std::size_t r, std::size_t c) {
    m(r, c) = src[flat];
  });
  return m;
}

Tensor fold(const Matrix& m, std::size_t mode, const Shape& dims) {
  check_dims(dims);
  if (mode >= dims.size()) throw InvalidArgument("fold: mode out of range");
  if (m.rows() != dims[mode] || m.rows() * m.cols() != shape_size(dims)) {
    throw InvalidArgument("fold: matrix shape " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + " inconsistent with target dims");
  }
  Tensor t(dims);
  auto dst = t.data();
  for_each_unfolded(dims, mode, [&](std::size_t flat, std::size_t r, std::size_t c) {
    dst[flat] = m(r, c);
  });
  return t;
}

Tensor mode_multiply(const Tensor& t, const Matrix& m, std::size_t mode) {
  if (mode >= t.rank()) throw InvalidArgument("mode_multiply: mode out of range");
  if (m.cols() != t.dim(mode)) {
    throw InvalidArgument("mode_multiply: matrix has " + std::to_string(m.cols()) +
                          " columns, tensor mode " + std::to_string(mode) + " has size " +
                          std::to_string(t.dim(mode)));
  }
  Shape out_dims = t.dims();
  out_dims[mode] = m.rows();
  return fold(matmul(m, unfold(t, mode)), mode, out_dims);
}

double relative_error(std::span<const float> actual, std::span<const float> expected) {
  if (actual.size() != expected.size()) {
    throw InvalidArgument("relative_error: length mismatch");
  }
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = double(actual[i]) - double(expected[i]);
    diff += d * d;
    ref += double(expected[i]) * double(expected[i]);
  }
  if (!std::isfinite(diff)) return std::numeric_limits<double>::infinity();
  if (ref == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(diff / ref);
}

}  // namespace cdpkit
