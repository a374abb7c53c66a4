#pragma once

#include <cstddef>
#include <vector>

#include "cdpkit/tensor.hpp"

namespace cdpkit {

struct SvdOptions {
  bool compute_u = true;
  bool compute_v = true;
  int max_sweeps = 60;
  double tolerance = 1e-10;  ///< relative off-diagonal threshold for a rotation
};

/// Thin SVD: m = u * diag(s) * v^T with k = min(rows, cols) columns in u and v.
/// Singular values are non-negative and sorted non-increasing. Columns of u
/// belonging to zero singular values are completed to an orthonormal set.
struct SvdResult {
  Matrix u;               ///< rows x k (empty when not requested)
  std::vector<float> s;   ///< k values
  Matrix v;               ///< cols x k (empty when not requested)
  int sweeps = 0;
};

/// One-sided Jacobi SVD, computed in double precision. Tall inputs are first
/// reduced with a Householder QR so the Jacobi sweeps run on a square factor.
/// Throws InvalidArgument on non-finite input.
SvdResult svd(const Matrix& m, const SvdOptions& options = {});

/// Leading `count` left singular vectors of m as a rows x count matrix.
Matrix leading_left_singular_vectors(const Matrix& m, std::size_t count);

}  // namespace cdpkit
