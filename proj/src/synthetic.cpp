#include "cdpkit/synthetic.hpp"

#include <random>

#include "cdpkit/errors.hpp"
#include "cdpkit/factorize.hpp"
#include "cdpkit/linalg.hpp"

namespace cdpkit {

namespace {

Matrix normal_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = dist(rng);
  return m;
}

}  // namespace

Tensor synthetic_low_rank_kernel(std::size_t K, std::size_t C, std::size_t N, std::size_t R1,
                                 std::size_t R2, std::uint64_t seed) {
  if (K == 0 || R1 == 0 || R2 == 0 || R1 > C || R2 > N) {
    throw InvalidArgument("synthetic_low_rank_kernel: need 1 <= R1 <= C and 1 <= R2 <= N");
  }
  std::mt19937_64 rng(seed);
  const Matrix u = leading_left_singular_vectors(normal_matrix(rng, C, R1), R1);
  const Matrix v = leading_left_singular_vectors(normal_matrix(rng, N, R2), R2);
  Tensor core({K, K, R1, R2});
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (auto& x : core.data()) x = dist(rng);
  return tucker2_reconstruct(u, core, v.transposed());
}

Matrix synthetic_low_rank_matrix(std::size_t rows, std::size_t cols, std::size_t rank,
                                 double sigma, std::uint64_t seed) {
  if (rows == 0 || cols == 0 || sigma < 0.0) {
    throw InvalidArgument("synthetic_low_rank_matrix: empty shape or negative sigma");
  }
  std::mt19937_64 rng(seed);
  Matrix m(rows, cols);
  if (rank > 0) m = matmul(normal_matrix(rng, rows, rank), normal_matrix(rng, rank, cols));
  if (sigma > 0.0) {
    std::normal_distribution<float> noise(0.0f, float(sigma));
    for (auto& v : m.data()) v += noise(rng);
  }
  return m;
}

}  // namespace cdpkit
