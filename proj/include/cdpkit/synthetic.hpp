#pragma once

#include <cstddef>
#include <cstdint>

#include "cdpkit/tensor.hpp"

namespace cdpkit {

/// [K, K, C, N] kernel of exact multilinear rank (R1, R2) over the channel
/// modes: orthonormal channel factors around a standard-normal core.
Tensor synthetic_low_rank_kernel(std::size_t K, std::size_t C, std::size_t N, std::size_t R1,
                                 std::size_t R2, std::uint64_t seed);

/// rows x cols product of two standard-normal factors of inner size `rank`,
/// plus i.i.d. N(0, sigma^2) noise. Rank 0 gives pure noise.
Matrix synthetic_low_rank_matrix(std::size_t rows, std::size_t cols, std::size_t rank,
                                 double sigma, std::uint64_t seed);

}  // namespace cdpkit
