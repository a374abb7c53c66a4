#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "cdpkit/layers.hpp"
#include "cdpkit/tensor.hpp"

namespace cdpkit {

struct RankEstimate {
  std::size_t rank = 0;
  double noise_variance = 0.0;
  std::vector<float> retained_singular_values;
};

/// Tucker-2 factors of a [K, K, C, N] kernel:
///   kernel[k1,k2,c,n] ~= sum core[k1,k2,r1,r2] * proj_in[c,r1] * proj_out[r2,n]
struct TuckerFactors {
  Matrix proj_in;   ///< C x R1, orthonormal columns
  Tensor core;      ///< K x K x R1 x R2
  Matrix proj_out;  ///< R2 x N, orthonormal rows
  double reconstruction_error = 0.0;  ///< relative Frobenius
  std::vector<double> error_history;  ///< after initialisation, then per iteration
  int iterations = 0;
  /// Set by decompose_layer when the ranks came from EVBMF.
  std::optional<RankEstimate> input_rank_estimate;
  std::optional<RankEstimate> output_rank_estimate;

  std::size_t rank_in() const { return proj_in.cols(); }
  std::size_t rank_out() const { return proj_out.rows(); }
};

struct HooiOptions {
  double tolerance = 1e-6;  ///< relative change of the core norm
  int max_iterations = 100;
};

/// Tucker-2 over the channel modes by higher-order orthogonal iteration,
/// started from the truncated HOSVD. Spatial modes are left intact.
TuckerFactors hooi_tucker2(const Tensor& kernel, std::size_t rank_in, std::size_t rank_out,
                           const HooiOptions& options = {});

/// Rebuilds the full [K, K, C, N] kernel from Tucker-2 factors.
Tensor tucker2_reconstruct(const Matrix& proj_in, const Tensor& core, const Matrix& proj_out);
inline Tensor tucker2_reconstruct(const TuckerFactors& f) {
  return tucker2_reconstruct(f.proj_in, f.core, f.proj_out);
}

/// Empirical VBMF rank of a matrix: the noise variance is chosen by a
/// bracketed golden-section search of the EVBMF free energy, and singular
/// values above the analytic threshold are retained. All-zero input gives 0.
RankEstimate evbmf_rank(const Matrix& m);

/// Tucker-2 decomposition of one conv kernel. Without explicit ranks, R1 is
/// the EVBMF rank of the input-channel unfolding and R2 that of the
/// output-channel unfolding, each clamped to at least 1.
TuckerFactors decompose_layer(const Tensor& kernel,
                              std::optional<std::pair<std::size_t, std::size_t>> ranks = {});

/// Contracts a t=1 depthwise stage and its pointwise stage into one kernel:
/// merged[k1,k2,i,n] = depthwise[k1,k2,i] * pointwise[i,n].
Tensor merge_depthsep(const Tensor& depthwise, const Tensor& pointwise);
/// Same, from a DepthSep layer. Throws UnsupportedConfiguration when t != 1.
Tensor merge_depthsep(const LayerSpec& spec, const LayerWeights& weights);

/// Full [K, K, C, N] kernel equivalent to a layer whose internal junction is
/// linear. Covers every kind; DepthSep/Tdw with t > 1 sum over the t maps of
/// each input channel. Throws UnsupportedConfiguration when the layer has an
/// inner activation.
Tensor equivalent_kernel(const LayerSpec& spec, const LayerWeights& weights);

struct BottleneckChoice {
  std::size_t rank = 1;      ///< max(rank_in, rank_out), at least 1
  std::size_t rank_in = 0;   ///< EVBMF rank of the pointwise matrix
  std::size_t rank_out = 0;  ///< EVBMF rank of its transpose
  bool compresses = false;   ///< C*N > C*R + R*N
};

/// Bottleneck depth for a C x N pointwise kernel.
BottleneckChoice select_bottleneck_rank(const Matrix& pointwise);

/// Splits a C x N pointwise matrix into C x R and R x N factors by truncated
/// SVD (singular values folded into the first factor). Ranks above min(C, N)
/// are padded with zero columns/rows.
std::pair<Matrix, Matrix> split_pointwise(const Matrix& pointwise, std::size_t rank);

}  // namespace cdpkit
