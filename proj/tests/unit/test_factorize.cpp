#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "cdpkit/cost.hpp"
#include "cdpkit/errors.hpp"
#include "cdpkit/factorize.hpp"
#include "cdpkit/layers.hpp"
#include "support.hpp"

using namespace cdpkit;
using cdpkit::fixtures::Rng;

namespace {

// Kernel of exact multilinear rank (R1, R2) built from a random core and
// random orthonormal channel factors.
Tensor low_rank_kernel(Rng& rng, std::size_t K, std::size_t C, std::size_t N, std::size_t R1,
                       std::size_t R2) {
  const Tensor core = rng.tensor({K, K, R1, R2});
  return tucker2_reconstruct(rng.orthonormal_columns(C, R1), core,
                             rng.orthonormal_columns(N, R2).transposed());
}

Tensor add_noise(Rng& rng, Tensor t, float sigma) {
  for (auto& v : t.data()) v += rng.normal(sigma);
  return t;
}

Matrix low_rank_plus_noise(Rng& rng, std::size_t rows, std::size_t cols, std::size_t rank,
                           float sigma) {
  Matrix m = matmul(rng.matrix(rows, rank), rng.matrix(rank, cols));
  for (auto& v : m.data()) v += rng.normal(sigma);
  return m;
}

double orthonormality_defect(const Matrix& q) {
  double worst = 0.0;
  for (std::size_t i = 0; i < q.cols(); ++i)
    for (std::size_t j = 0; j < q.cols(); ++j) {
      double dot = 0.0;
      for (std::size_t r = 0; r < q.rows(); ++r) dot += double(q(r, i)) * q(r, j);
      worst = std::max(worst, std::fabs(dot - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

LayerSpec depthsep_spec(std::size_t K, std::size_t C, std::size_t N, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::DepthSep;
  s.kernel = K;
  s.in_channels = C;
  s.out_channels = N;
  s.stride = stride;
  s.padding = K / 2;
  return s;
}

}  // namespace

TEST(HooiTest, ExactRankKernelIsRecovered) {
  Rng rng(1);
  const auto kernel = low_rank_kernel(rng, 3, 16, 20, 5, 7);
  const auto f = hooi_tucker2(kernel, 5, 7);
  EXPECT_LE(f.reconstruction_error, 1e-5);
  EXPECT_EQ(f.proj_in.rows(), 16u);
  EXPECT_EQ(f.rank_in(), 5u);
  EXPECT_EQ(f.rank_out(), 7u);
  EXPECT_EQ(f.proj_out.cols(), 20u);
  EXPECT_EQ(f.core.dims(), (Shape{3, 3, 5, 7}));
  EXPECT_LE(orthonormality_defect(f.proj_in), 1e-4);
  EXPECT_LE(orthonormality_defect(f.proj_out.transposed()), 1e-4);
  const auto rebuilt = tucker2_reconstruct(f);
  EXPECT_NEAR(relative_error(rebuilt.data(), kernel.data()), f.reconstruction_error, 1e-6);
}

TEST(HooiTest, FullRankIsExact) {
  Rng rng(2);
  const Tensor kernel = rng.tensor({3, 3, 6, 9});
  EXPECT_LE(hooi_tucker2(kernel, 6, 9).reconstruction_error, 1e-5);
}

TEST(HooiTest, ZeroKernelGivesZeroCore) {
  const auto f = hooi_tucker2(Tensor({3, 3, 4, 5}), 2, 3);
  EXPECT_EQ(f.reconstruction_error, 0.0);
  for (float v : f.core.data()) EXPECT_EQ(v, 0.0f);
}

TEST(HooiTest, RankOutOfRangeThrows) {
  const Tensor kernel({3, 3, 4, 5});
  EXPECT_THROW(hooi_tucker2(kernel, 0, 2), InvalidArgument);
  EXPECT_THROW(hooi_tucker2(kernel, 5, 2), InvalidArgument);
  EXPECT_THROW(hooi_tucker2(kernel, 2, 6), InvalidArgument);
  EXPECT_THROW(hooi_tucker2(Tensor({3, 3, 4}), 2, 2), InvalidArgument);
}

TEST(HooiTest, ErrorIsMonotoneAcrossIterations) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t K = rng.integer(1, 3), C = rng.integer(2, 24), N = rng.integer(2, 24);
    const Tensor kernel = rng.tensor({K, K, C, N});
    const auto f = hooi_tucker2(kernel, rng.integer(1, C), rng.integer(1, N));
    ASSERT_FALSE(f.error_history.empty());
    for (std::size_t i = 1; i < f.error_history.size(); ++i) {
      EXPECT_LE(f.error_history[i], f.error_history[i - 1] + 1e-9) << trial << " it " << i;
    }
    EXPECT_DOUBLE_EQ(f.error_history.back(), f.reconstruction_error);
  }
}

TEST(HooiTest, LargerRankNeverHurts) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor kernel = rng.tensor({3, 3, 12, 10});
    const std::size_t r1 = rng.integer(1, 11), r2 = rng.integer(1, 10);
    const double base = hooi_tucker2(kernel, r1, r2).reconstruction_error;
    EXPECT_LE(hooi_tucker2(kernel, r1 + 1, r2).reconstruction_error, base + 1e-6);
  }
}

TEST(EvbmfTest, ZeroMatrixHasRankZero) {
  const auto r = evbmf_rank(Matrix(10, 20));
  EXPECT_EQ(r.rank, 0u);
  EXPECT_TRUE(r.retained_singular_values.empty());
}

TEST(EvbmfTest, RecoversPlantedRank) {
  for (std::size_t rank : {1, 3, 5, 10}) {
    int hits = 0;
    for (int seed = 0; seed < 20; ++seed) {
      Rng rng(1000 * rank + seed);
      const auto r = evbmf_rank(low_rank_plus_noise(rng, 100, 200, rank, 0.01f));
      if (r.rank == rank) ++hits;
      EXPECT_LE(r.rank, 100u);
      EXPECT_GT(r.noise_variance, 0.0);
    }
    EXPECT_GE(hits, 19) << "rank " << rank;
  }
}

TEST(EvbmfTest, NoiseVarianceTracksTruth) {
  Rng rng(5);
  const auto r = evbmf_rank(low_rank_plus_noise(rng, 100, 200, 5, 0.01f));
  EXPECT_NEAR(std::sqrt(r.noise_variance), 0.01, 0.002);
  ASSERT_EQ(r.retained_singular_values.size(), r.rank);
}

TEST(EvbmfTest, IdentityCharacterization) {
  const auto r = evbmf_rank(Matrix::identity(50));
  EXPECT_EQ(r.rank, 0u);
}

TEST(EvbmfTest, TransposeInvariant) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = low_rank_plus_noise(rng, rng.integer(5, 40), rng.integer(5, 40),
                                       rng.integer(1, 4), 0.05f);
    EXPECT_EQ(evbmf_rank(m).rank, evbmf_rank(m.transposed()).rank);
  }
}

TEST(DecomposeLayerTest, ExplicitFullRankIsExact) {
  Rng rng(7);
  const Tensor kernel = rng.tensor({3, 3, 5, 7});
  const auto f = decompose_layer(kernel, std::make_pair<std::size_t, std::size_t>(5, 7));
  EXPECT_LE(f.reconstruction_error, 1e-5);
  EXPECT_FALSE(f.input_rank_estimate.has_value());
}

TEST(DecomposeLayerTest, EstimatesPlantedRanks) {
  Rng rng(8);
  const auto clean = low_rank_kernel(rng, 3, 32, 48, 4, 6);
  const auto kernel = add_noise(rng, clean, 1e-3f);
  const auto f = decompose_layer(kernel);
  EXPECT_EQ(f.rank_in(), 4u);
  EXPECT_EQ(f.rank_out(), 6u);
  ASSERT_TRUE(f.input_rank_estimate && f.output_rank_estimate);
  EXPECT_EQ(f.input_rank_estimate->rank, 4u);
  const double noise = 1e-3 * std::sqrt(double(kernel.size())) / clean.frobenius_norm();
  EXPECT_LE(f.reconstruction_error, noise);
}

TEST(DecomposeLayerTest, NoiseOnlyKernelClampsToOne) {
  Rng rng(9);
  Tensor kernel({3, 3, 4, 4});
  const auto f = decompose_layer(add_noise(rng, kernel, 1e-3f));
  EXPECT_GE(f.rank_in(), 1u);
  EXPECT_GE(f.rank_out(), 1u);
}

TEST(DecomposeLayerTest, L2NetLayerSevenShape) {
  Rng rng(10);
  const Tensor kernel = rng.tensor({8, 8, 128, 128}, 0.01f);
  const auto start = std::chrono::steady_clock::now();
  const auto f = decompose_layer(kernel, std::make_pair<std::size_t, std::size_t>(64, 64));
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 30.0);
  EXPECT_EQ(f.proj_in.rows(), 128u);
  EXPECT_EQ(f.proj_in.cols(), 64u);
  EXPECT_EQ(f.core.dims(), (Shape{8, 8, 64, 64}));
  EXPECT_EQ(f.proj_out.rows(), 64u);
  EXPECT_EQ(f.proj_out.cols(), 128u);
}

TEST(MergeTest, SingleChannelScalesFilter) {
  Rng rng(11);
  const Tensor dw = rng.tensor({3, 3, 1});
  const Tensor pw({1, 3}, {2, -1, 0.5f});
  const auto merged = merge_depthsep(dw, pw);
  ASSERT_EQ(merged.dims(), (Shape{3, 3, 1, 3}));
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t n = 0; n < 3; ++n) EXPECT_EQ(merged.at(a, b, 0, n), dw.at(a, b, 0) * pw.at(0, n));
}

TEST(MergeTest, IdentityPointwisePlacesFiltersOnDiagonal) {
  Rng rng(12);
  const Tensor dw = rng.tensor({3, 3, 4});
  const auto merged = merge_depthsep(dw, Matrix::identity(4).to_tensor());
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t n = 0; n < 4; ++n)
          EXPECT_EQ(merged.at(a, b, i, n), i == n ? dw.at(a, b, i) : 0.0f);
}

TEST(MergeTest, WidthMultiplierIsUnsupported) {
  auto spec = depthsep_spec(3, 4, 4, 1);
  spec.width_multiplier = 2;
  EXPECT_THROW(merge_depthsep(spec, zero_weights(spec)), UnsupportedConfiguration);
  EXPECT_THROW(merge_depthsep(Tensor({3, 3, 4}), Tensor({5, 4})), InvalidArgument);
}

TEST(MergeTest, ForwardEquivalenceOverSeededConfigurations) {
  Rng rng(13);
  int cases = 0;
  for (std::size_t K : {1, 3, 8})
    for (std::size_t C : {1, 4, 32})
      for (std::size_t N : {1, 8, 64})
        for (std::size_t stride : {1, 2})
          for (int rep = 0; rep < 2; ++rep) {
            const auto spec = depthsep_spec(K, C, N, stride);
            LayerWeights w{{"depthwise", rng.tensor({K, K, C})}, {"pointwise", rng.tensor({C, N})}};
            const std::size_t extent = K + rng.integer(0, 6);
            const auto x = fixtures::random_map(rng, extent, extent + 1, C);
            LayerSpec conv = spec;
            conv.kind = LayerKind::Standard;
            const auto merged = conv2d_forward(x, conv, {{"kernel", merge_depthsep(spec, w)}});
            const auto ds = depthsep_forward(x, spec, w);
            EXPECT_LE(fixtures::max_relative_error(merged.tensor(), ds.tensor()), 1e-4)
                << K << " " << C << " " << N << " " << stride;
            ++cases;
          }
  EXPECT_GE(cases, 100);
}

TEST(EquivalentKernelTest, EveryKindMatchesItsForward) {
  Rng rng(14);
  for (auto kind : {LayerKind::Standard, LayerKind::DepthSep, LayerKind::Tucker2, LayerKind::Tdw,
                    LayerKind::Cdp}) {
    for (int trial = 0; trial < 10; ++trial) {
      auto c = fixtures::small_case(rng, kind);
      c.spec.inner_activation = Activation::None;
      if (c.input.height() + 2 * c.spec.padding < c.spec.kernel) continue;
      LayerSpec conv = c.spec;
      conv.kind = LayerKind::Standard;
      const auto ref =
          conv2d_forward(c.input, conv, {{"kernel", equivalent_kernel(c.spec, c.weights)}});
      EXPECT_LE(fixtures::max_relative_error(layer_forward(c.input, c.spec, c.weights).tensor(),
                                            ref.tensor()),
                1e-4)
          << to_string(kind);
    }
  }
}

TEST(EquivalentKernelTest, InnerActivationIsUnsupported) {
  auto spec = depthsep_spec(3, 4, 4, 1);
  spec.inner_activation = Activation::ReLU;
  EXPECT_THROW(equivalent_kernel(spec, zero_weights(spec)), UnsupportedConfiguration);
}

TEST(BottleneckTest, RankOneOuterProduct) {
  Rng rng(15);
  Matrix m = matmul(rng.matrix(24, 1), rng.matrix(1, 40));
  for (auto& v : m.data()) v += rng.normal(1e-4f);
  const auto choice = select_bottleneck_rank(m);
  EXPECT_EQ(choice.rank, 1u);
  EXPECT_TRUE(choice.compresses);
}

TEST(BottleneckTest, ZeroMatrixClampsToOne) {
  const auto choice = select_bottleneck_rank(Matrix(8, 16));
  EXPECT_EQ(choice.rank, 1u);
  EXPECT_EQ(choice.rank_in, 0u);
  EXPECT_EQ(choice.rank_out, 0u);
  EXPECT_TRUE(choice.compresses);
}

TEST(BottleneckTest, TransposeInvariant) {
  Rng rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = low_rank_plus_noise(rng, rng.integer(4, 48), rng.integer(4, 48),
                                       rng.integer(1, 4), 0.02f);
    EXPECT_EQ(select_bottleneck_rank(m).rank, select_bottleneck_rank(m.transposed()).rank);
  }
}

TEST(BottleneckTest, L2NetLayerFiveEmbeddingCompresses) {
  EXPECT_TRUE(bottleneck_compresses(64, 128, 33));
  EXPECT_EQ(64u * 33u + 33u * 128u, 6336u);
  EXPECT_FALSE(bottleneck_compresses(64, 128, 64));
}

TEST(SplitPointwiseTest, FullRankReproducesMatrix) {
  Rng rng(17);
  const Matrix m = rng.matrix(12, 7);
  const auto [a, b] = split_pointwise(m, 7);
  EXPECT_LE(relative_error(matmul(a, b).data(), m.data()), 1e-5);
  const auto [pa, pb] = split_pointwise(m, 10);
  EXPECT_EQ(pa.cols(), 10u);
  EXPECT_EQ(pb.rows(), 10u);
  EXPECT_LE(relative_error(matmul(pa, pb).data(), m.data()), 1e-5);
}
