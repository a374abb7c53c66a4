#include "cdpkit/factorize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cdpkit/errors.hpp"
#include "cdpkit/linalg.hpp"

namespace cdpkit {

namespace {

constexpr std::size_t kInMode = 2;
constexpr std::size_t kOutMode = 3;

const Tensor& role(const LayerWeights& w, const char* name) {
  auto it = w.find(name);
  if (it == w.end()) throw WeightMismatch(std::string("missing weight role '") + name + "'");
  return it->second;
}

double kernel_error(const Tensor& approx, const Tensor& reference, double reference_norm) {
  if (reference_norm == 0.0) return approx.frobenius_norm() == 0.0 ? 0.0 : 1.0;
  double diff = 0.0;
  const auto a = approx.data();
  const auto b = reference.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    diff += d * d;
  }
  return std::sqrt(diff) / reference_norm;
}

// --- EVBMF ------------------------------------------------------------------

struct EvbmfProblem {
  double L = 0;  // smaller dimension
  double M = 0;  // larger dimension
  std::vector<double> s2;  // squared singular values, floored away from zero
  double residual = 0;
  double xubar = 0;

  double alpha() const { return L / M; }

  static double tau(double x, double alpha) {
    const double b = x - (1.0 + alpha);
    return 0.5 * (b + std::sqrt(std::max(b * b - 4.0 * alpha, 0.0)));
  }

  // Free energy as a function of the noise variance (up to constants).
  double objective(double sigma2) const {
    const double a = alpha();
    double obj = 0.0;
    for (double v : s2) {
      const double x = v / (M * sigma2);
      if (x > xubar) {
        const double t = tau(x, a);
        obj += x - t + std::log((t + 1.0) / x) + a * std::log(t / a + 1.0);
      } else {
        obj += x - std::log(x);
      }
    }
    const double H = double(s2.size());
    obj += residual / (M * sigma2) + (L - H) * std::log(sigma2);
    return obj;
  }
};

double golden_section(const EvbmfProblem& p, double lo, double hi, double rel_tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = p.objective(c);
  double fd = p.objective(d);
  for (int iter = 0; iter < 500 && (b - a) > rel_tol * 0.5 * (std::abs(a) + std::abs(b)); ++iter) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = p.objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = p.objective(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

Tensor tucker2_reconstruct(const Matrix& proj_in, const Tensor& core, const Matrix& proj_out) {
  if (core.rank() != 4) throw InvalidArgument("tucker core must be [K, K, R1, R2]");
  if (proj_in.cols() != core.dim(kInMode) || proj_out.rows() != core.dim(kOutMode)) {
    throw InvalidArgument("tucker factor shapes disagree with the core");
  }
  auto t = mode_multiply(core, proj_in, kInMode);
  return mode_multiply(t, proj_out.transposed(), kOutMode);
}

TuckerFactors hooi_tucker2(const Tensor& kernel, std::size_t rank_in, std::size_t rank_out,
                           const HooiOptions& options) {
  if (kernel.rank() != 4) throw InvalidArgument("hooi_tucker2: kernel must be [K, K, C, N]");
  const std::size_t C = kernel.dim(kInMode);
  const std::size_t N = kernel.dim(kOutMode);
  if (rank_in < 1 || rank_in > C) {
    throw InvalidArgument("hooi_tucker2: R1=" + std::to_string(rank_in) + " outside [1, " +
                          std::to_string(C) + "]");
  }
  if (rank_out < 1 || rank_out > N) {
    throw InvalidArgument("hooi_tucker2: R2=" + std::to_string(rank_out) + " outside [1, " +
                          std::to_string(N) + "]");
  }
  if (!kernel.all_finite()) throw InvalidArgument("hooi_tucker2: kernel is not finite");

  const double norm = kernel.frobenius_norm();
  Matrix u_in = leading_left_singular_vectors(unfold(kernel, kInMode), rank_in);
  Matrix u_out = leading_left_singular_vectors(unfold(kernel, kOutMode), rank_out);

  TuckerFactors f;
  auto project = [&](const Matrix& in, const Matrix& out) {
    return mode_multiply(mode_multiply(kernel, in.transposed(), kInMode), out.transposed(),
                         kOutMode);
  };
  Tensor core = project(u_in, u_out);
  f.error_history.push_back(
      kernel_error(tucker2_reconstruct(u_in, core, u_out.transposed()), kernel, norm));
  double core_norm = core.frobenius_norm();

  for (int it = 0; it < options.max_iterations; ++it) {
    const Tensor y = mode_multiply(kernel, u_out.transposed(), kOutMode);
    Matrix next_in = leading_left_singular_vectors(unfold(y, kInMode), rank_in);
    const Tensor z = mode_multiply(kernel, next_in.transposed(), kInMode);
    Matrix next_out = leading_left_singular_vectors(unfold(z, kOutMode), rank_out);
    Tensor next_core = mode_multiply(z, next_out.transposed(), kOutMode);
    const double error =
        kernel_error(tucker2_reconstruct(next_in, next_core, next_out.transposed()), kernel, norm);
    // At convergence float rounding can nudge the error up; keep the better iterate.
    if (error > f.error_history.back()) break;
    u_in = std::move(next_in);
    u_out = std::move(next_out);
    core = std::move(next_core);
    f.iterations = it + 1;
    f.error_history.push_back(error);

    const double next_norm = core.frobenius_norm();
    const double change = std::abs(next_norm - core_norm) / std::max(core_norm, 1e-300);
    core_norm = next_norm;
    if (core_norm == 0.0 || change < options.tolerance) break;
  }

  f.proj_in = std::move(u_in);
  f.core = std::move(core);
  f.proj_out = u_out.transposed();
  f.reconstruction_error = f.error_history.back();
  return f;
}

RankEstimate evbmf_rank(const Matrix& input) {
  if (!input.all_finite()) throw InvalidArgument("evbmf_rank: matrix is not finite");
  const Matrix m = input.rows() <= input.cols() ? input : input.transposed();
  SvdOptions opts;
  opts.compute_u = false;
  opts.compute_v = false;
  const auto s = svd(m, opts).s;

  RankEstimate est;
  if (s.empty() || s.front() == 0.0f) return est;

  EvbmfProblem p;
  p.L = double(m.rows());
  p.M = double(m.cols());
  const double alpha = p.alpha();
  const double tauubar = 2.5129 * std::sqrt(alpha);
  p.xubar = (1.0 + tauubar) * (1.0 + alpha / tauubar);
  const double smax2 = double(s.front()) * double(s.front());
  double total = 0.0;
  for (float v : s) {
    const double v2 = double(v) * double(v);
    total += v2;
    p.s2.push_back(std::max(v2, smax2 * 1e-30));
  }

  const auto H = static_cast<long long>(s.size());
  const auto cut = std::min<long long>(
      static_cast<long long>(std::ceil(p.L / (1.0 + alpha))) - 1, H) - 1;
  const auto tail = static_cast<std::size_t>(cut + 1);
  double tail_mean = 0.0;
  for (std::size_t i = tail; i < p.s2.size(); ++i) tail_mean += p.s2[i];
  tail_mean /= double(p.s2.size() - tail);

  const double upper = total / (p.L * p.M);
  double lower = std::max(p.s2[tail] / (p.M * p.xubar), tail_mean / p.M);
  lower = std::max(lower, upper * 1e-12);

  double sigma2 = upper;
  if (lower < upper) {
    // Coarse log-spaced scan to pick the basin, then golden section inside it.
    constexpr int kGrid = 64;
    const double log_lo = std::log(lower);
    const double step = (std::log(upper) - log_lo) / kGrid;
    int best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= kGrid; ++i) {
      const double v = p.objective(std::exp(log_lo + step * i));
      if (v < best_val) {
        best_val = v;
        best = i;
      }
    }
    const double a = std::exp(log_lo + step * std::max(best - 1, 0));
    const double b = std::exp(log_lo + step * std::min(best + 1, kGrid));
    sigma2 = golden_section(p, a, std::min(b, upper), 1e-8);
  }

  const double threshold = std::sqrt(p.M * sigma2 * (1.0 + tauubar) * (1.0 + alpha / tauubar));
  est.noise_variance = sigma2;
  for (float v : s) {
    if (double(v) > threshold) est.retained_singular_values.push_back(v);
  }
  est.rank = est.retained_singular_values.size();
  return est;
}

TuckerFactors decompose_layer(const Tensor& kernel,
                              std::optional<std::pair<std::size_t, std::size_t>> ranks) {
  if (kernel.rank() != 4) throw InvalidArgument("decompose_layer: kernel must be [K, K, C, N]");
  if (ranks) return hooi_tucker2(kernel, ranks->first, ranks->second);
  auto in_est = evbmf_rank(unfold(kernel, kInMode));
  auto out_est = evbmf_rank(unfold(kernel, kOutMode));
  const std::size_t r1 = std::max<std::size_t>(in_est.rank, 1);
  const std::size_t r2 = std::max<std::size_t>(out_est.rank, 1);
  auto f = hooi_tucker2(kernel, r1, r2);
  f.input_rank_estimate = std::move(in_est);
  f.output_rank_estimate = std::move(out_est);
  return f;
}

Tensor merge_depthsep(const Tensor& depthwise, const Tensor& pointwise) {
  if (depthwise.rank() != 3 || pointwise.rank() != 2 || depthwise.dim(0) != depthwise.dim(1)) {
    throw InvalidArgument("merge_depthsep: expected depthwise [K,K,C] and pointwise [C,N]");
  }
  const std::size_t K = depthwise.dim(0);
  const std::size_t C = depthwise.dim(2);
  if (pointwise.dim(0) != C) {
    throw InvalidArgument("merge_depthsep: pointwise has " + std::to_string(pointwise.dim(0)) +
                          " rows for " + std::to_string(C) + " depthwise maps");
  }
  const std::size_t N = pointwise.dim(1);
  Tensor merged({K, K, C, N});
  for (std::size_t k1 = 0; k1 < K; ++k1)
    for (std::size_t k2 = 0; k2 < K; ++k2)
      for (std::size_t i = 0; i < C; ++i)
        for (std::size_t n = 0; n < N; ++n)
          merged.at(k1, k2, i, n) = depthwise.at(k1, k2, i) * pointwise.at(i, n);
  return merged;
}

Tensor merge_depthsep(const LayerSpec& spec, const LayerWeights& weights) {
  if (spec.kind != LayerKind::DepthSep) {
    throw InvalidArgument("merge_depthsep: layer is not depthwise-separable");
  }
  if (spec.width_multiplier != 1) {
    throw UnsupportedConfiguration("merge_depthsep: width multiplier " +
                                   std::to_string(spec.width_multiplier) + " is not supported");
  }
  check_weights(spec, weights);
  return merge_depthsep(role(weights, "depthwise"), role(weights, "pointwise"));
}

namespace {

// sum_j depthwise[k1,k2,c*t+j] * pointwise[c*t+j, n]
Tensor contract_expanded(const Tensor& depthwise, const Tensor& pointwise, std::size_t t) {
  const std::size_t K = depthwise.dim(0);
  const std::size_t maps = depthwise.dim(2);
  const std::size_t C = maps / t;
  const std::size_t N = pointwise.dim(1);
  Tensor merged({K, K, C, N});
  for (std::size_t k1 = 0; k1 < K; ++k1)
    for (std::size_t k2 = 0; k2 < K; ++k2)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t n = 0; n < N; ++n) {
          double acc = 0.0;
          for (std::size_t j = 0; j < t; ++j) {
            const std::size_t m = c * t + j;
            acc += double(depthwise.at(k1, k2, m)) * pointwise.at(m, n);
          }
          merged.at(k1, k2, c, n) = static_cast<float>(acc);
        }
  return merged;
}

void require_linear_junction(const LayerSpec& spec) {
  if (spec.inner_activation != Activation::None) {
    throw UnsupportedConfiguration("layer has an inner activation; no equivalent single kernel");
  }
}

}  // namespace

Tensor equivalent_kernel(const LayerSpec& spec, const LayerWeights& weights) {
  check_weights(spec, weights);
  const std::size_t K = spec.kernel;
  const std::size_t C = spec.in_channels;
  const std::size_t N = spec.out_channels;
  switch (spec.kind) {
    case LayerKind::Standard:
      return role(weights, "kernel");
    case LayerKind::DepthSep:
      require_linear_junction(spec);
      return contract_expanded(role(weights, "depthwise"), role(weights, "pointwise"),
                               spec.width_multiplier);
    case LayerKind::Tucker2:
      return tucker2_reconstruct(Matrix::from_tensor(role(weights, "proj_in")),
                                 role(weights, "core"),
                                 Matrix::from_tensor(role(weights, "proj_out")));
    case LayerKind::Tdw: {
      require_linear_junction(spec);
      const auto product = matmul(Matrix::from_tensor(role(weights, "bottleneck_in")),
                                  Matrix::from_tensor(role(weights, "bottleneck_out")));
      return contract_expanded(role(weights, "depthwise"), product.to_tensor(),
                               spec.width_multiplier);
    }
    case LayerKind::Cdp: {
      require_linear_junction(spec);
      const std::size_t alpha = spec.alpha;
      const Tensor& pw = role(weights, "pointwise");
      Tensor merged({K, K, C, N});
      if (alpha > 0) {
        const Tensor& conv = role(weights, "conv");
        for (std::size_t k1 = 0; k1 < K; ++k1)
          for (std::size_t k2 = 0; k2 < K; ++k2)
            for (std::size_t c = 0; c < alpha; ++c)
              for (std::size_t n = 0; n < N; ++n) {
                double acc = 0.0;
                for (std::size_t m = 0; m < N; ++m) acc += double(conv.at(k1, k2, c, m)) * pw.at(m, n);
                merged.at(k1, k2, c, n) = static_cast<float>(acc);
              }
      }
      if (alpha < C) {
        const Tensor& dw = role(weights, "depthwise");
        for (std::size_t k1 = 0; k1 < K; ++k1)
          for (std::size_t k2 = 0; k2 < K; ++k2)
            for (std::size_t c = alpha; c < C; ++c)
              for (std::size_t n = 0; n < N; ++n)
                merged.at(k1, k2, c, n) = dw.at(k1, k2, c - alpha) * pw.at(N + c - alpha, n);
      }
      return merged;
    }
  }
  throw InvalidArgument("unknown layer kind");
}

BottleneckChoice select_bottleneck_rank(const Matrix& pointwise) {
  BottleneckChoice c;
  c.rank_in = evbmf_rank(pointwise).rank;
  c.rank_out = evbmf_rank(pointwise.transposed()).rank;
  c.rank = std::max<std::size_t>({c.rank_in, c.rank_out, 1});
  const std::uint64_t C = pointwise.rows();
  const std::uint64_t N = pointwise.cols();
  c.compresses = C * N > C * c.rank + c.rank * N;
  return c;
}

std::pair<Matrix, Matrix> split_pointwise(const Matrix& pointwise, std::size_t rank) {
  if (rank == 0) throw InvalidArgument("split_pointwise: rank must be positive");
  const std::size_t C = pointwise.rows();
  const std::size_t N = pointwise.cols();
  const auto d = svd(pointwise);
  const std::size_t keep = std::min(rank, d.s.size());
  Matrix first(C, rank);
  Matrix second(rank, N);
  for (std::size_t r = 0; r < keep; ++r) {
    for (std::size_t i = 0; i < C; ++i) first(i, r) = d.u(i, r) * d.s[r];
    for (std::size_t j = 0; j < N; ++j) second(r, j) = d.v(j, r);
  }
  return {std::move(first), std::move(second)};
}

}  // namespace cdpkit
