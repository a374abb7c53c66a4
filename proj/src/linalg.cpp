#include "cdpkit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "cdpkit/errors.hpp"

namespace cdpkit {

namespace {

// Column-major double matrix; each column is contiguous.
struct Columns {
  std::size_t rows = 0;
  std::vector<std::vector<double>> col;

  Columns(std::size_t r, std::size_t c) : rows(r), col(c, std::vector<double>(r, 0.0)) {}
  std::size_t cols() const { return col.size(); }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Householder QR of a tall matrix. Keeps the reflectors so Q can be applied later.
struct HouseholderQr {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<std::vector<double>> reflectors;  // reflector k acts on rows k..m-1
  std::vector<double> betas;

  explicit HouseholderQr(Columns a) : m(a.rows), n(a.cols()), r_(n, n) {
    reflectors.resize(n);
    betas.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      auto& x = a.col[k];
      double norm = 0.0;
      for (std::size_t i = k; i < m; ++i) norm += x[i] * x[i];
      norm = std::sqrt(norm);
      std::vector<double> v(x.begin() + static_cast<std::ptrdiff_t>(k), x.end());
      if (norm == 0.0) {
        reflectors[k] = std::move(v);
        betas[k] = 0.0;
        continue;
      }
      const double alpha = x[k] >= 0.0 ? -norm : norm;
      v[0] -= alpha;
      const double vnorm2 = dot(v, v);
      betas[k] = vnorm2 > 0.0 ? 2.0 / vnorm2 : 0.0;
      for (std::size_t j = k; j < n; ++j) {
        auto& c = a.col[j];
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * c[k + i];
        s *= betas[k];
        for (std::size_t i = 0; i < v.size(); ++i) c[k + i] -= s * v[i];
      }
      reflectors[k] = std::move(v);
    }
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i <= j; ++i) r_.col[j][i] = a.col[j][i];
  }

  const Columns& r() const { return r_; }

  // Returns Q * [x; 0] for an n x k block x.
  Columns apply_q(const Columns& x) const {
    Columns out(m, x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) {
      auto& c = out.col[j];
      std::copy(x.col[j].begin(), x.col[j].end(), c.begin());
      for (std::size_t k = n; k-- > 0;) {
        if (betas[k] == 0.0) continue;
        const auto& v = reflectors[k];
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * c[k + i];
        s *= betas[k];
        for (std::size_t i = 0; i < v.size(); ++i) c[k + i] -= s * v[i];
      }
    }
    return out;
  }

 private:
  Columns r_;
};

// Replaces the columns flagged in `deficient` with unit vectors orthogonal to
// every other column.
void complete_orthonormal(Columns& u, const std::vector<bool>& deficient) {
  const std::size_t m = u.rows;
  std::vector<std::size_t> good;
  for (std::size_t j = 0; j < u.cols(); ++j)
    if (!deficient[j]) good.push_back(j);
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < u.cols(); ++j) {
    if (!deficient[j]) continue;
    while (candidate < m) {
      std::vector<double> e(m, 0.0);
      e[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (auto g : good) {
          const double proj = dot(e, u.col[g]);
          for (std::size_t i = 0; i < m; ++i) e[i] -= proj * u.col[g][i];
        }
      }
      const double norm = std::sqrt(dot(e, e));
      if (norm > 0.5) {
        for (auto& v : e) v /= norm;
        u.col[j] = std::move(e);
        good.push_back(j);
        break;
      }
    }
  }
}

Matrix to_matrix(const Columns& c) {
  Matrix out(c.rows, c.cols());
  for (std::size_t j = 0; j < c.cols(); ++j)
    for (std::size_t i = 0; i < c.rows; ++i) out(i, j) = static_cast<float>(c.col[j][i]);
  return out;
}

struct TallSvd {
  Columns u;
  std::vector<double> s;
  Columns v;
  int sweeps = 0;
};

// SVD of a tall (rows >= cols) matrix held column-wise.
TallSvd tall_svd(Columns a, bool want_u, const SvdOptions& options) {
  const std::size_t m = a.rows;
  const std::size_t n = a.cols();

  std::optional<HouseholderQr> qr;
  if (m > n) qr.emplace(std::move(a));
  Columns w = qr ? qr->r() : std::move(a);

  Columns v(n, n);
  for (std::size_t i = 0; i < n; ++i) v.col[i][i] = 1.0;

  int sweep = 0;
  for (; sweep < options.max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto& wp = w.col[p];
        auto& wq = w.col[q];
        const double alpha = dot(wp, wp);
        const double beta = dot(wq, wq);
        const double gamma = dot(wp, wq);
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= options.tolerance * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < wp.size(); ++i) {
          const double x = wp[i];
          const double y = wq[i];
          wp[i] = c * x - s * y;
          wq[i] = s * x + c * y;
        }
        auto& vp = v.col[p];
        auto& vq = v.col[q];
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i];
          const double y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sv(n);
  for (std::size_t j = 0; j < n; ++j) sv[j] = std::sqrt(dot(w.col[j], w.col[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return sv[x] > sv[y]; });

  TallSvd out{Columns(0, 0), std::vector<double>(n), Columns(n, n), sweep};
  for (std::size_t j = 0; j < n; ++j) {
    out.s[j] = sv[order[j]];
    out.v.col[j] = v.col[order[j]];
  }
  if (!want_u) return out;

  const double smax = n > 0 ? out.s[0] : 0.0;
  const double cutoff = smax * static_cast<double>(std::max(m, n)) *
                        std::numeric_limits<double>::epsilon();
  Columns ur(w.rows, n);
  std::vector<bool> deficient(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    if (out.s[j] <= cutoff || out.s[j] == 0.0) {
      deficient[j] = true;
      continue;
    }
    const auto& src = w.col[order[j]];
    for (std::size_t i = 0; i < src.size(); ++i) ur.col[j][i] = src[i] / out.s[j];
  }
  complete_orthonormal(ur, deficient);
  out.u = qr ? qr->apply_q(ur) : std::move(ur);
  return out;
}

}  // namespace

SvdResult svd(const Matrix& m, const SvdOptions& options) {
  if (!m.all_finite()) throw InvalidArgument("svd: input contains non-finite values");
  const bool transpose = m.rows() < m.cols();
  const std::size_t rows = transpose ? m.cols() : m.rows();
  const std::size_t cols = transpose ? m.rows() : m.cols();

  Columns a(rows, cols);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (transpose) {
        a.col[r][c] = m(r, c);
      } else {
        a.col[c][r] = m(r, c);
      }
    }
  }

  // For a transposed problem the caller's U is our V and vice versa.
  const bool want_tall_u = transpose ? options.compute_v : options.compute_u;
  TallSvd t = tall_svd(std::move(a), want_tall_u, options);

  SvdResult out;
  out.sweeps = t.sweeps;
  out.s.resize(t.s.size());
  std::transform(t.s.begin(), t.s.end(), out.s.begin(), [](double x) { return float(x); });
  if (transpose) {
    if (options.compute_u) out.u = to_matrix(t.v);
    if (options.compute_v) out.v = to_matrix(t.u);
  } else {
    if (options.compute_u) out.u = to_matrix(t.u);
    if (options.compute_v) out.v = to_matrix(t.v);
  }
  return out;
}

Matrix leading_left_singular_vectors(const Matrix& m, std::size_t count) {
  if (count == 0 || count > m.rows()) {
    throw InvalidArgument("requested " + std::to_string(count) +
                          " singular vectors from a matrix with " + std::to_string(m.rows()) +
                          " rows");
  }
  SvdOptions opts;
  opts.compute_v = false;
  auto result = svd(m, opts);
  // For a tall matrix the thin U has only min(rows, cols) columns.
  Matrix u = std::move(result.u);
  if (u.cols() < count) {
    // Extend with an orthonormal completion of the column space.
    Columns ext(m.rows(), count);
    std::vector<bool> deficient(count, false);
    for (std::size_t j = 0; j < count; ++j) {
      if (j < u.cols()) {
        for (std::size_t i = 0; i < m.rows(); ++i) ext.col[j][i] = u(i, j);
      } else {
        deficient[j] = true;
      }
    }
    complete_orthonormal(ext, deficient);
    return to_matrix(ext);
  }
  Matrix out(m.rows(), count);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = u(i, j);
  return out;
}

}  // namespace cdpkit
