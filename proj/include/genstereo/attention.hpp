#pragma once

#include <algorithm>
#include <cmath>

#include "genstereo/nn.hpp"

namespace genstereo {

/// Single-head projections; each matrix is dim x dim, row-major [in][out],
/// applied as x * W.
struct AttentionParams {
  std::size_t dim = 0;
  std::vector<double> wq, wk, wv, wo;

  AttentionParams() = default;
  explicit AttentionParams(std::size_t d)
      : dim(d), wq(d * d, 0.0), wk(d * d, 0.0), wv(d * d, 0.0), wo(d * d, 0.0) {}

  static AttentionParams identity(std::size_t d) {
    AttentionParams p(d);
    for (std::size_t i = 0; i < d; ++i)
      p.wq[i * d + i] = p.wk[i * d + i] = p.wv[i * d + i] = p.wo[i * d + i] = 1.0;
    return p;
  }

  void init(Rng& rng, double out_gain = 1.0) {
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    for (auto* m : {&wq, &wk, &wv})
      for (double& x : *m) x = s * rng.normal();
    for (double& x : wo) x = out_gain * s * rng.normal();
  }
};

namespace detail {

// out[n, dout] = x[n, din] * w[din, dout]
inline std::vector<double> matmul(const std::vector<double>& x, std::size_t n,
                                  std::size_t din, const std::vector<double>& w,
                                  std::size_t dout) {
  std::vector<double> out(n * dout, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < din; ++k) {
      const double xv = x[r * din + k];
      const double* wr = &w[k * dout];
      double* o = &out[r * dout];
      for (std::size_t c = 0; c < dout; ++c) o[c] += xv * wr[c];
    }
  return out;
}

// grad_w[din, dout] += x^T * dy ; returns dx = dy * w^T
inline std::vector<double> matmul_backward(const std::vector<double>& x, std::size_t n,
                                           std::size_t din, const std::vector<double>& w,
                                           std::size_t dout, const std::vector<double>& dy,
                                           std::vector<double>& grad_w) {
  std::vector<double> dx(n * din, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < din; ++k) {
      const double xv = x[r * din + k];
      const double* wr = &w[k * dout];
      double* gw = &grad_w[k * dout];
      const double* g = &dy[r * dout];
      double acc = 0.0;
      for (std::size_t c = 0; c < dout; ++c) {
        acc += wr[c] * g[c];
        gw[c] += xv * g[c];
      }
      dx[r * din + k] = acc;
    }
  return dx;
}

}  // namespace detail

/// Everything the backward pass needs from a forward evaluation.
struct AttentionCache {
  std::size_t n_ref = 0, n_tgt = 0, dim = 0;
  std::vector<double> tokens;  // [n_ref + n_tgt, dim], reference tokens first
  std::vector<double> q, k, v;
  std::vector<double> weights;  // softmax rows, [n_tgt, n_ref + n_tgt]
  std::vector<double> mixed;    // weights * v, before the output projection
};

/// Cross-view attention: queries come from the target features, keys and
/// values from the token-wise concatenation [reference, target].
/// Output has the target's token layout.
inline Field cross_view_attention(const Field& ref, const Field& tgt,
                                  const AttentionParams& p,
                                  AttentionCache* cache = nullptr) {
  require(ref.c == tgt.c && tgt.c == p.dim, ErrorKind::shape,
          "cross_view_attention: feature dims differ (" + std::to_string(ref.c) + ", " +
              std::to_string(tgt.c) + ", params " + std::to_string(p.dim) + ")");
  const std::size_t d = p.dim, nl = ref.pixels(), nr = tgt.pixels(), n = nl + nr;

  AttentionCache local;
  AttentionCache& c = cache ? *cache : local;
  c.n_ref = nl;
  c.n_tgt = nr;
  c.dim = d;
  c.tokens.assign(ref.v.begin(), ref.v.end());
  c.tokens.insert(c.tokens.end(), tgt.v.begin(), tgt.v.end());
  c.q = detail::matmul(tgt.v, nr, d, p.wq, d);
  c.k = detail::matmul(c.tokens, n, d, p.wk, d);
  c.v = detail::matmul(c.tokens, n, d, p.wv, d);

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  c.weights.assign(nr * n, 0.0);
  c.mixed.assign(nr * d, 0.0);
  for (std::size_t r = 0; r < nr; ++r) {
    double* row = &c.weights[r * n];
    const double* qr = &c.q[r * d];
    double mx = -INFINITY;
    for (std::size_t s = 0; s < n; ++s) {
      const double* ks = &c.k[s * d];
      double dot = 0.0;
      for (std::size_t e = 0; e < d; ++e) dot += qr[e] * ks[e];
      row[s] = dot * scale;
      mx = std::max(mx, row[s]);
    }
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      row[s] = std::exp(row[s] - mx);
      sum += row[s];
    }
    double* m = &c.mixed[r * d];
    for (std::size_t s = 0; s < n; ++s) {
      row[s] /= sum;
      const double* vs = &c.v[s * d];
      for (std::size_t e = 0; e < d; ++e) m[e] += row[s] * vs[e];
    }
  }
  Field out(tgt.h, tgt.w, d);
  out.v = detail::matmul(c.mixed, nr, d, p.wo, d);
  return out;
}

struct AttentionGrads {
  Field d_ref, d_tgt;
};

/// Backward pass of cross_view_attention; accumulates into `grad`.
inline AttentionGrads cross_view_attention_backward(const Field& ref, const Field& tgt,
                                                    const AttentionParams& p,
                                                    const AttentionCache& c,
                                                    const Field& d_out,
                                                    AttentionParams& grad) {
  const std::size_t d = c.dim, nl = c.n_ref, nr = c.n_tgt, n = nl + nr;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  const auto d_mixed = detail::matmul_backward(c.mixed, nr, d, p.wo, d, d_out.v, grad.wo);

  std::vector<double> dq(nr * d, 0.0), dk(n * d, 0.0), dv(n * d, 0.0);
  std::vector<double> dlogits(n);
  for (std::size_t r = 0; r < nr; ++r) {
    const double* row = &c.weights[r * n];
    const double* dm = &d_mixed[r * d];
    double dot_sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double* vs = &c.v[s * d];
      double* dvs = &dv[s * d];
      double dp = 0.0;
      for (std::size_t e = 0; e < d; ++e) {
        dp += dm[e] * vs[e];
        dvs[e] += row[s] * dm[e];
      }
      dlogits[s] = dp;
      dot_sum += dp * row[s];
    }
    const double* qr = &c.q[r * d];
    double* dqr = &dq[r * d];
    for (std::size_t s = 0; s < n; ++s) {
      const double g = row[s] * (dlogits[s] - dot_sum) * scale;
      if (g == 0.0) continue;
      const double* ks = &c.k[s * d];
      double* dks = &dk[s * d];
      for (std::size_t e = 0; e < d; ++e) {
        dqr[e] += g * ks[e];
        dks[e] += g * qr[e];
      }
    }
  }

  auto d_tokens = detail::matmul_backward(c.tokens, n, d, p.wk, d, dk, grad.wk);
  add_into(d_tokens, detail::matmul_backward(c.tokens, n, d, p.wv, d, dv, grad.wv));
  const auto d_tgt_q = detail::matmul_backward(tgt.v, nr, d, p.wq, d, dq, grad.wq);

  AttentionGrads g{Field(ref.h, ref.w, d), Field(tgt.h, tgt.w, d)};
  std::copy(d_tokens.begin(), d_tokens.begin() + static_cast<std::ptrdiff_t>(nl * d),
            g.d_ref.v.begin());
  std::copy(d_tokens.begin() + static_cast<std::ptrdiff_t>(nl * d), d_tokens.end(),
            g.d_tgt.v.begin());
  add_into(g.d_tgt.v, d_tgt_q);
  return g;
}

}  // namespace genstereo
