#pragma once

#include <cmath>
#include <vector>

#include "genstereo/denoiser.hpp"
#include "genstereo/rng.hpp"

namespace genstereo {

// ---------------------------------------------------------------------------
// Toy latent codec: f x f average pooling followed by x -> 2x - 1, decoded by
// the inverse affine and nearest-neighbour upsampling. Exact on images that
// are constant over each f x f block.

inline Field codec_encode(const Image& img, std::size_t factor) {
  require(factor >= 1, ErrorKind::domain, "codec: factor must be >= 1");
  require(img.height % factor == 0 && img.width % factor == 0, ErrorKind::domain,
          "codec: image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
              " not divisible by factor " + std::to_string(factor));
  Field z(img.height / factor, img.width / factor, img.channels);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t i = 0; i < z.h; ++i)
    for (std::size_t j = 0; j < z.w; ++j)
      for (std::size_t c = 0; c < z.c; ++c) {
        double sum = 0.0;
        for (std::size_t di = 0; di < factor; ++di)
          for (std::size_t dj = 0; dj < factor; ++dj)
            sum += img(i * factor + di, j * factor + dj, c);
        z(i, j, c) = 2.0 * (sum * inv) - 1.0;
      }
  return z;
}

/// Decode in double precision, clamped to [0,1].
inline Field codec_decode_field(const Field& z, std::size_t factor) {
  require(factor >= 1, ErrorKind::domain, "codec: factor must be >= 1");
  Field img(z.h * factor, z.w * factor, z.c);
  for (std::size_t i = 0; i < img.h; ++i)
    for (std::size_t j = 0; j < img.w; ++j)
      for (std::size_t c = 0; c < z.c; ++c)
        img(i, j, c) = std::clamp((z(i / factor, j / factor, c) + 1.0) * 0.5, 0.0, 1.0);
  return img;
}

inline Image codec_decode(const Field& z, std::size_t factor) {
  const Field f = codec_decode_field(z, factor);
  Image img(f.h, f.w, f.c);
  for (std::size_t k = 0; k < f.v.size(); ++k) img.values[k] = static_cast<float>(f.v[k]);
  return img;
}

// ---------------------------------------------------------------------------

/// Linear-beta DDPM schedule; timesteps are 1-based, alpha_bar(0) == 1.
struct NoiseSchedule {
  std::vector<double> beta;       // beta[t-1]
  std::vector<double> alpha_bar;  // alpha_bar[t-1]

  int steps() const { return static_cast<int>(beta.size()); }

  double abar(int t) const {
    require(t >= 0 && t <= steps(), ErrorKind::domain,
            "schedule: timestep " + std::to_string(t) + " outside [0, " +
                std::to_string(steps()) + "]");
    return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)];
  }
};

inline NoiseSchedule make_schedule(int steps, double beta_start = 1e-4, double beta_end = 0.02) {
  require(steps >= 1, ErrorKind::domain, "schedule: T must be >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, ErrorKind::domain,
          "schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.beta.resize(static_cast<std::size_t>(steps));
  s.alpha_bar.resize(s.beta.size());
  double prod = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    const double b = beta_start + (beta_end - beta_start) * frac;
    prod *= 1.0 - b;
    s.beta[static_cast<std::size_t>(t - 1)] = b;
    s.alpha_bar[static_cast<std::size_t>(t - 1)] = prod;
  }
  return s;
}

inline void check_step(int t, const NoiseSchedule& s) {
  require(t >= 1 && t <= s.steps(), ErrorKind::domain,
          "timestep " + std::to_string(t) + " outside [1, " + std::to_string(s.steps()) + "]");
}

/// z_t = sqrt(abar) z0 + sqrt(1 - abar) eps
inline Field add_noise(const Field& z0, const Field& eps, int t, const NoiseSchedule& s) {
  require(z0.same_shape(eps), ErrorKind::shape, "add_noise: shapes differ");
  check_step(t, s);
  const double a = s.abar(t);
  const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
  Field zt = z0;
  for (std::size_t k = 0; k < zt.v.size(); ++k) zt.v[k] = sa * z0.v[k] + sn * eps.v[k];
  return zt;
}

/// x0-prediction: (z_t - sqrt(1 - abar) eps_hat) / sqrt(abar)
inline Field predict_z0(const Field& zt, const Field& eps_hat, int t, const NoiseSchedule& s) {
  require(zt.same_shape(eps_hat), ErrorKind::shape, "predict_z0: shapes differ");
  check_step(t, s);
  const double a = s.abar(t);
  require(a > 0.0, ErrorKind::degenerate, "predict_z0: alpha_bar is zero");
  const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
  Field z0 = zt;
  for (std::size_t k = 0; k < z0.v.size(); ++k) z0.v[k] = (zt.v[k] - sn * eps_hat.v[k]) / sa;
  return z0;
}

struct LossReport {
  double latent = 0.0;
  double pixel = 0.0;
  double total = 0.0;
  double alpha = 1.0;
};

/// Latent noise MSE plus alpha times the decoded-image MSE between the
/// x0-prediction and the target latent. When `d_eps_hat` is given it receives
/// dL_total/d(eps_hat).
inline LossReport dual_loss(const Field& eps, const Field& eps_hat, const Field& z_target,
                            const Field& zt, int t, const NoiseSchedule& s, double alpha,
                            std::size_t codec_factor, Field* d_eps_hat = nullptr) {
  require(eps.same_shape(eps_hat) && eps.same_shape(z_target) && eps.same_shape(zt),
          ErrorKind::shape, "dual_loss: shapes differ");
  LossReport r;
  r.alpha = alpha;
  const double n = static_cast<double>(eps.v.size());
  for (std::size_t k = 0; k < eps.v.size(); ++k) {
    const double e = eps_hat.v[k] - eps.v[k];
    r.latent += e * e;
  }
  r.latent /= n;

  const Field z_pred = predict_z0(zt, eps_hat, t, s);
  const Field img_pred = codec_decode_field(z_pred, codec_factor);
  const Field img_tgt = codec_decode_field(z_target, codec_factor);
  const double npx = static_cast<double>(img_pred.v.size());
  for (std::size_t k = 0; k < img_pred.v.size(); ++k) {
    const double e = img_pred.v[k] - img_tgt.v[k];
    r.pixel += e * e;
  }
  r.pixel /= npx;
  r.total = r.latent + alpha * r.pixel;

  if (d_eps_hat) {
    *d_eps_hat = Field(eps.h, eps.w, eps.c);
    const double a = s.abar(t);
    const double dz_deps = -std::sqrt(1.0 - a) / std::sqrt(a);
    const std::size_t f = codec_factor;
    for (std::size_t i = 0; i < eps.h; ++i)
      for (std::size_t j = 0; j < eps.w; ++j)
        for (std::size_t c = 0; c < eps.c; ++c) {
          const std::size_t k = (i * eps.w + j) * eps.c + c;
          double g = 2.0 * (eps_hat.v[k] - eps.v[k]) / n;
          const double u = (z_pred.v[k] + 1.0) * 0.5;
          if (alpha != 0.0 && u > 0.0 && u < 1.0) {
            double acc = 0.0;
            for (std::size_t di = 0; di < f; ++di)
              for (std::size_t dj = 0; dj < f; ++dj) {
                const std::size_t p = ((i * f + di) * img_pred.w + j * f + dj) * eps.c + c;
                acc += img_pred.v[p] - img_tgt.v[p];
              }
            g += alpha * (2.0 * acc / npx) * 0.5 * dz_deps;
          }
          d_eps_hat->v[k] = g;
        }
  }
  return r;
}

// ---------------------------------------------------------------------------

/// Conditioning shared by every sampler step.
struct SampleConditions {
  Field cond_warp, cond_embed;
  Field ref_image, ref_embed;
};

/// Timesteps visited by a K-step sampler, descending: k*T/K for k = K..1.
inline std::vector<int> sampler_timesteps(int K, int T) {
  require(K >= 1 && K <= T, ErrorKind::domain,
          "sampler: steps K=" + std::to_string(K) + " must lie in [1, T=" + std::to_string(T) + "]");
  std::vector<int> ts;
  for (int k = K; k >= 1; --k) ts.push_back(k * T / K);
  return ts;
}

/// Deterministic DDIM (eta = 0) from seeded Gaussian noise. The clean-latent
/// estimate is clipped to the codec range [-1, 1] at every step. With
/// `start_mean` the first latent is drawn from the forward marginal around it,
/// sqrt(abar) * mean + sqrt(1 - abar) * noise, instead of pure noise; short
/// schedules end far from pure noise (abar_T ~ 0.37 for T=100).
inline Field ddim_sample(const DenoiserParams& p, const SampleConditions& cond, int K,
                         const NoiseSchedule& s, std::uint64_t seed,
                         const Field* start_mean = nullptr) {
  const int T = s.steps();
  const auto ts = sampler_timesteps(K, T);
  Rng rng(seed);
  DenoiserInput in;
  in.z_t = Field(cond.cond_warp.h, cond.cond_warp.w, p.shape.latent_channels);
  for (double& v : in.z_t.v) v = rng.normal();
  if (start_mean) {
    require(start_mean->same_shape(in.z_t), ErrorKind::shape, "ddim_sample: start mean shape");
    const double a = s.abar(ts.front());
    for (std::size_t q = 0; q < in.z_t.v.size(); ++q)
      in.z_t.v[q] = std::sqrt(a) * start_mean->v[q] + std::sqrt(1.0 - a) * in.z_t.v[q];
  }
  in.steps = T;
  in.cond_warp = cond.cond_warp;
  in.cond_embed = cond.cond_embed;
  in.ref_image = cond.ref_image;
  in.ref_embed = cond.ref_embed;

  Field z0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    in.t = ts[k];
    const Field eps = denoiser_forward(p, in);
    z0 = predict_z0(in.z_t, eps, in.t, s);
    for (double& v : z0.v) v = std::clamp(v, -1.0, 1.0);
    const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    if (t_prev == 0) break;
    // eps re-derived from the clipped estimate keeps the update consistent.
    const double a = s.abar(in.t), ap = s.abar(t_prev);
    for (std::size_t q = 0; q < z0.v.size(); ++q) {
      const double e = (in.z_t.v[q] - std::sqrt(a) * z0.v[q]) / std::sqrt(1.0 - a);
      in.z_t.v[q] = std::sqrt(ap) * z0.v[q] + std::sqrt(1.0 - ap) * e;
    }
  }
  return z0;
}

}  // namespace genstereo
