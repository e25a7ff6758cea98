#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "genstereo/diffusion.hpp"
#include "genstereo/fusion.hpp"

namespace genstereo {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-3;
  // Denominator floor: |a - n| / max(|a|, |n|, floor).
  double abs_floor = 1e-6;
};

namespace detail {

template <class Params>
std::vector<std::pair<std::string, std::vector<double>*>> param_list(Params& p) {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  p.visit([&](const std::string& n, std::vector<double>& v) { out.emplace_back(n, &v); });
  return out;
}

}  // namespace detail

/// Compares an analytic gradient with central differences of `loss` over
/// every scalar parameter.
template <class Params>
GradCheckReport check_gradients(Params params, const std::function<double(const Params&)>& loss,
                                Params analytic, const GradCheckOptions& opt = {}) {
  GradCheckReport r;
  r.tolerance = opt.tolerance;
  auto values = detail::param_list(params);
  auto grads = detail::param_list(analytic);
  for (std::size_t b = 0; b < values.size(); ++b) {
    auto& v = *values[b].second;
    const auto& g = *grads[b].second;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double saved = v[k];
      v[k] = saved + opt.step;
      const double up = loss(params);
      v[k] = saved - opt.step;
      const double down = loss(params);
      v[k] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double denom = std::max({std::abs(g[k]), std::abs(numeric), opt.abs_floor});
      const double rel = std::abs(g[k] - numeric) / denom;
      ++r.checked;
      if (rel >= r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst_param = values[b].first;
        r.worst_index = k;
        r.worst_analytic = g[k];
        r.worst_numeric = numeric;
      }
    }
  }
  r.passed = r.max_rel_error < opt.tolerance;
  return r;
}

// ---------------------------------------------------------------------------
// Denoiser probe: a small batch of (z0, eps, t, conditions).

struct ProbeItem {
  DenoiserInput input;  // z_t already noised
  Field eps, z0;
};

struct DenoiserProbe {
  std::vector<ProbeItem> items;
  NoiseSchedule schedule;
  double alpha = 1.0;
  std::size_t codec_factor = 2;
};

inline DenoiserProbe make_probe(const DenoiserShape& shape, std::size_t h, std::size_t w,
                                std::size_t count, std::uint64_t seed,
                                NoiseSchedule schedule = make_schedule(100)) {
  DenoiserProbe probe;
  probe.schedule = std::move(schedule);
  Rng rng(seed);
  auto field = [&](std::size_t c, double lo, double hi) {
    Field f(h, w, c);
    for (double& v : f.v) v = rng.uniform(lo, hi);
    return f;
  };
  for (std::size_t n = 0; n < count; ++n) {
    ProbeItem it;
    it.z0 = field(shape.latent_channels, -0.8, 0.8);
    it.eps = Field(h, w, shape.latent_channels);
    for (double& v : it.eps.v) v = rng.normal();
    it.input.steps = probe.schedule.steps();
    it.input.t = static_cast<int>(rng.integer(1, static_cast<std::uint64_t>(it.input.steps)));
    it.input.z_t = add_noise(it.z0, it.eps, it.input.t, probe.schedule);
    it.input.cond_warp = field(shape.cond_channels, -1.0, 1.0);
    it.input.cond_embed = field(shape.embed_channels, -1.0, 1.0);
    it.input.ref_image = field(shape.ref_channels, -1.0, 1.0);
    it.input.ref_embed = field(shape.embed_channels, -1.0, 1.0);
    probe.items.push_back(std::move(it));
  }
  return probe;
}

/// Mean total dual loss over the probe; fills `grad` when given.
inline double probe_loss(const DenoiserParams& p, const DenoiserProbe& probe,
                         DenoiserParams* grad = nullptr) {
  if (grad) *grad = p.zeros_like();
  const double inv = 1.0 / static_cast<double>(probe.items.size());
  double total = 0.0;
  for (const auto& it : probe.items) {
    DenoiserCache cache;
    const Field eps_hat = denoiser_forward(p, it.input, grad ? &cache : nullptr);
    Field d_eps;
    const LossReport r = dual_loss(it.eps, eps_hat, it.z0, it.input.z_t, it.input.t,
                                   probe.schedule, probe.alpha, probe.codec_factor,
                                   grad ? &d_eps : nullptr);
    total += r.total * inv;
    if (grad) {
      for (double& v : d_eps.v) v *= inv;
      DenoiserParams g = denoiser_backward(p, cache, d_eps);
      auto dst = detail::param_list(*grad);
      auto src = detail::param_list(g);
      for (std::size_t b = 0; b < dst.size(); ++b) add_into(*dst[b].second, *src[b].second);
    }
  }
  return total;
}

/// Optional hook applied to the analytic gradient before comparison; used by
/// negative controls.
using DenoiserGradHook = std::function<void(DenoiserParams&)>;

inline GradCheckReport grad_check(const DenoiserParams& p, const DenoiserProbe& probe,
                                  double tol, const DenoiserGradHook& hook = {},
                                  GradCheckOptions opt = {}) {
  opt.tolerance = tol;
  DenoiserParams analytic;
  probe_loss(p, probe, &analytic);
  if (hook) hook(analytic);
  return check_gradients<DenoiserParams>(
      p, [&](const DenoiserParams& q) { return probe_loss(q, probe); }, analytic, opt);
}

inline GradCheckReport fusion_grad_check(const FusionParams& p,
                                         const std::vector<FusionSample>& samples, double tol,
                                         GradCheckOptions opt = {}) {
  opt.tolerance = tol;
  FusionParams analytic;
  fusion_loss(samples, p, &analytic);
  return check_gradients<FusionParams>(
      p, [&](const FusionParams& q) { return fusion_loss(samples, q); }, analytic, opt);
}

}  // namespace genstereo
