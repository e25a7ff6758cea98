#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "genstereo/checkpoint.hpp"
#include "genstereo/coord_embed.hpp"
#include "genstereo/dataset.hpp"
#include "genstereo/diffusion.hpp"
#include "genstereo/fusion.hpp"
#include "genstereo/grad_check.hpp"
#include "genstereo/metrics.hpp"
#include "genstereo/warp.hpp"

namespace genstereo {

namespace detail {

// Runs fn, re-throwing library errors tagged with the stage name.
template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

// Independent seed streams derived from one global seed.
enum Stream : std::uint64_t { init_stream = 1, order_stream, step_stream, fusion_stream, sample_stream };

inline std::uint64_t stream_seed(std::uint64_t seed, Stream s, std::uint64_t index) {
  return mix_seed(mix_seed(seed, s), index);
}

}  // namespace detail

/// Normalizes by the maximum valid disparity and scales to gamma * width.
/// Maps without a positive valid disparity are already at any scale and pass
/// through unchanged.
inline Disparity scale_disparity(const Disparity& d, double gamma) {
  require(gamma >= 0.0 && gamma <= 1.0, ErrorKind::domain, "gamma must lie in [0,1]");
  if (d.valid.count() == 0 || d.max_valid() <= 0.0f) return d;
  return normalize_and_scale(d, gamma, d.width);
}

/// Latent-resolution conditioning: the encoded (masked) warp, the canonical
/// embedding C_l and its warp C_r, and the encoded reference view.
inline SampleConditions build_conditions(const Image& left, const Image& warped,
                                         const Disparity& d, std::size_t f,
                                         const FourierOptions& fourier,
                                         const AblationConfig& ablation = {}) {
  require(left.height % f == 0 && left.width % f == 0, ErrorKind::domain,
          "image " + std::to_string(left.height) + "x" + std::to_string(left.width) +
              " not divisible by codec factor " + std::to_string(f));
  const std::size_t hl = left.height / f, wl = left.width / f;
  SampleConditions c;
  c.ref_image = codec_encode(left, f);
  c.cond_warp = codec_encode(warped, f);
  if (!ablation.warped_image) c.cond_warp = Field(hl, wl, c.cond_warp.c);
  const Tensor cl = fourier_encode(canonical_grid(hl, wl), fourier);
  const Tensor cr = forward_warp(cl, disparity_rescale(d, hl, wl)).warped;
  c.ref_embed = Field::from_tensor(cl);
  c.cond_embed = Field::from_tensor(cr);
  if (!ablation.coord_embedding) {
    c.ref_embed = Field(hl, wl, c.ref_embed.c);
    c.cond_embed = Field(hl, wl, c.cond_embed.c);
  }
  return c;
}

struct GenSettings {
  double gamma = 0.1;
  int sampler_steps = 20;
  std::uint64_t seed = 0;
  bool fusion = true;
  bool warp_start = true;
  AblationConfig ablation;

  static GenSettings from(const Config& c) {
    return {c.generation_gamma(), c.sampler_steps, c.seed, c.fusion_enabled,
            c.sampler_warp_start, c.ablation};
  }
};

struct Generation {
  Image right;      // fused result
  Image generated;  // decoded sample before fusion
  Image warped;
  Mask mask;
  Disparity disparity;  // after normalization and scaling
};

/// Generation from an already-scaled disparity map.
inline Generation synthesize(const Image& left, const Disparity& d, const GenSettings& g,
                             const Model& m) {
  Generation out;
  out.disparity = d;
  auto w = detail::stage("warp", [&] { return warp_image(left, d); });
  out.warped = std::move(w.image);
  out.mask = std::move(w.mask);
  const SampleConditions cond = detail::stage("condition", [&] {
    return build_conditions(left, out.warped, d, m.codec_factor, m.fourier, g.ablation);
  });
  const Field z = detail::stage("sample", [&] {
    return ddim_sample(m.denoiser, cond, g.sampler_steps, noise_schedule(m), g.seed,
                       g.warp_start ? &cond.cond_warp : nullptr);
  });
  out.generated = detail::stage("decode", [&] { return codec_decode(z, m.codec_factor); });
  out.right = detail::stage("fuse", [&] {
    if (!g.fusion) return out.generated;
    return fuse(out.generated, out.warped, out.mask,
                fusion_weights(out.generated, out.warped, out.mask, m.fusion));
  });
  return out;
}

/// Right view from a left view and a (relative or metric) disparity map.
/// Inference never applies disparity dropout.
inline Generation generate_right_view(const Image& left, const Disparity& d, const GenSettings& g,
                                      const Model& m) {
  detail::stage("input", [&] {
    require(left.channels == m.denoiser.shape.latent_channels, ErrorKind::shape,
            "left view has " + std::to_string(left.channels) + " channels, model expects " +
                std::to_string(m.denoiser.shape.latent_channels));
    require(left.height == d.height && left.width == d.width, ErrorKind::shape,
            "left view and disparity dims differ");
    require(left.height % m.codec_factor == 0 && left.width % m.codec_factor == 0,
            ErrorKind::domain, "dims not divisible by codec factor " + std::to_string(m.codec_factor));
    return 0;
  });
  const Disparity scaled = detail::stage("normalize", [&] { return scale_disparity(d, g.gamma); });
  return synthesize(left, scaled, g, m);
}

// ---------------------------------------------------------------------------
// Training

/// Adam over any parameter struct with visit().
template <class Params>
class Adam {
 public:
  explicit Adam(double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }

  void step(Params& p, const Params& g) {
    auto vals = detail::param_list(p);
    auto grads = detail::param_list(const_cast<Params&>(g));
    if (m_.empty())
      for (auto& [name, v] : vals) {
        m_.emplace_back(v->size(), 0.0);
        v_.emplace_back(v->size(), 0.0);
      }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t b = 0; b < vals.size(); ++b) {
      auto& x = *vals[b].second;
      const auto& dx = *grads[b].second;
      for (std::size_t k = 0; k < x.size(); ++k) {
        m_[b][k] = b1_ * m_[b][k] + (1.0 - b1_) * dx[k];
        v_[b][k] = b2_ * v_[b][k] + (1.0 - b2_) * dx[k] * dx[k];
        x[k] -= lr_ * (m_[b][k] / c1) / (std::sqrt(v_[b][k] / c2) + eps_);
      }
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

template <class Params>
void sgd_step(Params& p, const Params& g, double lr) {
  auto vals = detail::param_list(p);
  auto grads = detail::param_list(const_cast<Params&>(g));
  for (std::size_t b = 0; b < vals.size(); ++b)
    for (std::size_t k = 0; k < vals[b].second->size(); ++k)
      (*vals[b].second)[k] -= lr * (*grads[b].second)[k];
}

/// One named collection of paired samples held in memory.
struct TrainSet {
  std::string name;
  std::vector<StereoSample> samples;
};

struct TrainResult {
  Model model;
  std::vector<LossReport> loss;     // per optimizer step, batch mean
  std::vector<double> fusion_loss;  // standalone fusion fit, or per step in joint mode
  std::vector<int> dropout_steps;   // step of every dropout invocation
  SamplePlan plan;
  std::size_t dropout_count() const { return dropout_steps.size(); }
};

struct TrainHooks {
  std::function<void(int step, const LossReport&)> on_step;
};

/// Expands the plan into (dataset, sample) pairs in dataset order.
inline std::vector<std::pair<std::size_t, std::size_t>> plan_entries(const SamplePlan& plan) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t d = 0; d < plan.sizes.size(); ++d)
    for (std::size_t r = 0; r < plan.replication[d]; ++r)
      for (std::size_t n = 0; n < plan.sizes[d]; ++n) e.emplace_back(d, n);
  return e;
}

namespace detail {

struct TrainItem {
  PreparedSample prep;
  Image warped;  // after dropout masking
  Mask mask;
  bool dropped = false;
};

inline TrainItem make_train_item(const StereoSample& s, const Config& c, std::uint64_t seed,
                                 bool allow_dropout) {
  require(s.right.has_value(), ErrorKind::domain, "training sample " + s.stem + " has no right view");
  Rng rng(seed);
  TrainItem it;
  it.prep = prepare_sample(s.left, s.right, s.disparity, c.crop_size, rng.next(), c.train.random_crop);
  auto w = warp_image(it.prep.left, it.prep.disparity);
  it.mask = std::move(w.mask);
  const std::uint64_t drop_seed = rng.next();
  if (allow_dropout && rng.uniform() < c.dropout.fraction) {
    const DropoutDraw draw = dropout_draw(c.crop_size, c.crop_size, drop_seed);
    it.mask = combine_masks(it.mask, draw.mask, c.dropout.mode);
    it.dropped = true;
  }
  it.warped = apply_mask(std::move(w.image), it.mask);
  return it;
}

}  // namespace detail

/// Toy training loop: dual loss on the denoiser with Adam (or plain SGD),
/// then a standalone fusion fit on sampled generations. In joint mode the
/// fusion layer is updated every step on the detached x0-prediction instead.
inline TrainResult train_toy(const std::vector<TrainSet>& sets, const Config& c,
                             const TrainHooks& hooks = {}) {
  c.validate();
  require(!sets.empty(), ErrorKind::domain, "train_toy: no datasets");
  std::vector<TrainSet> used(sets.begin(), c.ablation.mixed_datasets ? sets.end() : sets.begin() + 1);
  std::vector<std::size_t> sizes;
  std::vector<std::string> names;
  for (const auto& s : used) {
    require(!s.samples.empty(), ErrorKind::domain, "train_toy: dataset " + s.name + " is empty");
    sizes.push_back(s.samples.size());
    names.push_back(s.name);
  }

  TrainResult out;
  out.plan = resample_plan(sizes, c.train.resample_fraction, names);
  const auto entries = plan_entries(out.plan);
  require(!entries.empty(), ErrorKind::domain, "train_toy: empty plan");

  out.model = make_model(c, detail::stream_seed(c.seed, detail::init_stream, 0));
  Model& m = out.model;
  const NoiseSchedule sched = noise_schedule(m);
  const std::size_t f = m.codec_factor;
  Adam<DenoiserParams> adam(c.train.lr);
  if (c.train.joint) {
    Rng rng(detail::stream_seed(c.seed, detail::fusion_stream, 0));
    for (double& v : m.fusion.conv.weight) v = 0.01 * rng.normal();
  }

  std::vector<std::size_t> order(entries.size());
  std::size_t cursor = order.size(), epoch = 0;
  auto next_entry = [&]() {
    if (cursor == order.size()) {
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      Rng shuffle(detail::stream_seed(c.seed, detail::order_stream, epoch++));
      for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[shuffle.integer(0, k - 1)]);
      cursor = 0;
    }
    return entries[order[cursor++]];
  };

  const double inv_batch = 1.0 / static_cast<double>(c.train.batch);
  for (int step = 0; step < c.train.steps; ++step) {
    DenoiserParams grad = m.denoiser.zeros_like();
    FusionParams fgrad;
    LossReport mean;
    mean.alpha = c.alpha;
    double fusion_total = 0.0;
    for (std::size_t b = 0; b < c.train.batch; ++b) {
      const auto [di, si] = next_entry();
      const std::uint64_t seed =
          detail::stream_seed(c.seed, detail::step_stream, static_cast<std::uint64_t>(step) * c.train.batch + b);
      const auto item = detail::make_train_item(used[di].samples[si], c, seed, true);
      if (item.dropped) out.dropout_steps.push_back(step);

      const SampleConditions cond =
          build_conditions(item.prep.left, item.warped, item.prep.disparity, f, m.fourier, c.ablation);
      const Field z0 = codec_encode(*item.prep.right, f);
      Rng rng(mix_seed(seed, 1));
      DenoiserInput in;
      in.steps = sched.steps();
      in.t = static_cast<int>(rng.integer(1, static_cast<std::uint64_t>(in.steps)));
      Field eps(z0.h, z0.w, z0.c);
      for (double& v : eps.v) v = rng.normal();
      in.z_t = add_noise(z0, eps, in.t, sched);
      in.cond_warp = cond.cond_warp;
      in.cond_embed = cond.cond_embed;
      in.ref_image = cond.ref_image;
      in.ref_embed = cond.ref_embed;

      DenoiserCache cache;
      const Field eps_hat = denoiser_forward(m.denoiser, in, &cache);
      Field d_eps;
      const LossReport r = dual_loss(eps, eps_hat, z0, in.z_t, in.t, sched, c.alpha, f, &d_eps);
      mean.latent += r.latent * inv_batch;
      mean.pixel += r.pixel * inv_batch;
      mean.total += r.total * inv_batch;
      for (double& v : d_eps.v) v *= inv_batch;
      const DenoiserParams g = denoiser_backward(m.denoiser, cache, d_eps);
      auto dst = detail::param_list(grad);
      auto src = detail::param_list(const_cast<DenoiserParams&>(g));
      for (std::size_t k = 0; k < dst.size(); ++k) add_into(*dst[k].second, *src[k].second);

      if (c.train.joint && c.fusion_enabled) {
        Field zp = predict_z0(in.z_t, eps_hat, in.t, sched);
        for (double& v : zp.v) v = std::clamp(v, -1.0, 1.0);
        const std::vector<FusionSample> fs{
            {codec_decode(zp, f), item.warped, item.mask, *item.prep.right}};
        FusionParams fg;
        fusion_total += fusion_loss(fs, m.fusion, &fg) * inv_batch;
        for (double& v : fg.conv.weight) v *= inv_batch;
        fg.conv.bias[0] *= inv_batch;
        add_into(fgrad.conv.weight, fg.conv.weight);
        add_into(fgrad.conv.bias, fg.conv.bias);
      }
    }
    const double lr = c.train.cosine_decay
                          ? 0.5 * c.train.lr * (1.0 + std::cos(std::numbers::pi * step / c.train.steps))
                          : c.train.lr;
    if (c.train.adam) {
      adam.set_lr(lr);
      adam.step(m.denoiser, grad);
    } else {
      sgd_step(m.denoiser, grad, lr);
    }
    if (c.train.joint && c.fusion_enabled) {
      sgd_step(m.fusion, fgrad, c.train.fusion_lr);
      out.fusion_loss.push_back(fusion_total);
    }
    out.loss.push_back(mean);
    if (hooks.on_step) hooks.on_step(step, mean);
  }

  if (!c.train.joint && c.fusion_enabled && c.train.fusion_steps > 0) {
    std::vector<FusionSample> fs;
    const std::size_t n = std::min(c.train.fusion_samples, entries.size());
    GenSettings g{0.0, c.sampler_steps, 0, false, c.sampler_warp_start, c.ablation};
    for (std::size_t k = 0; k < n; ++k) {
      const auto [di, si] = entries[k * entries.size() / n];
      const auto item = detail::make_train_item(
          used[di].samples[si], c, detail::stream_seed(c.seed, detail::fusion_stream, k), false);
      g.seed = detail::stream_seed(c.seed, detail::sample_stream, k);
      const Generation gen = synthesize(item.prep.left, item.prep.disparity, g, m);
      fs.push_back({gen.generated, gen.warped, gen.mask, *item.prep.right});
    }
    auto fit = train_fusion(fs, c.train.fusion_steps, c.train.fusion_lr,
                            detail::stream_seed(c.seed, detail::fusion_stream, n));
    m.fusion = fit.params;
    out.fusion_loss = std::move(fit.loss);
  }
  return out;
}

/// Mean dual loss of a model on one prepared pair over a fixed grid of
/// timesteps (every t, `draws` noise draws each); alpha only weights `total`.
inline LossReport evaluate_dual_loss(const Model& m, const Image& left, const Image& right,
                                     const Disparity& d, double alpha, int draws,
                                     std::uint64_t seed, const AblationConfig& ablation = {}) {
  require(draws >= 1, ErrorKind::domain, "evaluate_dual_loss: draws must be >= 1");
  const NoiseSchedule sched = noise_schedule(m);
  const auto w = warp_image(left, d);
  const SampleConditions cond = build_conditions(left, w.image, d, m.codec_factor, m.fourier, ablation);
  const Field z0 = codec_encode(right, m.codec_factor);
  Rng rng(seed);
  LossReport mean;
  mean.alpha = alpha;
  const double inv = 1.0 / (static_cast<double>(draws) * sched.steps());
  for (int t = 1; t <= sched.steps(); ++t)
    for (int k = 0; k < draws; ++k) {
      Field eps(z0.h, z0.w, z0.c);
      for (double& v : eps.v) v = rng.normal();
      DenoiserInput in{add_noise(z0, eps, t, sched), t, sched.steps(), cond.cond_warp,
                       cond.cond_embed, cond.ref_image, cond.ref_embed};
      const LossReport r = dual_loss(eps, denoiser_forward(m.denoiser, in), z0, in.z_t, t, sched,
                                     alpha, m.codec_factor);
      mean.latent += r.latent * inv;
      mean.pixel += r.pixel * inv;
    }
  mean.total = mean.latent + alpha * mean.pixel;
  return mean;
}

inline std::vector<TrainSet> load_train_sets(const std::vector<DatasetConfig>& configs) {
  std::vector<TrainSet> sets;
  for (const auto& dc : configs) {
    const DatasetSpec spec = scan_dataset(dc);
    require(spec.paired, ErrorKind::domain, "dataset " + dc.name + " has no right/ views to train on");
    TrainSet s{dc.name, {}};
    for (std::size_t k = 0; k < spec.size(); ++k) s.samples.push_back(load_sample(spec, k));
    sets.push_back(std::move(s));
  }
  return sets;
}

inline std::string loss_csv(const TrainResult& r) {
  std::string s = "step,total,latent,pixel\n";
  char line[128];
  for (std::size_t k = 0; k < r.loss.size(); ++k) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", k, r.loss[k].total,
                  r.loss[k].latent, r.loss[k].pixel);
    s += line;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation reports

struct PairReport {
  std::string name;
  std::vector<MetricReport> metrics;
};

struct AggregateReport {
  MetricReport mean;  // value = mean over pairs, count = number of pairs
  double min = 0.0, max = 0.0;
};

struct EvalReport {
  std::string kind;
  std::vector<PairReport> pairs;
  std::vector<AggregateReport> aggregate;
};

/// Recomputes aggregates from the per-pair records, keyed by metric name and
/// in first-seen order.
inline void aggregate(EvalReport& r) {
  require(!r.pairs.empty(), ErrorKind::domain, "evaluation: no pairs");
  r.aggregate.clear();
  for (const auto& pair : r.pairs)
    for (const auto& m : pair.metrics) {
      auto it = std::find_if(r.aggregate.begin(), r.aggregate.end(),
                             [&](const AggregateReport& a) { return a.mean.name == m.name; });
      if (it == r.aggregate.end()) {
        r.aggregate.push_back({{m.name, 0.0, 0, m.params}, m.value, m.value});
        it = r.aggregate.end() - 1;
      }
      it->mean.value += m.value;
      ++it->mean.count;
      it->min = std::min(it->min, m.value);
      it->max = std::max(it->max, m.value);
    }
  for (auto& a : r.aggregate) a.mean.value /= static_cast<double>(a.mean.count);
}

struct ImagePair {
  std::string name;
  Image pred, ref;
};

struct DisparityPair {
  std::string name;
  Disparity pred, gt;
};

inline EvalReport eval_generation(const std::vector<ImagePair>& pairs) {
  require(!pairs.empty(), ErrorKind::domain, "eval_generation: no pairs");
  EvalReport r{"generation", {}, {}};
  const SsimOptions so;
  for (const auto& p : pairs) {
    require(p.pred.same_shape(p.ref), ErrorKind::shape,
            "eval_generation: dims differ for pair " + p.name);
    const double s = ssim(p.pred, p.ref, so);
    const std::size_t windows = (p.pred.height - so.window + 1) * (p.pred.width - so.window + 1);
    r.pairs.push_back({p.name,
                       {{"psnr", psnr(p.pred, p.ref), p.pred.values.size(), {{"peak", 1.0}}},
                        {"ssim", s, windows,
                         {{"window", static_cast<double>(so.window)},
                          {"sigma", so.sigma},
                          {"k1", so.k1},
                          {"k2", so.k2}}}}});
  }
  aggregate(r);
  return r;
}

inline EvalReport eval_stereo(const std::vector<DisparityPair>& pairs, D1Mode mode = D1Mode::both,
                              std::vector<double> thresholds = {1.0, 2.0, 3.0}) {
  require(!pairs.empty(), ErrorKind::domain, "eval_stereo: no pairs");
  EvalReport r{"stereo", {}, {}};
  for (const auto& p : pairs) {
    require(p.pred.height == p.gt.height && p.pred.width == p.gt.width, ErrorKind::shape,
            "eval_stereo: dims differ for pair " + p.name);
    const std::size_t n = valid_count(p.gt);
    PairReport pr{p.name, {}};
    pr.metrics.push_back({"epe", epe(p.pred, p.gt), n, {}});
    pr.metrics.push_back({"d1_all", d1_all(p.pred, p.gt, mode), n,
                          {{"abs_px", 3.0}, {"rel", 0.05}, {"mode_and", mode == D1Mode::both ? 1.0 : 0.0}}});
    for (double t : thresholds) {
      char name[32];
      std::snprintf(name, sizeof name, "bad_%gpx", t);
      pr.metrics.push_back({name, bad_pixel(p.pred, p.gt, t), n, {{"threshold_px", t}}});
    }
    r.pairs.push_back(std::move(pr));
  }
  aggregate(r);
  return r;
}

/// Adds externally computed per-pair scores (e.g. LPIPS):
/// {"metric": "lpips", "values": {"<pair name>": value, ...}}.
inline void attach_external(EvalReport& r, const Json& ext) {
  try {
    const std::string metric = ext.at("metric");
    const Json& values = ext.at("values");
    for (auto& p : r.pairs) {
      require(values.contains(p.name), ErrorKind::format,
              "external report: no " + metric + " value for pair " + p.name);
      p.metrics.push_back({metric, values.at(p.name).get<double>(), 1, {{"external", 1.0}}});
    }
  } catch (const Json::exception& e) {
    fail(ErrorKind::format, std::string("external report: ") + e.what());
  }
  aggregate(r);
}

inline Json metric_json(const MetricReport& m) {
  Json params = Json::object();
  for (const auto& [k, v] : m.params) params[k] = v;
  return {{"metric", m.name}, {"value", m.value}, {"count", m.count}, {"params", params}};
}

inline Json report_to_json(const EvalReport& r) {
  Json pairs = Json::array();
  for (const auto& p : r.pairs) {
    Json ms = Json::array();
    for (const auto& m : p.metrics) ms.push_back(metric_json(m));
    pairs.push_back({{"name", p.name}, {"metrics", ms}});
  }
  Json agg = Json::array();
  for (const auto& a : r.aggregate) {
    Json j = metric_json(a.mean);
    j["min"] = a.min;
    j["max"] = a.max;
    j["minus"] = a.mean.value - a.min;
    j["plus"] = a.max - a.mean.value;
    agg.push_back(j);
  }
  return {{"kind", r.kind}, {"pairs", pairs}, {"aggregate", agg}};
}

}  // namespace genstereo
