#pragma once

#include <vector>

#include "genstereo/nn.hpp"

namespace genstereo {

/// Single 3x3 convolution over concat(I_gen, I_warp, M) -> one logit.
struct FusionParams {
  Conv3x3 conv{7, 1};

  static FusionParams zeros() { return {}; }

  template <class Fn>
  void visit(Fn&& fn) {
    fn("fusion.weight", conv.weight);
    fn("fusion.bias", conv.bias);
  }
  template <class Fn>
  void visit(Fn&& fn) const {
    const_cast<FusionParams*>(this)->visit(
        [&](const std::string& n, std::vector<double>& v) { fn(n, std::as_const(v)); });
  }
};

namespace detail {

inline void check_fusion_inputs(const Image& gen, const Image& warp, const Mask& m) {
  require(gen.channels == 3 && warp.channels == 3, ErrorKind::shape,
          "fusion: images must have 3 channels");
  require(gen.same_shape(warp) && m.height == gen.height && m.width == gen.width,
          ErrorKind::shape, "fusion: dims differ between I_gen, I_warp and M");
}

inline Field fusion_input(const Image& gen, const Image& warp, const Mask& m) {
  check_fusion_inputs(gen, warp, m);
  Field x(gen.height, gen.width, 7);
  for (std::size_t p = 0; p < gen.pixels(); ++p) {
    for (std::size_t k = 0; k < 3; ++k) {
      x.v[p * 7 + k] = gen.values[p * 3 + k];
      x.v[p * 7 + 3 + k] = warp.values[p * 3 + k];
    }
    x.v[p * 7 + 6] = m.values[p];
  }
  return x;
}

}  // namespace detail

/// Per-pixel weights W = sigmoid(conv3x3(concat(I_gen, I_warp, M)) + b),
/// zero padding at the border. Returns an [h, w, 1] field in (0, 1).
inline Field fusion_weights(const Image& gen, const Image& warp, const Mask& m,
                            const FusionParams& p) {
  Field w = p.conv.forward(detail::fusion_input(gen, warp, m));
  for (double& v : w.v) v = sigmoid(v);
  return w;
}

/// out = M*W*I_warp + (1 - M*W)*I_gen, mask and weight broadcast over channels.
inline Image fuse(const Image& gen, const Image& warp, const Mask& m, const Field& w) {
  detail::check_fusion_inputs(gen, warp, m);
  require(w.h == gen.height && w.w == gen.width && w.c == 1, ErrorKind::shape,
          "fuse: weight map dims differ");
  Image out(gen.height, gen.width, 3);
  for (std::size_t p = 0; p < gen.pixels(); ++p) {
    const double mw = static_cast<double>(m.values[p]) * w.v[p];
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t q = p * 3 + k;
      const double v = mw * warp.values[q] + (1.0 - mw) * gen.values[q];
      out.values[q] = std::clamp(static_cast<float>(v), 0.0f, 1.0f);
    }
  }
  return out;
}

struct FusionSample {
  Image gen, warp;
  Mask mask;
  Image target;
};

/// Mean squared error of fuse() against the targets, over all samples,
/// pixels and channels; fills `grad` when given.
inline double fusion_loss(const std::vector<FusionSample>& samples, const FusionParams& p,
                          FusionParams* grad = nullptr) {
  require(!samples.empty(), ErrorKind::domain, "fusion: empty sample list");
  std::size_t n = 0;
  for (const auto& s : samples) n += s.gen.values.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) *grad = FusionParams::zeros();

  double loss = 0.0;
  for (const auto& s : samples) {
    require(s.target.same_shape(s.gen), ErrorKind::shape, "fusion: target dims differ");
    const Field x = detail::fusion_input(s.gen, s.warp, s.mask);
    Field logit = p.conv.forward(x);
    Field d_logit(logit.h, logit.w, 1);
    for (std::size_t q = 0; q < logit.v.size(); ++q) {
      const double w = sigmoid(logit.v[q]);
      const double m = s.mask.values[q];
      double d_w = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t r = q * 3 + k;
        const double diff = static_cast<double>(s.warp.values[r]) - s.gen.values[r];
        const double out = s.gen.values[r] + m * w * diff;
        const double e = out - s.target.values[r];
        loss += e * e * inv_n;
        d_w += 2.0 * e * inv_n * m * diff;
      }
      d_logit.v[q] = d_w * w * (1.0 - w);
    }
    if (grad) p.conv.backward(x, d_logit, grad->conv);
  }
  return loss;
}

struct FusionTraining {
  FusionParams params;
  std::vector<double> loss;  // loss before each step, then the final loss
};

/// Plain gradient descent on the fusion MSE. The kernel starts from small
/// seeded noise, the bias from zero.
inline FusionTraining train_fusion(const std::vector<FusionSample>& samples, int steps,
                                   double lr = 0.05, std::uint64_t seed = 0,
                                   const FusionParams* init = nullptr) {
  require(!samples.empty(), ErrorKind::domain, "train_fusion: empty sample list");
  require(steps >= 0, ErrorKind::domain, "train_fusion: negative step count");
  FusionTraining out;
  if (init) {
    out.params = *init;
  } else {
    Rng rng(seed);
    for (double& v : out.params.conv.weight) v = 0.01 * rng.normal();
  }
  FusionParams grad;
  for (int it = 0; it < steps; ++it) {
    out.loss.push_back(fusion_loss(samples, out.params, &grad));
    for (std::size_t k = 0; k < grad.conv.weight.size(); ++k)
      out.params.conv.weight[k] -= lr * grad.conv.weight[k];
    out.params.conv.bias[0] -= lr * grad.conv.bias[0];
  }
  out.loss.push_back(fusion_loss(samples, out.params));
  return out;
}

}  // namespace genstereo
