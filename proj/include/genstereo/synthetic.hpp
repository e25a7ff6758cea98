#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "genstereo/fusion.hpp"
#include "genstereo/rng.hpp"
#include "genstereo/tensor.hpp"

namespace genstereo {

/// Axis-aligned fronto-parallel rectangle in left-view pixel coordinates.
struct SceneRect {
  std::size_t top, left, height, width;
  float disparity;
  float color[3];
};

/// Analytic stereo scene: a textured background plane at one disparity and
/// rectangles in front of it. Both views are rendered from the scene
/// description, so the right view is exact everywhere, including the regions
/// that are occluded in the left view.
struct StereoScene {
  std::size_t height = 64, width = 64;
  float background_disparity = 2.0f;
  std::vector<SceneRect> rects;

  // Background radiance at continuous world column x (left-view pixels).
  static void background(double x, double y, std::size_t w, std::size_t h, float out[3]) {
    const double u = x / static_cast<double>(w), v = y / static_cast<double>(h);
    const double ripple = 0.08 * std::sin(2.0 * std::numbers::pi * (x / 16.0 + y / 32.0));
    out[0] = static_cast<float>(std::clamp(0.2 + 0.5 * u + ripple, 0.0, 1.0));
    out[1] = static_cast<float>(std::clamp(0.3 + 0.4 * v - 0.5 * ripple, 0.0, 1.0));
    out[2] = static_cast<float>(std::clamp(0.7 - 0.4 * u + 0.2 * v, 0.0, 1.0));
  }

  // Rect radiance at rect-local column lx: base color with a soft stripe.
  static void rect_color(const SceneRect& r, double lx, float out[3]) {
    const double stripe = 0.1 * std::cos(2.0 * std::numbers::pi * lx / 8.0);
    for (int k = 0; k < 3; ++k)
      out[k] = static_cast<float>(std::clamp(r.color[k] + stripe, 0.0, 1.0));
  }

  // Renders the view whose pixel column j sees world column j + shift(d).
  // shift = 0 for the left view and d for the right view.
  Image render(bool right) const {
    Image img(height, width, 3);
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        float c[3];
        const double bd = right ? background_disparity : 0.0;
        background(static_cast<double>(j) + bd, static_cast<double>(i), width, height, c);
        float best = -1.0f;
        for (const SceneRect& r : rects) {
          const double x = static_cast<double>(j) + (right ? r.disparity : 0.0);
          if (i < r.top || i >= r.top + r.height) continue;
          if (x < static_cast<double>(r.left) || x >= static_cast<double>(r.left + r.width)) continue;
          if (r.disparity <= best) continue;
          best = r.disparity;
          rect_color(r, x - static_cast<double>(r.left), c);
        }
        for (int k = 0; k < 3; ++k) img(i, j, static_cast<std::size_t>(k)) = c[k];
      }
    return img;
  }

  Image left() const { return render(false); }
  Image right() const { return render(true); }

  /// Dense left-view disparity.
  Disparity disparity() const {
    Disparity d(height, width, background_disparity);
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j)
        for (const SceneRect& r : rects)
          if (i >= r.top && i < r.top + r.height && j >= r.left && j < r.left + r.width)
            d(i, j) = std::max(d(i, j), r.disparity);
    return d;
  }
};

/// 64 x 64 scene: textured gradient background at 2 px and two rectangles
/// at 4 px and 8 px.
inline StereoScene default_scene(std::size_t size = 64) {
  StereoScene s;
  s.height = s.width = size;
  s.background_disparity = 2.0f;
  const std::size_t q = size / 8;
  s.rects.push_back({q, q, 3 * q, 2 * q, 4.0f, {0.85f, 0.25f, 0.2f}});
  s.rects.push_back({4 * q, 4 * q, 3 * q, 3 * q, 8.0f, {0.15f, 0.6f, 0.85f}});
  return s;
}

/// Fusion toy set: I_warp equals the target wherever the mask is set and the
/// generated image is the target plus clipped Gaussian noise. `coverage` is
/// the probability that a pixel is valid in the warp mask.
inline std::vector<FusionSample> fusion_toy_set(std::size_t count, std::size_t h, std::size_t w,
                                                double noise, std::uint64_t seed,
                                                double coverage = 0.9) {
  Rng rng(seed);
  std::vector<FusionSample> out;
  for (std::size_t n = 0; n < count; ++n) {
    FusionSample s{Image(h, w, 3), Image(h, w, 3), Mask(h, w), Image(h, w, 3)};
    for (std::size_t p = 0; p < h * w; ++p) {
      s.mask.values[p] = rng.uniform() < coverage ? 1 : 0;
      for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t q = p * 3 + k;
        const float target = static_cast<float>(rng.uniform(0.1, 0.9));
        s.target.values[q] = target;
        s.warp.values[q] = s.mask.values[p] ? target : 0.0f;
        s.gen.values[q] =
            static_cast<float>(std::clamp(target + noise * rng.normal(), 0.0, 1.0));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace genstereo
