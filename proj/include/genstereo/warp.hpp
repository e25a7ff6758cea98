#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string_view>

#include "genstereo/rng.hpp"
#include "genstereo/tensor.hpp"

namespace genstereo {

struct WarpResult {
  Tensor warped;  // same dims as the source; zero where mask == 0
  Mask mask;      // 1 where at least one source pixel landed
};

/// Forward-splats a left-view tensor ([h,w] or [h,w,c]) into the right view.
/// Source (i, j) lands on column round(j - d(i,j)) of the same row (half away
/// from zero). Colliding sources are resolved by the larger disparity, ties by
/// the smaller source column. Invalid disparities do not splat.
inline WarpResult forward_warp(const Tensor& src, const Disparity& d) {
  require(src.rank() == 2 || src.rank() == 3, ErrorKind::shape,
          "forward_warp: source must be [h,w] or [h,w,c]");
  const std::size_t h = src.dim(0), w = src.dim(1);
  const std::size_t c = src.rank() == 3 ? src.dim(2) : 1;
  require(d.height == h && d.width == w, ErrorKind::shape,
          "forward_warp: disparity " + std::to_string(d.height) + "x" +
              std::to_string(d.width) + " vs source " + dims_string(src.dims()));

  WarpResult r{Tensor(src.dims()), Mask(h, w)};
  std::vector<std::ptrdiff_t> winner(w);
  std::vector<float> best(w);
  for (std::size_t i = 0; i < h; ++i) {
    std::fill(winner.begin(), winner.end(), -1);
    for (std::size_t j = 0; j < w; ++j) {
      if (!d.is_valid(i, j)) continue;
      const float disp = d(i, j);
      require(std::isfinite(disp) && disp >= 0.0f, ErrorKind::domain,
              "forward_warp: negative or non-finite disparity");
      const double target = std::round(static_cast<double>(j) - static_cast<double>(disp));
      if (target < 0.0 || target >= static_cast<double>(w)) continue;
      const auto t = static_cast<std::size_t>(target);
      // Ascending j with strict '>' keeps the smaller column on ties.
      if (winner[t] < 0 || disp > best[t]) {
        winner[t] = static_cast<std::ptrdiff_t>(j);
        best[t] = disp;
      }
    }
    for (std::size_t t = 0; t < w; ++t) {
      if (winner[t] < 0) continue;
      r.mask(i, t) = 1;
      const auto sj = static_cast<std::size_t>(winner[t]);
      for (std::size_t k = 0; k < c; ++k)
        r.warped[(i * w + t) * c + k] = src[(i * w + sj) * c + k];
    }
  }
  return r;
}

struct ImageWarp {
  Image image;
  Mask mask;
};

inline ImageWarp warp_image(const Image& img, const Disparity& d) {
  WarpResult r = forward_warp(img.to_tensor(), d);
  Image out(img.height, img.width, img.channels);
  out.values = std::move(r.warped.values());
  return {std::move(out), std::move(r.mask)};
}

struct DropoutDraw {
  double ratio = 0.0;  // probability that a pixel is dropped
  Mask mask;           // 0 = dropped
};

/// Draws r ~ U(0,1) (unless forced) and then drops each pixel independently
/// with probability r. Fully determined by the seed.
inline DropoutDraw dropout_draw(std::size_t h, std::size_t w, std::uint64_t seed,
                                std::optional<double> forced_ratio = std::nullopt) {
  Rng rng(seed);
  const double drawn = rng.uniform();
  const double r = forced_ratio.value_or(drawn);
  require(r >= 0.0 && r <= 1.0, ErrorKind::domain, "dropout_draw: ratio outside [0,1]");
  DropoutDraw out{r, Mask(h, w, 1)};
  for (auto& v : out.mask.values) v = rng.uniform() < r ? 0 : 1;
  return out;
}

enum class CombineMode { logical_or, logical_and };

inline CombineMode parse_combine_mode(std::string_view s) {
  if (s == "or") return CombineMode::logical_or;
  if (s == "and") return CombineMode::logical_and;
  fail(ErrorKind::domain, "combine mode must be 'or' or 'and', got '" + std::string(s) + "'");
}

inline const char* to_string(CombineMode m) {
  return m == CombineMode::logical_or ? "or" : "and";
}

inline Mask combine_masks(const Mask& warp_mask, const Mask& rand_mask, CombineMode mode) {
  require(warp_mask.height == rand_mask.height && warp_mask.width == rand_mask.width,
          ErrorKind::shape, "combine_masks: dims differ");
  Mask out(warp_mask.height, warp_mask.width);
  for (std::size_t k = 0; k < out.values.size(); ++k)
    out.values[k] = mode == CombineMode::logical_or
                        ? (warp_mask.values[k] | rand_mask.values[k])
                        : (warp_mask.values[k] & rand_mask.values[k]);
  return out;
}

/// Zeroes every channel where the mask is 0.
inline Image apply_mask(Image img, const Mask& m) {
  require(img.height == m.height && img.width == m.width, ErrorKind::shape,
          "apply_mask: dims differ");
  for (std::size_t p = 0; p < m.values.size(); ++p)
    if (!m.values[p])
      for (std::size_t k = 0; k < img.channels; ++k) img.values[p * img.channels + k] = 0.0f;
  return img;
}

}  // namespace genstereo
