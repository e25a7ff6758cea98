#pragma once

#include <algorithm>
#include <cmath>

#include "genstereo/tensor.hpp"

namespace genstereo {

/// Bilinear resize with pixel-center alignment: output index i samples the
/// source at (i + 0.5) * src/dst - 0.5, clamped to the border. Results are
/// clamped to [0,1].
inline Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
  require(out_h >= 1 && out_w >= 1, ErrorKind::domain,
          "resize_bilinear: target extent must be >= 1");
  require(img.height >= 1 && img.width >= 1, ErrorKind::domain,
          "resize_bilinear: empty source");
  if (out_h == img.height && out_w == img.width) return img;

  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t n_out, std::size_t n_in, double scale) {
    std::vector<Tap> t(n_out);
    const double last = static_cast<double>(n_in - 1);
    for (std::size_t i = 0; i < n_out; ++i) {
      const double pos =
          std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0, last);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      t[i] = {lo, std::min(lo + 1, n_in - 1), pos - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(out_h, img.height, sy);
  const auto tx = taps(out_w, img.width, sx);

  Image out(out_h, out_w, img.channels);
  for (std::size_t i = 0; i < out_h; ++i)
    for (std::size_t j = 0; j < out_w; ++j)
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = (1.0 - tx[j].frac) * img(ty[i].lo, tx[j].lo, c) +
                           tx[j].frac * img(ty[i].lo, tx[j].hi, c);
        const double bot = (1.0 - tx[j].frac) * img(ty[i].hi, tx[j].lo, c) +
                           tx[j].frac * img(ty[i].hi, tx[j].hi, c);
        const double v = (1.0 - ty[i].frac) * top + ty[i].frac * bot;
        out(i, j, c) = std::clamp(static_cast<float>(v), 0.0f, 1.0f);
      }
  return out;
}

/// Nearest-neighbour resampling of a disparity map. Valid values are scaled
/// by out_w / width because disparities are horizontal pixel offsets.
inline Disparity disparity_rescale(const Disparity& d, std::size_t out_h,
                                   std::size_t out_w) {
  require(out_h >= 1 && out_w >= 1, ErrorKind::domain,
          "disparity_rescale: target extent must be >= 1");
  require(d.height >= 1 && d.width >= 1, ErrorKind::domain,
          "disparity_rescale: empty source");
  const double scale = static_cast<double>(out_w) / static_cast<double>(d.width);
  auto nearest = [](std::size_t i, std::size_t n_out, std::size_t n_in) {
    const double pos = (static_cast<double>(i) + 0.5) *
                       static_cast<double>(n_in) / static_cast<double>(n_out);
    return std::min(static_cast<std::size_t>(pos), n_in - 1);
  };
  Disparity out(out_h, out_w);
  for (std::size_t i = 0; i < out_h; ++i) {
    const std::size_t si = nearest(i, out_h, d.height);
    for (std::size_t j = 0; j < out_w; ++j) {
      const std::size_t sj = nearest(j, out_w, d.width);
      if (d.is_valid(si, sj))
        out(i, j) = static_cast<float>(static_cast<double>(d(si, sj)) * scale);
      else
        out.invalidate(i, j);
    }
  }
  return out;
}

/// Maps valid disparities to [0,1] by their maximum, then scales by
/// gamma * width so the largest disparity spans that fraction of the image.
inline Disparity normalize_and_scale(const Disparity& d, double gamma,
                                     std::size_t width) {
  require(gamma >= 0.0 && gamma <= 1.0, ErrorKind::domain,
          "normalize_and_scale: gamma must lie in [0,1]");
  require(d.valid.count() > 0, ErrorKind::degenerate,
          "normalize_and_scale: no valid disparity");
  const double max_d = d.max_valid();
  require(max_d > 0.0, ErrorKind::degenerate,
          "normalize_and_scale: maximum disparity is zero");
  const double target = gamma * static_cast<double>(width);
  Disparity out = d;
  for (std::size_t k = 0; k < out.values.size(); ++k)
    if (out.valid.values[k])
      out.values[k] = static_cast<float>(static_cast<double>(d.values[k]) / max_d * target);
  return out;
}

/// Clamps valid disparities to an upper bound (e.g. a stereo network's
/// maximum search range).
inline Disparity clamp_disparity(Disparity d, float max_disparity) {
  for (float& v : d.values) v = std::min(v, max_disparity);
  return d;
}

}  // namespace genstereo
