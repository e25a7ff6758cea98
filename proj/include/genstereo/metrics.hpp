#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "genstereo/tensor.hpp"

namespace genstereo {

struct MetricReport {
  std::string name;
  double value = 0.0;
  std::size_t count = 0;  // pixels (or windows) that contributed
  std::map<std::string, double> params;
};

inline constexpr double psnr_cap_db = 99.0;

inline double mse(const Image& a, const Image& b) {
  require(a.same_shape(b), ErrorKind::shape, "mse: image dims differ");
  require(!a.values.empty(), ErrorKind::degenerate, "mse: empty image");
  double sum = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    const double e = static_cast<double>(a.values[k]) - b.values[k];
    sum += e * e;
  }
  return sum / static_cast<double>(a.values.size());
}

/// 10 log10(peak^2 / MSE), capped at 99 dB (identical images).
inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
  require(peak > 0.0, ErrorKind::domain, "psnr: peak must be positive");
  const double m = mse(a, b);
  if (m == 0.0) return psnr_cap_db;
  return std::min(psnr_cap_db, 10.0 * std::log10(peak * peak / m));
}

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

inline std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double center = (static_cast<double>(size) - 1.0) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double x = static_cast<double>(i) - center;
    g[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

/// Mean of channels for RGB, identity for gray; double precision.
inline std::vector<double> to_gray(const Image& img) {
  std::vector<double> g(img.pixels());
  for (std::size_t p = 0; p < g.size(); ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < img.channels; ++k) s += img.values[p * img.channels + k];
    g[p] = s / static_cast<double>(img.channels);
  }
  return g;
}

/// Gaussian-weighted SSIM averaged over every position where the whole
/// window fits inside the image.
inline double ssim(const Image& a, const Image& b, const SsimOptions& o = {}) {
  require(a.same_shape(b), ErrorKind::shape, "ssim: image dims differ");
  require(o.window >= 1 && a.height >= o.window && a.width >= o.window, ErrorKind::domain,
          "ssim: image smaller than the " + std::to_string(o.window) + "px window");
  const std::vector<double> x = to_gray(a), y = to_gray(b);
  const std::vector<double> g = gaussian_window(o.window, o.sigma);
  const std::size_t h = a.height, w = a.width, n = o.window;
  const std::size_t oh = h - n + 1, ow = w - n + 1;

  // Separable filtering of x, y, x^2, y^2, xy: horizontal pass, then vertical.
  constexpr std::size_t kMoments = 5;
  std::vector<double> rows(kMoments * h * ow, 0.0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double acc[kMoments] = {};
      for (std::size_t t = 0; t < n; ++t) {
        const double xv = x[i * w + j + t], yv = y[i * w + j + t], gw = g[t];
        acc[0] += gw * xv;
        acc[1] += gw * yv;
        acc[2] += gw * xv * xv;
        acc[3] += gw * yv * yv;
        acc[4] += gw * xv * yv;
      }
      for (std::size_t m = 0; m < kMoments; ++m) rows[(m * h + i) * ow + j] = acc[m];
    }

  const double c1 = (o.k1 * o.peak) * (o.k1 * o.peak);
  const double c2 = (o.k2 * o.peak) * (o.k2 * o.peak);
  double total = 0.0;
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double mom[kMoments] = {};
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t m = 0; m < kMoments; ++m) mom[m] += g[t] * rows[(m * h + i + t) * ow + j];
      const double mx = mom[0], my = mom[1];
      const double vx = mom[2] - mx * mx, vy = mom[3] - my * my, cxy = mom[4] - mx * my;
      total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return total / static_cast<double>(oh * ow);
}

// ---------------------------------------------------------------------------
// Stereo metrics, evaluated on pixels where the ground truth is valid.

namespace detail {

template <class Fn>
std::size_t for_each_valid(const Disparity& pred, const Disparity& gt, const char* name, Fn&& fn) {
  require(pred.height == gt.height && pred.width == gt.width, ErrorKind::shape,
          std::string(name) + ": disparity dims differ");
  std::size_t n = 0;
  for (std::size_t k = 0; k < gt.values.size(); ++k) {
    if (!gt.valid.values[k]) continue;
    fn(static_cast<double>(pred.values[k]), static_cast<double>(gt.values[k]));
    ++n;
  }
  require(n > 0, ErrorKind::degenerate, std::string(name) + ": no valid ground-truth pixels");
  return n;
}

}  // namespace detail

/// Mean absolute disparity error.
inline double epe(const Disparity& pred, const Disparity& gt) {
  double sum = 0.0;
  const std::size_t n = detail::for_each_valid(
      pred, gt, "epe", [&](double p, double g) { sum += std::abs(p - g); });
  return sum / static_cast<double>(n);
}

enum class D1Mode { both, either };  // "and" (KITTI) / "or"

/// Percentage of pixels with error > 3 px and (or) > 5% of the true disparity.
inline double d1_all(const Disparity& pred, const Disparity& gt, D1Mode mode = D1Mode::both) {
  std::size_t bad = 0;
  const std::size_t n = detail::for_each_valid(pred, gt, "d1_all", [&](double p, double g) {
    const double e = std::abs(p - g);
    const bool abs_bad = e > 3.0, rel_bad = e > 0.05 * g;
    if (mode == D1Mode::both ? (abs_bad && rel_bad) : (abs_bad || rel_bad)) ++bad;
  });
  return 100.0 * static_cast<double>(bad) / static_cast<double>(n);
}

/// Percentage of pixels with error > n px.
inline double bad_pixel(const Disparity& pred, const Disparity& gt, double threshold) {
  std::size_t bad = 0;
  const std::size_t n = detail::for_each_valid(pred, gt, "bad_pixel", [&](double p, double g) {
    if (std::abs(p - g) > threshold) ++bad;
  });
  return 100.0 * static_cast<double>(bad) / static_cast<double>(n);
}

inline std::size_t valid_count(const Disparity& gt) { return gt.valid.count(); }

}  // namespace genstereo
