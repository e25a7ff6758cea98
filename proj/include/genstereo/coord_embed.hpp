#pragma once

#include <cmath>
#include <numbers>

#include "genstereo/tensor.hpp"

namespace genstereo {

/// Normalized pixel coordinates, [h, w, 2] with channel 0 = x, 1 = y, each
/// spanning [-1, 1] from the first to the last row/column.
inline Tensor canonical_grid(std::size_t h, std::size_t w) {
  require(h >= 2 && w >= 2, ErrorKind::domain,
          "canonical_grid: extents must be >= 2");
  Tensor g({h, w, 2});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      g.at(i, j, 0) = static_cast<float>(2.0 * static_cast<double>(j) /
                                             static_cast<double>(w - 1) - 1.0);
      g.at(i, j, 1) = static_cast<float>(2.0 * static_cast<double>(i) /
                                             static_cast<double>(h - 1) - 1.0);
    }
  return g;
}

struct FourierOptions {
  std::size_t frequencies = 4;
  bool include_raw = false;  // append the raw (x, y) after the sinusoids
};

inline std::size_t embedding_channels(const FourierOptions& o) {
  return 4 * o.frequencies + (o.include_raw ? 2 : 0);
}

/// Fourier features of a coordinate grid. Channel layout per pixel:
///   x: sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(F-1) pi x), cos(2^(F-1) pi x)
///   y: the same for y
///   optional raw x, y
inline Tensor fourier_encode(const Tensor& grid, const FourierOptions& opt = {}) {
  require(grid.rank() == 3 && grid.dim(2) == 2, ErrorKind::shape,
          "fourier_encode: grid must be [h,w,2], got " + dims_string(grid.dims()));
  require(opt.frequencies >= 1, ErrorKind::domain,
          "fourier_encode: need at least one frequency");
  const std::size_t h = grid.dim(0), w = grid.dim(1), F = opt.frequencies;
  Tensor out({h, w, embedding_channels(opt)});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      std::size_t ch = 0;
      for (std::size_t axis = 0; axis < 2; ++axis) {
        const double u = grid.at(i, j, axis);
        for (std::size_t k = 0; k < F; ++k) {
          const double arg = std::ldexp(std::numbers::pi * u, static_cast<int>(k));
          out.at(i, j, ch++) = static_cast<float>(std::sin(arg));
          out.at(i, j, ch++) = static_cast<float>(std::cos(arg));
        }
      }
      if (opt.include_raw) {
        out.at(i, j, ch++) = grid.at(i, j, 0);
        out.at(i, j, ch++) = grid.at(i, j, 1);
      }
    }
  return out;
}

}  // namespace genstereo
