#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "genstereo/error.hpp"

namespace genstereo {

inline std::string dims_string(std::span<const std::size_t> dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

/// Dense row-major float32 array of rank 1 to 4.
class Tensor {
 public:
  static constexpr std::size_t max_rank = 4;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> dims, float fill = 0.0f)
      : dims_(std::move(dims)) {
    check_rank();
    data_.assign(count(dims_), fill);
  }

  Tensor(std::vector<std::size_t> dims, std::vector<float> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    check_rank();
    require(data_.size() == count(dims_), ErrorKind::length,
            "tensor data length " + std::to_string(data_.size()) +
                " does not match dims " + dims_string(dims_));
  }

  static std::size_t count(std::span<const std::size_t> dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           std::multiplies<>());
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& values() noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 [h, w, c] accessor.
  float& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  float at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_rank() const {
    require(!dims_.empty() && dims_.size() <= max_rank, ErrorKind::domain,
            "tensor rank must be 1..4, got " + std::to_string(dims_.size()));
  }

  std::vector<std::size_t> dims_;
  std::vector<float> data_;
};

/// Binary H x W map; values are exactly 0 or 1.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), values(h * w, fill ? 1 : 0) {}

  std::uint8_t& operator()(std::size_t i, std::size_t j) {
    return values[i * width + j];
  }
  std::uint8_t operator()(std::size_t i, std::size_t j) const {
    return values[i * width + j];
  }

  std::size_t count() const {
    return static_cast<std::size_t>(
        std::count(values.begin(), values.end(), std::uint8_t{1}));
  }
  double mean() const {
    return values.empty() ? 0.0
                          : static_cast<double>(count()) /
                                static_cast<double>(values.size());
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// H x W x C intensities in [0, 1], channels 1 or 3, interleaved.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> values;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : height(h), width(w), channels(c), values(h * w * c, fill) {
    require(c == 1 || c == 3, ErrorKind::domain,
            "image channels must be 1 or 3, got " + std::to_string(c));
  }

  float& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return values[(i * width + j) * channels + k];
  }
  float operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values[(i * width + j) * channels + k];
  }

  std::size_t pixels() const noexcept { return height * width; }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  void clamp01() {
    for (float& v : values) v = std::clamp(v, 0.0f, 1.0f);
  }

  Tensor to_tensor() const {
    return Tensor({height, width, channels}, values);
  }

  static Image from_tensor(const Tensor& t) {
    require(t.rank() == 2 || t.rank() == 3, ErrorKind::shape,
            "image tensor must be rank 2 or 3, got " + dims_string(t.dims()));
    const std::size_t c = t.rank() == 3 ? t.dim(2) : 1;
    Image img(t.dim(0), t.dim(1), c);
    img.values = t.values();
    img.clamp01();
    return img;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Horizontal disparity in pixels with a validity mask for sparse annotation.
/// Invalid pixels hold value 0.
struct Disparity {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;
  Mask valid;

  Disparity() = default;
  Disparity(std::size_t h, std::size_t w, float fill = 0.0f)
      : height(h), width(w), values(h * w, fill), valid(h, w, 1) {}

  float& operator()(std::size_t i, std::size_t j) {
    return values[i * width + j];
  }
  float operator()(std::size_t i, std::size_t j) const {
    return values[i * width + j];
  }
  bool is_valid(std::size_t i, std::size_t j) const {
    return valid(i, j) != 0;
  }

  void invalidate(std::size_t i, std::size_t j) {
    values[i * width + j] = 0.0f;
    valid(i, j) = 0;
  }

  // Non-finite or negative entries become invalid; used when ingesting files
  // whose convention marks missing data with inf or 0.
  static Disparity from_tensor(const Tensor& t, bool zero_is_invalid = false) {
    require(t.rank() == 2 || (t.rank() == 3 && t.dim(2) == 1), ErrorKind::shape,
            "disparity tensor must be [h,w] or [h,w,1], got " +
                dims_string(t.dims()));
    Disparity d(t.dim(0), t.dim(1));
    for (std::size_t k = 0; k < d.values.size(); ++k) {
      const float v = t[k];
      if (!std::isfinite(v) || v < 0.0f || (zero_is_invalid && v == 0.0f)) {
        d.values[k] = 0.0f;
        d.valid.values[k] = 0;
      } else {
        d.values[k] = v;
      }
    }
    return d;
  }

  Tensor to_tensor() const { return Tensor({height, width}, values); }

  float max_valid() const {
    float m = 0.0f;
    for (std::size_t k = 0; k < values.size(); ++k)
      if (valid.values[k]) m = std::max(m, values[k]);
    return m;
  }

  friend bool operator==(const Disparity&, const Disparity&) = default;
};

}  // namespace genstereo
