#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "genstereo/tensor.hpp"

namespace genstereo {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Raw PNG samples before intensity mapping.
struct PngRaster {
  std::size_t height = 0, width = 0, channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

inline PngRaster png_load(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  require(fp != nullptr, ErrorKind::io, "png: cannot open " + path.string());
  png_byte sig[8];
  require(std::fread(sig, 1, 8, fp.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0,
          ErrorKind::format, "png: bad signature in " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  require(png && info, ErrorKind::io, "png: libpng init failed");
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  PngRaster r;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png)))
    fail(ErrorKind::format, "png: decode error in " + path.string());

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  r.width = png_get_image_width(png, info);
  r.height = png_get_image_height(png, info);
  r.channels = png_get_channels(png, info);
  r.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * r.height);
  rows.resize(r.height);
  for (std::size_t i = 0; i < r.height; ++i) rows[i] = buffer.data() + i * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  r.samples.resize(r.height * r.width * r.channels);
  for (std::size_t i = 0; i < r.height; ++i)
    for (std::size_t k = 0; k < r.width * r.channels; ++k) {
      const png_byte* p = rows[i];
      r.samples[i * r.width * r.channels + k] =
          r.bit_depth == 16
              ? static_cast<std::uint16_t>(p[2 * k] << 8 | p[2 * k + 1])
              : p[k];
    }
  return r;
}

inline void png_store(const std::filesystem::path& path, std::size_t height,
                      std::size_t width, std::size_t channels, int bit_depth,
                      const std::vector<std::uint16_t>& samples) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  require(fp != nullptr, ErrorKind::io, "png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  require(png && info, ErrorKind::io, "png: libpng init failed");
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  const std::size_t bps = bit_depth == 16 ? 2 : 1;
  std::vector<png_byte> buffer(height * width * channels * bps);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (bps == 2) {
      buffer[2 * k] = static_cast<png_byte>(samples[k] >> 8);
      buffer[2 * k + 1] = static_cast<png_byte>(samples[k] & 0xff);
    } else {
      buffer[k] = static_cast<png_byte>(samples[k]);
    }
  }
  std::vector<png_bytep> rows(height);
  for (std::size_t i = 0; i < height; ++i)
    rows[i] = buffer.data() + i * width * channels * bps;

  if (setjmp(png_jmpbuf(png)))
    fail(ErrorKind::io, "png: encode error for " + path.string());
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
}

}  // namespace detail

/// Reads an 8- or 16-bit PNG as intensities in [0,1]. Alpha is dropped.
inline Image read_png(const std::filesystem::path& path) {
  const auto r = detail::png_load(path);
  const float peak = r.bit_depth == 16 ? 65535.0f : 255.0f;
  Image img(r.height, r.width, r.channels);
  for (std::size_t k = 0; k < r.samples.size(); ++k)
    img.values[k] = static_cast<float>(r.samples[k]) / peak;
  return img;
}

inline void write_png(const std::filesystem::path& path, const Image& img,
                      int bit_depth = 8) {
  require(bit_depth == 8 || bit_depth == 16, ErrorKind::domain,
          "png: bit depth must be 8 or 16");
  const float peak = bit_depth == 16 ? 65535.0f : 255.0f;
  std::vector<std::uint16_t> samples(img.values.size());
  for (std::size_t k = 0; k < samples.size(); ++k)
    samples[k] = static_cast<std::uint16_t>(
        std::lround(std::clamp(img.values[k], 0.0f, 1.0f) * peak));
  detail::png_store(path, img.height, img.width, img.channels, bit_depth, samples);
}

inline void write_mask_png(const std::filesystem::path& path, const Mask& m) {
  std::vector<std::uint16_t> samples(m.values.size());
  for (std::size_t k = 0; k < samples.size(); ++k) samples[k] = m.values[k] ? 255 : 0;
  detail::png_store(path, m.height, m.width, 1, 8, samples);
}

inline Mask read_mask_png(const std::filesystem::path& path) {
  const Image img = read_png(path);
  Mask m(img.height, img.width);
  for (std::size_t p = 0; p < m.values.size(); ++p)
    m.values[p] = img.values[p * img.channels] >= 0.5f ? 1 : 0;
  return m;
}

/// 16-bit disparity PNG, value/256 px; 0 marks missing ground truth.
inline Disparity read_png_disparity16(const std::filesystem::path& path) {
  const auto r = detail::png_load(path);
  require(r.bit_depth == 16 && r.channels == 1, ErrorKind::format,
          "png: disparity file must be 16-bit grayscale: " + path.string());
  Disparity d(r.height, r.width);
  for (std::size_t k = 0; k < r.samples.size(); ++k) {
    if (r.samples[k] == 0) {
      d.values[k] = 0.0f;
      d.valid.values[k] = 0;
    } else {
      d.values[k] = static_cast<float>(r.samples[k]) / 256.0f;
    }
  }
  return d;
}

inline void write_png_disparity16(const std::filesystem::path& path,
                                  const Disparity& d) {
  std::vector<std::uint16_t> samples(d.values.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (!d.valid.values[k]) continue;
    const long v = std::lround(static_cast<double>(d.values[k]) * 256.0);
    samples[k] = static_cast<std::uint16_t>(std::clamp(v, 1L, 65535L));
  }
  detail::png_store(path, d.height, d.width, 1, 16, samples);
}

}  // namespace genstereo
