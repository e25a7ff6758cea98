#pragma once

#include <cctype>
#include <cstdlib>
#include <string>

#include "genstereo/bytes.hpp"
#include "genstereo/tensor.hpp"

namespace genstereo {

// Portable float map. "Pf" is one channel, "PF" three. The scale line's sign
// selects byte order (negative: little endian). Rows are stored bottom-up on
// disk; tensors are top-down, [h, w] for Pf and [h, w, 3] for PF.

namespace detail {

class HeaderCursor {
 public:
  explicit HeaderCursor(std::span<const std::uint8_t> bytes) : b_(bytes) {}

  std::string token() {
    while (pos_ < b_.size() && std::isspace(b_[pos_])) ++pos_;
    std::string t;
    while (pos_ < b_.size() && !std::isspace(b_[pos_]))
      t.push_back(static_cast<char>(b_[pos_++]));
    require(!t.empty(), ErrorKind::format, "pfm: truncated header");
    return t;
  }

  // Exactly one whitespace byte separates the scale token from the payload.
  void single_separator() {
    require(pos_ < b_.size() && std::isspace(b_[pos_]), ErrorKind::format,
            "pfm: missing separator before payload");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline std::size_t parse_extent(const std::string& s) {
  require(!s.empty() && s.size() < 10 &&
              s.find_first_not_of("0123456789") == std::string::npos,
          ErrorKind::format, "pfm: bad extent '" + s + "'");
  const auto v = std::stoull(s);
  require(v > 0, ErrorKind::format, "pfm: zero extent");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

inline Tensor pfm_read(std::span<const std::uint8_t> bytes) {
  detail::HeaderCursor cur(bytes);
  const std::string magic = cur.token();
  require(magic == "Pf" || magic == "PF", ErrorKind::format,
          "pfm: bad magic '" + magic + "'");
  const std::size_t channels = magic == "PF" ? 3 : 1;
  const std::size_t width = detail::parse_extent(cur.token());
  const std::size_t height = detail::parse_extent(cur.token());
  const std::string scale_text = cur.token();
  char* end = nullptr;
  const double scale = std::strtod(scale_text.c_str(), &end);
  require(end && *end == '\0' && std::isfinite(scale) && scale != 0.0,
          ErrorKind::format, "pfm: bad scale '" + scale_text + "'");
  cur.single_separator();
  const bool little = scale < 0.0;

  const std::size_t n = width * height * channels;
  const std::size_t offset = cur.pos();
  require(bytes.size() - offset >= 4 * n, ErrorKind::length,
          "pfm: payload has " + std::to_string(bytes.size() - offset) +
              " bytes, expected " + std::to_string(4 * n));

  std::vector<std::size_t> dims{height, width};
  if (channels == 3) dims.push_back(3);
  Tensor t(dims);
  const std::size_t row = width * channels;
  for (std::size_t i = 0; i < height; ++i) {
    const std::uint8_t* src = bytes.data() + offset + 4 * row * (height - 1 - i);
    for (std::size_t k = 0; k < row; ++k)
      t[i * row + k] = detail::load_f32(src + 4 * k, little);
  }
  return t;
}

// Writes canonical little-endian PFM ("-1.0" scale line).
inline Bytes pfm_write(const Tensor& t) {
  const bool gray = t.rank() == 2 || (t.rank() == 3 && t.dim(2) == 1);
  const bool color = t.rank() == 3 && t.dim(2) == 3;
  require(gray || color, ErrorKind::shape,
          "pfm: tensor must be [h,w], [h,w,1] or [h,w,3], got " +
              dims_string(t.dims()));
  const std::size_t height = t.dim(0), width = t.dim(1);
  const std::size_t row = width * (color ? 3 : 1);
  Bytes out;
  detail::append(out, color ? "PF\n" : "Pf\n");
  detail::append(out, std::to_string(width) + " " + std::to_string(height) + "\n");
  detail::append(out, "-1.0\n");
  out.reserve(out.size() + 4 * t.size());
  for (std::size_t i = height; i-- > 0;)
    for (std::size_t k = 0; k < row; ++k)
      detail::append_f32(out, t[i * row + k], true);
  return out;
}

}  // namespace genstereo
