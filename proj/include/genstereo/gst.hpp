#pragma once

#include "genstereo/bytes.hpp"
#include "genstereo/tensor.hpp"

namespace genstereo {

// GST1 tensor stream: "GST1", rank (u32 LE), dims (u32 LE each), then
// row-major float32 LE payload. Size is 8 + 4*rank + 4*count bytes.

inline Bytes gst_encode(const Tensor& t) {
  require(t.rank() >= 1 && t.rank() <= Tensor::max_rank, ErrorKind::domain,
          "gst: rank must be 1..4");
  Bytes out;
  out.reserve(8 + 4 * t.rank() + 4 * t.size());
  detail::append(out, "GST1");
  detail::append_u32_le(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.dims()) {
    require(d <= UINT32_MAX, ErrorKind::domain, "gst: extent exceeds u32");
    detail::append_u32_le(out, static_cast<std::uint32_t>(d));
  }
  for (float v : t.data()) detail::append_f32(out, v, true);
  return out;
}

inline Tensor gst_decode(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 8, ErrorKind::length, "gst: stream shorter than header");
  require(std::equal(bytes.begin(), bytes.begin() + 4, "GST1"), ErrorKind::format,
          "gst: bad magic");
  const std::uint32_t rank = detail::load_u32_le(bytes.data() + 4);
  require(rank >= 1 && rank <= Tensor::max_rank, ErrorKind::format,
          "gst: rank " + std::to_string(rank) + " outside 1..4");
  require(bytes.size() >= 8 + 4 * std::size_t{rank}, ErrorKind::length,
          "gst: truncated dims");
  std::vector<std::size_t> dims(rank);
  std::size_t count = 1;
  const std::size_t payload = bytes.size() - 8 - 4 * rank;
  for (std::uint32_t r = 0; r < rank; ++r) {
    dims[r] = detail::load_u32_le(bytes.data() + 8 + 4 * r);
    // Overflow-safe running bound against the bytes actually present.
    if (dims[r] != 0 && count > payload / 4 / dims[r] + 1)
      fail(ErrorKind::length, "gst: dims " + dims_string(dims) + " exceed payload");
    count *= dims[r];
  }
  require(payload == 4 * count, ErrorKind::length,
          "gst: payload " + std::to_string(payload) + " bytes, dims " +
              dims_string(dims) + " need " + std::to_string(4 * count));
  std::vector<float> data(count);
  const std::uint8_t* p = bytes.data() + 8 + 4 * rank;
  for (std::size_t k = 0; k < count; ++k) data[k] = detail::load_f32(p + 4 * k, true);
  return Tensor(std::move(dims), std::move(data));
}

}  // namespace genstereo
