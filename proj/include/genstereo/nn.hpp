#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "genstereo/rng.hpp"
#include "genstereo/tensor.hpp"

namespace genstereo {

/// Double-precision H x W x C field used for latents, features and their
/// gradients. Network math runs in double; persistence goes through Tensor.
struct Field {
  std::size_t h = 0, w = 0, c = 0;
  std::vector<double> v;

  Field() = default;
  Field(std::size_t h_, std::size_t w_, std::size_t c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), v(h_ * w_ * c_, fill) {}

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return v[(i * w + j) * c + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return v[(i * w + j) * c + k];
  }
  std::size_t size() const noexcept { return v.size(); }
  std::size_t pixels() const noexcept { return h * w; }
  bool same_shape(const Field& o) const { return h == o.h && w == o.w && c == o.c; }

  static Field from_tensor(const Tensor& t) {
    require(t.rank() == 3, ErrorKind::shape, "field: tensor must be [h,w,c]");
    Field f(t.dim(0), t.dim(1), t.dim(2));
    for (std::size_t k = 0; k < f.v.size(); ++k) f.v[k] = t[k];
    return f;
  }
  static Field from_image(const Image& img) {
    Field f(img.height, img.width, img.channels);
    for (std::size_t k = 0; k < f.v.size(); ++k) f.v[k] = img.values[k];
    return f;
  }
  Tensor to_tensor() const {
    std::vector<float> data(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) data[k] = static_cast<float>(v[k]);
    return Tensor({h, w, c}, std::move(data));
  }

  friend bool operator==(const Field&, const Field&) = default;
};

/// Channel-wise concatenation of fields with equal spatial extent.
inline Field concat_channels(std::initializer_list<const Field*> parts) {
  const Field& first = **parts.begin();
  std::size_t c = 0;
  for (const Field* p : parts) {
    require(p->h == first.h && p->w == first.w, ErrorKind::shape,
            "concat_channels: spatial extents differ");
    c += p->c;
  }
  Field out(first.h, first.w, c);
  for (std::size_t px = 0; px < first.pixels(); ++px) {
    std::size_t o = 0;
    for (const Field* p : parts)
      for (std::size_t k = 0; k < p->c; ++k) out.v[px * c + o++] = p->v[px * p->c + k];
  }
  return out;
}

/// 3x3 convolution, stride 1, zero padding. Weights are laid out
/// [ky][kx][in][out] so the innermost loop runs over output channels.
struct Conv3x3 {
  std::size_t in = 0, out = 0;
  std::vector<double> weight;  // 9 * in * out
  std::vector<double> bias;    // out

  Conv3x3() = default;
  Conv3x3(std::size_t in_, std::size_t out_)
      : in(in_), out(out_), weight(9 * in_ * out_, 0.0), bias(out_, 0.0) {}

  double& w(std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) {
    return weight[((ky * 3 + kx) * in + ci) * out + co];
  }
  double w(std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) const {
    return weight[((ky * 3 + kx) * in + ci) * out + co];
  }

  void init(Rng& rng, double gain = 1.0) {
    const double std_dev = gain / std::sqrt(9.0 * static_cast<double>(in));
    for (double& x : weight) x = std_dev * rng.normal();
    std::fill(bias.begin(), bias.end(), 0.0);
  }

  Field forward(const Field& x) const {
    require(x.c == in, ErrorKind::shape,
            "conv3x3: expected " + std::to_string(in) + " input channels, got " +
                std::to_string(x.c));
    Field y(x.h, x.w, out);
    for (std::size_t i = 0; i < x.h; ++i)
      for (std::size_t j = 0; j < x.w; ++j) {
        double* yp = &y.v[(i * x.w + j) * out];
        for (std::size_t co = 0; co < out; ++co) yp[co] = bias[co];
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + ky) - 1;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(x.h)) continue;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + kx) - 1;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(x.w)) continue;
            const double* xp = &x.v[(static_cast<std::size_t>(ii) * x.w +
                                     static_cast<std::size_t>(jj)) * in];
            const double* wp = &weight[(ky * 3 + kx) * in * out];
            for (std::size_t ci = 0; ci < in; ++ci) {
              const double xv = xp[ci];
              const double* wr = wp + ci * out;
              for (std::size_t co = 0; co < out; ++co) yp[co] += wr[co] * xv;
            }
          }
        }
      }
    return y;
  }

  /// Accumulates parameter gradients into `grad` and returns dL/dx.
  Field backward(const Field& x, const Field& dy, Conv3x3& grad) const {
    Field dx(x.h, x.w, in);
    for (std::size_t i = 0; i < x.h; ++i)
      for (std::size_t j = 0; j < x.w; ++j) {
        const double* gp = &dy.v[(i * x.w + j) * out];
        for (std::size_t co = 0; co < out; ++co) grad.bias[co] += gp[co];
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + ky) - 1;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(x.h)) continue;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + kx) - 1;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(x.w)) continue;
            const std::size_t src = (static_cast<std::size_t>(ii) * x.w +
                                     static_cast<std::size_t>(jj)) * in;
            const double* xp = &x.v[src];
            double* dxp = &dx.v[src];
            const double* wp = &weight[(ky * 3 + kx) * in * out];
            double* gw = &grad.weight[(ky * 3 + kx) * in * out];
            for (std::size_t ci = 0; ci < in; ++ci) {
              const double* wr = wp + ci * out;
              double* gr = gw + ci * out;
              const double xv = xp[ci];
              double acc = 0.0;
              for (std::size_t co = 0; co < out; ++co) {
                acc += wr[co] * gp[co];
                gr[co] += xv * gp[co];
              }
              dxp[ci] += acc;
            }
          }
        }
      }
    return dx;
  }
};

enum class Activation { silu, identity };

inline Activation parse_activation(const std::string& s) {
  if (s == "silu") return Activation::silu;
  if (s == "identity") return Activation::identity;
  fail(ErrorKind::domain, "activation must be 'silu' or 'identity', got '" + s + "'");
}

inline const char* to_string(Activation a) {
  return a == Activation::silu ? "silu" : "identity";
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Field activate(const Field& x, Activation a) {
  if (a == Activation::identity) return x;
  Field y = x;
  for (double& v : y.v) v = v * sigmoid(v);
  return y;
}

// dL/dx given the pre-activation x and dL/dy.
inline Field activate_backward(const Field& x, const Field& dy, Activation a) {
  if (a == Activation::identity) return dy;
  Field dx = dy;
  for (std::size_t k = 0; k < x.v.size(); ++k) {
    const double s = sigmoid(x.v[k]);
    dx.v[k] *= s * (1.0 + x.v[k] * (1.0 - s));
  }
  return dx;
}

inline void add_into(std::vector<double>& acc, const std::vector<double>& x) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += x[k];
}

}  // namespace genstereo
