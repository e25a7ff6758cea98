#pragma once

#include <functional>
#include <string>

#include "genstereo/attention.hpp"
#include "genstereo/nn.hpp"

namespace genstereo {

struct DenoiserShape {
  std::size_t latent_channels = 3;
  std::size_t cond_channels = 3;    // encoded warped image
  std::size_t embed_channels = 16;  // Fourier embedding
  std::size_t ref_channels = 3;     // encoded reference image
  std::size_t dim = 16;
  Activation activation = Activation::silu;
  bool attention = true;

  // latent + warped condition + embedding + timestep channel
  std::size_t denoise_in() const {
    return latent_channels + cond_channels + embed_channels + 1;
  }
  std::size_t reference_in() const { return ref_channels + embed_channels; }

  friend bool operator==(const DenoiserShape&, const DenoiserShape&) = default;
};

/// conv -> act -> conv -> act -> conv
struct Trunk {
  Conv3x3 in, mid, last;

  Trunk() = default;
  Trunk(std::size_t c_in, std::size_t dim) : in(c_in, dim), mid(dim, dim), last(dim, dim) {}

  struct Cache {
    Field x, a0, h0, a1, h1;
  };

  Field forward(const Field& x, Activation act, Cache& c) const {
    c.x = x;
    c.a0 = in.forward(x);
    c.h0 = activate(c.a0, act);
    c.a1 = mid.forward(c.h0);
    c.h1 = activate(c.a1, act);
    return last.forward(c.h1);
  }

  void backward(const Cache& c, const Field& d_out, Activation act, Trunk& grad) const {
    Field d = last.backward(c.h1, d_out, grad.last);
    d = activate_backward(c.a1, d, act);
    d = mid.backward(c.h0, d, grad.mid);
    d = activate_backward(c.a0, d, act);
    in.backward(c.x, d, grad.in);
  }
};

/// Two-stream toy denoiser: a reference trunk over (I_l, C_l), a denoising
/// trunk over (z_t, I_warp, C_r, t/T), one cross-view attention block with a
/// residual connection, and an output convolution to latent channels.
struct DenoiserParams {
  DenoiserShape shape;
  Trunk denoise, reference;
  AttentionParams attn;
  Conv3x3 out;

  DenoiserParams() = default;
  explicit DenoiserParams(const DenoiserShape& s)
      : shape(s),
        denoise(s.denoise_in(), s.dim),
        reference(s.reference_in(), s.dim),
        attn(s.dim),
        out(s.dim, s.latent_channels) {}

  static DenoiserParams initialized(const DenoiserShape& s, std::uint64_t seed) {
    DenoiserParams p(s);
    Rng rng(seed);
    for (Conv3x3* c : {&p.denoise.in, &p.denoise.mid, &p.denoise.last, &p.reference.in,
                       &p.reference.mid, &p.reference.last})
      c->init(rng);
    p.attn.init(rng, 0.5);
    p.out.init(rng, 0.1);
    return p;
  }

  template <class Fn>
  void visit(Fn&& fn) {
    auto conv = [&](const std::string& name, Conv3x3& c) {
      fn(name + ".weight", c.weight);
      fn(name + ".bias", c.bias);
    };
    conv("denoise.in", denoise.in);
    conv("denoise.mid", denoise.mid);
    conv("denoise.last", denoise.last);
    conv("reference.in", reference.in);
    conv("reference.mid", reference.mid);
    conv("reference.last", reference.last);
    fn("attn.wq", attn.wq);
    fn("attn.wk", attn.wk);
    fn("attn.wv", attn.wv);
    fn("attn.wo", attn.wo);
    conv("out", out);
  }
  template <class Fn>
  void visit(Fn&& fn) const {
    const_cast<DenoiserParams*>(this)->visit(
        [&](const std::string& n, std::vector<double>& v) { fn(n, std::as_const(v)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const std::vector<double>& v) { n += v.size(); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    visit([&](const std::string&, const std::vector<double>& v) {
      for (double x : v) ok = ok && std::isfinite(x);
    });
    return ok;
  }

  DenoiserParams zeros_like() const { return DenoiserParams(shape); }
};

/// All spatial operands at latent resolution.
struct DenoiserInput {
  Field z_t;
  int t = 0;
  int steps = 1;  // T; the timestep channel carries t / T
  Field cond_warp, cond_embed;
  Field ref_image, ref_embed;
};

struct DenoiserCache {
  Trunk::Cache den, ref;
  Field f_ref, f_tgt, mixed;
  AttentionCache attn;
};

inline Field denoiser_forward(const DenoiserParams& p, const DenoiserInput& in,
                              DenoiserCache* cache = nullptr) {
  const auto& s = p.shape;
  const std::size_t h = in.z_t.h, w = in.z_t.w;
  auto check = [&](const Field& f, std::size_t c, const char* what) {
    require(f.h == h && f.w == w, ErrorKind::shape,
            std::string("denoiser: ") + what + " resolution " + std::to_string(f.h) +
                "x" + std::to_string(f.w) + " differs from latent " + std::to_string(h) +
                "x" + std::to_string(w));
    require(f.c == c, ErrorKind::shape,
            std::string("denoiser: ") + what + " has " + std::to_string(f.c) +
                " channels, expected " + std::to_string(c));
  };
  check(in.z_t, s.latent_channels, "z_t");
  check(in.cond_warp, s.cond_channels, "warped condition");
  check(in.cond_embed, s.embed_channels, "target embedding");
  check(in.ref_image, s.ref_channels, "reference image");
  check(in.ref_embed, s.embed_channels, "reference embedding");
  require(in.steps >= 1 && in.t >= 0 && in.t <= in.steps, ErrorKind::domain,
          "denoiser: timestep outside [0, T]");

  DenoiserCache local;
  DenoiserCache& c = cache ? *cache : local;
  const Field tchan(h, w, 1, static_cast<double>(in.t) / static_cast<double>(in.steps));
  const Field x = concat_channels({&in.z_t, &in.cond_warp, &in.cond_embed, &tchan});
  c.f_tgt = p.denoise.forward(x, s.activation, c.den);
  if (s.attention) {
    const Field r = concat_channels({&in.ref_image, &in.ref_embed});
    c.f_ref = p.reference.forward(r, s.activation, c.ref);
    c.mixed = cross_view_attention(c.f_ref, c.f_tgt, p.attn, &c.attn);
    add_into(c.mixed.v, c.f_tgt.v);
  } else {
    c.mixed = c.f_tgt;
  }
  return p.out.forward(c.mixed);
}

/// Gradient of a scalar loss w.r.t. every parameter given dL/d(eps_hat).
inline DenoiserParams denoiser_backward(const DenoiserParams& p, const DenoiserCache& c,
                                        const Field& d_eps) {
  DenoiserParams g = p.zeros_like();
  const Field d_mixed = p.out.backward(c.mixed, d_eps, g.out);
  Field d_tgt = d_mixed;
  if (p.shape.attention) {
    const auto ag =
        cross_view_attention_backward(c.f_ref, c.f_tgt, p.attn, c.attn, d_mixed, g.attn);
    add_into(d_tgt.v, ag.d_tgt.v);
    p.reference.backward(c.ref, ag.d_ref, p.shape.activation, g.reference);
  }
  p.denoise.backward(c.den, d_tgt, p.shape.activation, g.denoise);
  return g;
}

}  // namespace genstereo
