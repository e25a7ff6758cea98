#include <gtest/gtest.h>

#include "genstereo/grad_check.hpp"
#include "test_support.hpp"

using namespace genstereo;

namespace {

DenoiserShape small_shape() {
  DenoiserShape s;
  s.dim = 4;
  s.embed_channels = 8;
  return s;
}

DenoiserInput random_input(const DenoiserShape& s, std::size_t h, std::size_t w, Rng& rng) {
  using genstereo::testing::random_field;
  DenoiserInput in;
  in.z_t = random_field(h, w, s.latent_channels, rng);
  in.t = 17;
  in.steps = 100;
  in.cond_warp = random_field(h, w, s.cond_channels, rng);
  in.cond_embed = random_field(h, w, s.embed_channels, rng);
  in.ref_image = random_field(h, w, s.ref_channels, rng);
  in.ref_embed = random_field(h, w, s.embed_channels, rng);
  return in;
}

}  // namespace

TEST(Denoiser, ZeroParametersOutputTheBias) {
  const DenoiserShape s = small_shape();
  DenoiserParams p(s);
  Rng rng(1);
  const DenoiserInput in = random_input(s, 4, 5, rng);
  for (double v : denoiser_forward(p, in).v) EXPECT_EQ(v, 0.0);
  p.out.bias = {0.5, -1.0, 2.0};
  const Field out = denoiser_forward(p, in);
  for (std::size_t px = 0; px < 20; ++px)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.v[px * 3 + c], p.out.bias[c]);
}

TEST(Denoiser, OutputShapeMatchesLatent) {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    DenoiserShape s = small_shape();
    s.dim = 2 + rng.integer(0, 6);
    const auto p = DenoiserParams::initialized(s, rng.next());
    const std::size_t h = 1 + rng.integer(0, 6), w = 1 + rng.integer(0, 6);
    const Field out = denoiser_forward(p, random_input(s, h, w, rng));
    EXPECT_EQ(out.h, h);
    EXPECT_EQ(out.w, w);
    EXPECT_EQ(out.c, s.latent_channels);
    EXPECT_TRUE(std::all_of(out.v.begin(), out.v.end(), [](double v) { return std::isfinite(v); }));
  }
}

TEST(Denoiser, DeterministicBitIdentical) {
  Rng rng(3);
  const DenoiserShape s = small_shape();
  const auto p = DenoiserParams::initialized(s, 7);
  const DenoiserInput in = random_input(s, 4, 4, rng);
  EXPECT_EQ(denoiser_forward(p, in), denoiser_forward(p, in));
}

TEST(Denoiser, StreamResolutionMismatch) {
  Rng rng(4);
  const DenoiserShape s = small_shape();
  const auto p = DenoiserParams::initialized(s, 7);
  DenoiserInput in = random_input(s, 4, 4, rng);
  in.ref_image = Field(4, 3, 3);
  EXPECT_THROW(denoiser_forward(p, in), Error);
  in = random_input(s, 4, 4, rng);
  in.cond_embed = Field(4, 4, 5);
  EXPECT_THROW(denoiser_forward(p, in), Error);
}

TEST(GradCheck, FullDenoiserMatchesFiniteDifferences) {
  const DenoiserShape s = small_shape();
  const auto p = DenoiserParams::initialized(s, 11);
  const DenoiserProbe probe = make_probe(s, 4, 4, 2, 12);
  const auto r = grad_check(p, probe, 1e-3);
  EXPECT_TRUE(r.passed) << r.worst_param << "[" << r.worst_index << "] analytic "
                        << r.worst_analytic << " numeric " << r.worst_numeric << " rel "
                        << r.max_rel_error;
  EXPECT_EQ(r.checked, p.parameter_count());
}

TEST(GradCheck, LinearNetworkIsExact) {
  DenoiserShape s = small_shape();
  s.activation = Activation::identity;
  s.attention = false;
  const auto p = DenoiserParams::initialized(s, 13);
  DenoiserProbe probe = make_probe(s, 4, 4, 2, 14);
  const auto r = grad_check(p, probe, 1e-6);
  EXPECT_TRUE(r.passed) << r.worst_param << " rel " << r.max_rel_error;
}

TEST(GradCheck, CorruptedGradientFails) {
  const DenoiserShape s = small_shape();
  const auto p = DenoiserParams::initialized(s, 11);
  const DenoiserProbe probe = make_probe(s, 4, 4, 2, 12);
  const auto r = grad_check(p, probe, 1e-3, [](DenoiserParams& g) {
    for (double& v : g.denoise.mid.weight) v *= 1.1;
  });
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_param, "denoise.mid.weight");
  EXPECT_NEAR(r.max_rel_error, 0.1 / 1.1, 0.02);
}
