#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "genstereo/coord_embed.hpp"

using namespace genstereo;

TEST(CanonicalGrid, EndpointsAndMidpoint) {
  const Tensor g = canonical_grid(2, 3);
  EXPECT_EQ(g.at(0, 0, 0), -1.0f);
  EXPECT_EQ(g.at(0, 1, 0), 0.0f);
  EXPECT_EQ(g.at(0, 2, 0), 1.0f);
  EXPECT_EQ(g.at(0, 0, 1), -1.0f);
  EXPECT_EQ(g.at(1, 0, 1), 1.0f);
}

TEST(CanonicalGrid, NegatedXEqualsHorizontalFlip) {
  const std::size_t h = 5, w = 7;
  const Tensor g = canonical_grid(h, w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      EXPECT_EQ(-g.at(i, j, 0), g.at(i, w - 1 - j, 0));
      EXPECT_EQ(g.at(i, j, 1), g.at(i, w - 1 - j, 1));
    }
}

TEST(CanonicalGrid, MonotoneAlongRowsAndColumns) {
  const Tensor g = canonical_grid(6, 9);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 1; j < 9; ++j) EXPECT_LT(g.at(i, j - 1, 0), g.at(i, j, 0));
  for (std::size_t i = 1; i < 6; ++i) EXPECT_LT(g.at(i - 1, 0, 1), g.at(i, 0, 1));
}

TEST(CanonicalGrid, RejectsDegenerateExtent) {
  EXPECT_THROW(canonical_grid(1, 4), Error);
  EXPECT_THROW(canonical_grid(4, 1), Error);
}

TEST(FourierEncode, ZeroCoordinate) {
  Tensor g({1, 1, 2}, std::vector<float>{0.0f, 0.0f});
  const Tensor e = fourier_encode(g, {.frequencies = 3});
  ASSERT_EQ(e.dim(2), 12u);
  for (std::size_t ch = 0; ch < 12; ch += 2) {
    EXPECT_EQ(e.at(0, 0, ch), 0.0f);
    EXPECT_EQ(e.at(0, 0, ch + 1), 1.0f);
  }
}

TEST(FourierEncode, AnalyticValuesAndChannelOrder) {
  // x = 1, y = 0.5
  Tensor g({1, 1, 2}, std::vector<float>{1.0f, 0.5f});
  const Tensor e = fourier_encode(g, {.frequencies = 2});
  // x block: sin(pi), cos(pi), sin(2pi), cos(2pi)
  EXPECT_NEAR(e.at(0, 0, 0), 0.0, 1e-6);
  EXPECT_NEAR(e.at(0, 0, 1), -1.0, 1e-6);
  EXPECT_NEAR(e.at(0, 0, 2), 0.0, 1e-6);
  EXPECT_NEAR(e.at(0, 0, 3), 1.0, 1e-6);
  // y block: sin(pi/2), cos(pi/2), then k=1: sin(pi), cos(pi)
  EXPECT_NEAR(e.at(0, 0, 4), 1.0, 1e-6);
  EXPECT_NEAR(e.at(0, 0, 5), 0.0, 1e-6);
  EXPECT_NEAR(e.at(0, 0, 6), std::sin(2.0 * std::numbers::pi * 0.5), 1e-6);
  EXPECT_NEAR(e.at(0, 0, 7), -1.0, 1e-6);
}

TEST(FourierEncode, RawChannelsToggle) {
  const Tensor g = canonical_grid(3, 3);
  const Tensor e = fourier_encode(g, {.frequencies = 4, .include_raw = true});
  ASSERT_EQ(e.dim(2), 18u);
  EXPECT_EQ(e.at(2, 0, 16), -1.0f);
  EXPECT_EQ(e.at(2, 0, 17), 1.0f);
}

TEST(FourierEncode, RangeAndPythagoreanIdentity) {
  const Tensor e = fourier_encode(canonical_grid(9, 13), {.frequencies = 5});
  for (std::size_t p = 0; p < 9 * 13; ++p)
    for (std::size_t ch = 0; ch < 20; ch += 2) {
      const double s = e[p * 20 + ch], c = e[p * 20 + ch + 1];
      EXPECT_LE(std::abs(s), 1.0);
      EXPECT_LE(std::abs(c), 1.0);
      EXPECT_NEAR(s * s + c * c, 1.0, 1e-6);
    }
}

TEST(FourierEncode, CommutesWithHorizontalFlip) {
  const std::size_t h = 4, w = 6;
  const Tensor g = canonical_grid(h, w);
  Tensor flipped = g;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t k = 0; k < 2; ++k) flipped.at(i, j, k) = g.at(i, w - 1 - j, k);
  const Tensor a = fourier_encode(flipped);
  const Tensor b = fourier_encode(g);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t k = 0; k < b.dim(2); ++k) EXPECT_EQ(a.at(i, j, k), b.at(i, w - 1 - j, k));
}

// sin/cos(2^k pi u) has period 2 in u, so u = -1 and u = +1 always coincide.
// Away from that endpoint identification every pixel gets its own vector.
TEST(FourierEncode, InjectiveOnSmallGridsUpToEndpointIdentification) {
  for (std::size_t F = 1; F <= 3; ++F) {
    const std::size_t n = (std::size_t{1} << F) + 1;
    const Tensor e = fourier_encode(canonical_grid(n, n), {.frequencies = F});
    const std::size_t c = e.dim(2), px = n * n;
    auto wrap = [n](std::size_t idx) { return idx == n - 1 ? std::size_t{0} : idx; };
    for (std::size_t a = 0; a < px; ++a)
      for (std::size_t b = a + 1; b < px; ++b) {
        double dist = 0.0;
        for (std::size_t k = 0; k < c; ++k) dist += std::abs(e[a * c + k] - e[b * c + k]);
        const bool same_point =
            wrap(a / n) == wrap(b / n) && wrap(a % n) == wrap(b % n);
        if (same_point)
          EXPECT_LT(dist, 1e-5) << "F=" << F << " pixels " << a << "," << b;
        else
          EXPECT_GT(dist, 1e-4) << "F=" << F << " pixels " << a << "," << b;
      }
  }
}
