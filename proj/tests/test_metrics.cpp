#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "quadkit/metrics.hpp"
#include "quadkit/rng.hpp"

using namespace quadkit;
using namespace quadkit::metrics;

namespace {

PTrackSet make_set(std::size_t w, std::size_t h, std::size_t frames, std::size_t grid) {
  PTrackSet s{w, h, frames, grid, {}};
  for (const Point& p : grid_points(w, h, grid)) s.points.emplace_back(frames, p);
  return s;
}

double brute_variance(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double brute_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double brute_ptrack(const PTrackSet& real, const PTrackSet& gen) {
  const std::size_t n = real.points.size(), t = real.frames;
  std::vector<double> vx(n), vy(n), gy(n);
  for (std::size_t p = 0; p < n; ++p) {
    std::vector<double> xs, ys, gys;
    for (std::size_t k = 0; k < t; ++k) {
      xs.push_back(real.points[p][k].x);
      ys.push_back(real.points[p][k].y);
      gys.push_back(gen.points[p][k].y);
    }
    vx[p] = brute_variance(xs);
    vy[p] = brute_variance(ys);
    gy[p] = brute_variance(gys);
  }
  const double qx = brute_quantile(vx, 0.8), qy = brute_quantile(vy, 0.8);
  const double dy = (static_cast<double>(real.height) - 1.0) / static_cast<double>(real.grid);
  double total = 0;
  std::size_t kept = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (vx[p] > qx || vy[p] > qy) continue;
    ++kept;
    double offset = 0;
    for (std::size_t k = 0; k < t; ++k) {
      const double d = (gen.points[p][k].y - real.points[p][k].y) / dy;
      offset += d * d;
    }
    const double w = (vy[p] - gy[p]) * (vy[p] - gy[p]);
    total += offset / static_cast<double>(t) * w;
  }
  return total / static_cast<double>(kept);
}

Tensor pattern(std::size_t h, std::size_t w, auto f) {
  Tensor t({h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) t[i * w + j] = f(static_cast<double>(i), static_cast<double>(j));
  return t;
}

}  // namespace

TEST(GridPoints, SpacingAndCentre) {
  const auto pts = grid_points(11, 11, 10);
  ASSERT_EQ(pts.size(), 100u);
  EXPECT_DOUBLE_EQ(pts[1].x - pts[0].x, 1.0);
  EXPECT_DOUBLE_EQ(pts[10].y - pts[0].y, 1.0);
  EXPECT_DOUBLE_EQ(pts[0].x, 0.5);
  const auto one = grid_points(64, 32, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0].x, 31.5);
  EXPECT_DOUBLE_EQ(one[0].y, 15.5);
  EXPECT_THROW(grid_points(2, 2, 3), std::invalid_argument);
}

TEST(TemporalVariance, HandValues) {
  EXPECT_EQ(temporal_variance({{3, 4}, {3, 4}}), std::make_pair(0.0, 0.0));
  EXPECT_DOUBLE_EQ(temporal_variance({{0, 1}, {2, 1}}).first, 1.0);
  EXPECT_NEAR(temporal_variance({{0, 1}, {0, 2}, {0, 3}}).second, 2.0 / 3.0, 1e-15);
}

TEST(Percentile, LinearInterpolation) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  EXPECT_NEAR(percentile(v, 0.8), 80.2, 1e-12);
  EXPECT_EQ(percentile({5.0}, 0.8), 5.0);
  EXPECT_THROW(percentile({}, 0.8), std::invalid_argument);
}

TEST(FilterTrajectories, HandCases) {
  VarianceProfile vp;
  for (int i = 1; i <= 100; ++i) {
    vp.sx.push_back(i);
    vp.sy.push_back(2.0);
  }
  const auto kept = filter_trajectories(vp);
  ASSERT_EQ(kept.size(), 80u);
  EXPECT_EQ(kept.back(), 79u);
  VarianceProfile eq{{1, 1, 1}, {2, 2, 2}};
  EXPECT_EQ(filter_trajectories(eq).size(), 3u);
  EXPECT_EQ(filter_trajectories(VarianceProfile{{7}, {9}}).size(), 1u);
  EXPECT_THROW(filter_trajectories(VarianceProfile{}), std::invalid_argument);
}

TEST(FilterTrajectories, KeptFractionMatchesJointQuantile) {
  Rng rng(1);
  const std::size_t n = 100, reps = 1000;
  double sum = 0, sum2 = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    VarianceProfile vp;
    for (std::size_t i = 0; i < n; ++i) {
      vp.sx.push_back(rng.uniform());
      vp.sy.push_back(rng.uniform());
    }
    const double f = static_cast<double>(filter_trajectories(vp).size()) / n;
    sum += f;
    sum2 += f * f;
  }
  const double mean = sum / reps, sd = std::sqrt(sum2 / reps - mean * mean);
  EXPECT_NEAR(mean, 0.64, 3.0 * sd / std::sqrt(static_cast<double>(reps)) + 1e-3);
}

TEST(PTrack, IdenticalSetsGiveZero) {
  Rng rng(2);
  PTrackSet s = make_set(64, 32, 6, 10);
  for (auto& tr : s.points)
    for (auto& p : tr) p.y += rng.normal();
  const auto r = ptrack(s, s);
  EXPECT_EQ(r.value, 0.0);
}

TEST(PTrack, HandComputedExample) {
  PTrackSet real{2, 2, 2, 1, {{{0.5, 0.0}, {0.5, 0.0}}}};
  PTrackSet gen = real;
  gen.points[0][0].y = 1.0;
  gen.points[0][1].y = -1.0;
  EXPECT_DOUBLE_EQ(real.dy(), 1.0);
  const auto r = ptrack(real, gen);
  EXPECT_EQ(r.kept, 1u);
  EXPECT_DOUBLE_EQ(r.value, 1.0);
}

TEST(PTrack, MatchesBruteForceOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t g = 1 + rng.below(4), t = 1 + rng.below(6);
    PTrackSet real = make_set(16 + rng.below(16), 16 + rng.below(16), t, g);
    PTrackSet gen = real;
    for (std::size_t p = 0; p < real.points.size(); ++p)
      for (std::size_t k = 0; k < t; ++k) {
        real.points[p][k].x += rng.normal();
        real.points[p][k].y += 2.0 * rng.normal();
        gen.points[p][k].x = real.points[p][k].x;
        gen.points[p][k].y = real.points[p][k].y + 3.0 * rng.normal();
      }
    const double expected = brute_ptrack(real, gen);
    EXPECT_NEAR(ptrack(real, gen).value, expected, 1e-12 * std::max(1.0, std::abs(expected)));
  }
}

TEST(PTrack, ConstantOffsetPathologyWarns) {
  PTrackSet real = make_set(64, 32, 8, 10);
  for (std::size_t p = 0; p < real.points.size(); ++p)
    for (std::size_t t = 0; t < 8; ++t) real.points[p][t].y = static_cast<double>((p + 3 * t) % 5);
  PTrackSet gen = real;
  for (auto& tr : gen.points)
    for (auto& p : tr) p.y += 5.0;
  const auto r = ptrack(real, gen);
  EXPECT_EQ(r.value, 0.0);
  ASSERT_FALSE(r.warnings.empty());
}

TEST(PTrack, ShapeMismatchRejected) {
  EXPECT_THROW(ptrack(make_set(64, 32, 8, 10), make_set(64, 32, 7, 10)), std::invalid_argument);
  EXPECT_THROW(ptrack(make_set(64, 32, 8, 10), make_set(64, 32, 8, 5)), std::invalid_argument);
}

TEST(Psnr, HandValuesAndSymmetry) {
  const Tensor a({10, 10}, 0.5), b({10, 10}, 0.6);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  Rng rng(4);
  const Tensor c = rng.uniform_tensor({8, 8}, 0, 1), d = rng.uniform_tensor({8, 8}, 0, 1);
  EXPECT_EQ(psnr(c, d), psnr(d, c));
  EXPECT_THROW(psnr(a, Tensor({10, 9})), std::invalid_argument);
}

TEST(Ssim, IdentityAndReferenceValues) {
  const Tensor a = pattern(24, 32, [](double i, double j) {
    return static_cast<double>((static_cast<int>(i) / 4 + static_cast<int>(j) / 3) % 2);
  });
  const Tensor inv = pattern(24, 32, [&](double i, double j) { return 1.0 - a[i * 32 + j]; });
  EXPECT_EQ(ssim(a, a), 1.0);
  const double s = ssim(a, inv);
  EXPECT_LT(s, 0.1);
  // Reference values from scikit-image structural_similarity with Gaussian
  // weights, sigma 1.5, population covariance and data range 1.
  EXPECT_NEAR(s, -0.9631461243251067, 1e-9);
  const Tensor c = pattern(24, 32, [](double i, double j) { return (std::sin(0.3 * i) * std::cos(0.2 * j) + 1) / 2; });
  const Tensor d = pattern(24, 32, [&](double i, double j) {
    const int k = static_cast<int>(i) * 7 + static_cast<int>(j) * 13;
    return std::clamp(c[i * 32 + j] + 0.1 * ((k % 11) / 10.0 - 0.5), 0.0, 1.0);
  });
  EXPECT_NEAR(ssim(c, d), 0.9612986301823117, 1e-9);
  EXPECT_NEAR(ssim(c, d), ssim(d, c), 1e-12);
  EXPECT_THROW(ssim(Tensor({10, 20}), Tensor({10, 20})), std::invalid_argument);
}

TEST(VerticalShift, RecoversKnownShifts) {
  const double period = 16.0;
  const Tensor ref = pattern(32, 64, [&](double i, double j) {
    return 0.5 + 0.25 * std::sin(2 * M_PI * (i + 0.5) / period) + 0.1 * std::sin(2 * M_PI * 3 * j / 64);
  });
  for (double s : {-3.0, -1.5, 0.0, 0.4, 2.0, 3.0}) {
    const Tensor fr = pattern(32, 64, [&](double i, double j) {
      return 0.5 + 0.25 * std::sin(2 * M_PI * (i + 0.5 - s) / period) + 0.1 * std::sin(2 * M_PI * 3 * j / 64);
    });
    EXPECT_NEAR(vertical_shift(ref, fr, 6), s, 0.25) << s;
  }
}

TEST(Pearson, HandValues) {
  EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-15);
  EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-15);
  EXPECT_EQ(pearson({1, 1, 1}, {1, 2, 3}), 0.0);
  EXPECT_THROW(pearson({1, 2}, {1, 2, 3}), std::invalid_argument);
}
