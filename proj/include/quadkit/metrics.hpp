#pragma once

// Trajectory-based jitter metric (PTrack) plus PSNR and SSIM.

#include <string>
#include <utility>
#include <vector>

#include "quadkit/tensor.hpp"

namespace quadkit::metrics {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

using Trajectory = std::vector<Point>;

struct PTrackSet {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t frames = 0;
  std::size_t grid = 0;
  std::vector<Trajectory> points;  // grid^2 trajectories, row-major grid order

  /// Throws unless there are grid^2 trajectories of `frames` points each.
  void validate() const;
  double dx() const { return (static_cast<double>(width) - 1.0) / static_cast<double>(grid); }
  double dy() const { return (static_cast<double>(height) - 1.0) / static_cast<double>(grid); }
};

/// Cell-centred grid: ((i + 0.5) dx, (j + 0.5) dy) with dx = (W - 1) / G,
/// row-major (j outer, i inner).
std::vector<Point> grid_points(std::size_t width, std::size_t height, std::size_t grid);

/// Population variances (divisor T) of the x and y coordinates.
std::pair<double, double> temporal_variance(const Trajectory& traj);

/// Linear interpolation between closest ranks at position q (n - 1) of the
/// sorted values.
double percentile(std::vector<double> values, double q);

struct VarianceProfile {
  std::vector<double> sx;
  std::vector<double> sy;
};
VarianceProfile variance_profile(const PTrackSet& set);

/// Indices whose x and y variances are both at or below the q-percentile.
std::vector<std::size_t> filter_trajectories(const VarianceProfile& vp, double q = 0.8);

struct PTrackResult {
  double value = 0.0;
  std::size_t kept = 0;
  std::vector<std::string> warnings;
};

/// Variance-weighted squared vertical offset over the trajectories kept by
/// the real set's variance filter.
PTrackResult ptrack(const PTrackSet& real, const PTrackSet& gen);

/// +inf when the images are identical.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};
/// Mean local SSIM over the fully covered ("valid") window positions of two
/// (H, W) images, Gaussian-weighted.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt = {});

/// Vertical displacement s of `frame` relative to `reference` (both (H, W)),
/// frame(y) ~ reference(y - s): the integer shift in [-max_shift, max_shift]
/// maximising the normalised cross-correlation of the overlapping rows,
/// refined by a parabola through the neighbouring scores.
double vertical_shift(const Tensor& reference, const Tensor& frame, std::size_t max_shift);

/// Pearson correlation coefficient; 0 when either series is constant.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace quadkit::metrics
