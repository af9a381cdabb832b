#include "quadkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace quadkit::metrics {

void PTrackSet::validate() const {
  if (width < 2 || height < 2) throw std::invalid_argument("trajectory set needs width and height >= 2");
  if (grid < 1 || frames < 1) throw std::invalid_argument("trajectory set needs G >= 1 and T >= 1");
  if (points.size() != grid * grid)
    throw std::invalid_argument("expected " + std::to_string(grid * grid) + " trajectories, got " +
                                std::to_string(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i)
    if (points[i].size() != frames)
      throw std::invalid_argument("trajectory " + std::to_string(i) + " has " + std::to_string(points[i].size()) +
                                  " points, expected " + std::to_string(frames));
}

std::vector<Point> grid_points(std::size_t width, std::size_t height, std::size_t grid) {
  if (width < 2 || height < 2) throw std::invalid_argument("grid needs width and height >= 2");
  if (grid < 1) throw std::invalid_argument("grid side must be positive");
  if (grid * grid > width * height) throw std::invalid_argument("grid has more points than the image has pixels");
  const double dx = (static_cast<double>(width) - 1.0) / static_cast<double>(grid);
  const double dy = (static_cast<double>(height) - 1.0) / static_cast<double>(grid);
  std::vector<Point> pts;
  pts.reserve(grid * grid);
  for (std::size_t j = 0; j < grid; ++j)
    for (std::size_t i = 0; i < grid; ++i)
      pts.push_back({(static_cast<double>(i) + 0.5) * dx, (static_cast<double>(j) + 0.5) * dy});
  return pts;
}

std::pair<double, double> temporal_variance(const Trajectory& traj) {
  if (traj.empty()) throw std::invalid_argument("empty trajectory");
  const double n = static_cast<double>(traj.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : traj) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (const auto& p : traj) {
    vx += (p.x - mx) * (p.x - mx);
    vy += (p.y - my) * (p.y - my);
  }
  return {vx / n, vy / n};
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile rank must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

VarianceProfile variance_profile(const PTrackSet& set) {
  VarianceProfile vp;
  for (const auto& traj : set.points) {
    const auto [sx, sy] = temporal_variance(traj);
    vp.sx.push_back(sx);
    vp.sy.push_back(sy);
  }
  return vp;
}

std::vector<std::size_t> filter_trajectories(const VarianceProfile& vp, double q) {
  if (vp.sx.empty() || vp.sx.size() != vp.sy.size()) throw std::invalid_argument("empty variance profile");
  const double qx = percentile(vp.sx, q), qy = percentile(vp.sy, q);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < vp.sx.size(); ++i)
    if (vp.sx[i] <= qx && vp.sy[i] <= qy) keep.push_back(i);
  return keep;
}

PTrackResult ptrack(const PTrackSet& real, const PTrackSet& gen) {
  real.validate();
  gen.validate();
  if (real.width != gen.width || real.height != gen.height || real.frames != gen.frames || real.grid != gen.grid)
    throw std::invalid_argument("trajectory sets differ in size, frame count or grid");
  const VarianceProfile vr = variance_profile(real);
  const std::vector<std::size_t> keep = filter_trajectories(vr);
  if (keep.empty()) throw std::runtime_error("all trajectories filtered");
  const double dy = real.dy();
  const double t = static_cast<double>(real.frames);
  PTrackResult res;
  res.kept = keep.size();
  std::size_t flat = 0;
  double total = 0.0;
  for (std::size_t p : keep) {
    double offset = 0.0;
    for (std::size_t f = 0; f < real.frames; ++f) {
      const double d = (gen.points[p][f].y - real.points[p][f].y) / dy;
      offset += d * d;
    }
    const double sy_gen = temporal_variance(gen.points[p]).second;
    const double w = (vr.sy[p] - sy_gen) * (vr.sy[p] - sy_gen);
    if (w < 1e-12) ++flat;
    total += offset / t * w;
  }
  res.value = total / static_cast<double>(keep.size());
  if (2 * flat > keep.size())
    res.warnings.push_back("variance weight below 1e-12 for " + std::to_string(flat) + " of " +
                           std::to_string(keep.size()) + " kept trajectories; vertical offsets are not scored");
  return res;
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (a.shape() != b.shape()) throw std::invalid_argument("psnr: shape mismatch");
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

// Separable Gaussian filter restricted to fully covered window positions.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(h * ow, 0.0), out(oh * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * img[y * w + x + i];
      rows[y * ow + x] = s;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt) {
  if (a.shape() != b.shape()) throw std::invalid_argument("ssim: shape mismatch");
  if (a.rank() != 2) throw std::invalid_argument("ssim expects (H, W) images");
  if (opt.window % 2 == 0 || opt.window < 3) throw std::invalid_argument("ssim window must be odd and >= 3");
  const std::size_t h = a.dim(0), w = a.dim(1);
  if (h < opt.window || w < opt.window)
    throw std::invalid_argument("ssim needs images of at least " + std::to_string(opt.window) + "x" +
                                std::to_string(opt.window));
  std::vector<double> k(opt.window);
  const double r = static_cast<double>(opt.window / 2);
  double ks = 0.0;
  for (std::size_t i = 0; i < opt.window; ++i) {
    const double d = static_cast<double>(i) - r;
    k[i] = std::exp(-d * d / (2.0 * opt.sigma * opt.sigma));
    ks += k[i];
  }
  for (double& v : k) v /= ks;

  std::vector<double> av(a.data().begin(), a.data().end()), bv(b.data().begin(), b.data().end());
  std::vector<double> aa(av.size()), bb(av.size()), ab(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    aa[i] = av[i] * av[i];
    bb[i] = bv[i] * bv[i];
    ab[i] = av[i] * bv[i];
  }
  const auto mu_a = filter_valid(av, h, w, k), mu_b = filter_valid(bv, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k), e_bb = filter_valid(bb, h, w, k), e_ab = filter_valid(ab, h, w, k);
  const double c1 = (opt.k1 * opt.peak) * (opt.k1 * opt.peak);
  const double c2 = (opt.k2 * opt.peak) * (opt.k2 * opt.peak);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
    total += num / den;
  }
  return total / static_cast<double>(mu_a.size());
}

namespace {

double ncc_at(const Tensor& ref, const Tensor& frame, long shift) {
  const long h = static_cast<long>(ref.dim(0));
  const std::size_t w = ref.dim(1);
  const long y0 = std::max(0L, shift), y1 = std::min(h, h + shift);
  double ma = 0.0, mb = 0.0;
  const double n = static_cast<double>((y1 - y0) * static_cast<long>(w));
  for (long y = y0; y < y1; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      ma += frame[static_cast<std::size_t>(y) * w + x];
      mb += ref[static_cast<std::size_t>(y - shift) * w + x];
    }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (long y = y0; y < y1; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double a = frame[static_cast<std::size_t>(y) * w + x] - ma;
      const double b = ref[static_cast<std::size_t>(y - shift) * w + x] - mb;
      sab += a * b;
      saa += a * a;
      sbb += b * b;
    }
  const double den = std::sqrt(saa * sbb);
  return den > 0.0 ? sab / den : 0.0;
}

}  // namespace

double vertical_shift(const Tensor& reference, const Tensor& frame, std::size_t max_shift) {
  if (reference.rank() != 2 || reference.shape() != frame.shape())
    throw std::invalid_argument("vertical_shift expects two (H, W) images of equal size");
  if (max_shift + 2 > reference.dim(0)) throw std::invalid_argument("vertical_shift: search range exceeds the image");
  const long m = static_cast<long>(max_shift);
  std::vector<double> score;
  for (long s = -m; s <= m; ++s) score.push_back(ncc_at(reference, frame, s));
  const auto best = static_cast<long>(std::max_element(score.begin(), score.end()) - score.begin());
  double refined = static_cast<double>(best - m);
  if (best > 0 && best + 1 < static_cast<long>(score.size())) {
    const double a = score[static_cast<std::size_t>(best - 1)], b = score[static_cast<std::size_t>(best)],
                 c = score[static_cast<std::size_t>(best + 1)];
    const double den = a - 2.0 * b + c;
    if (den < 0.0) refined += 0.5 * (a - c) / den;
  }
  return refined;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("pearson: series must have equal, non-zero length");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace quadkit::metrics
