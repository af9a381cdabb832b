#include "quadkit/vje.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "quadkit/fft.hpp"
#include "quadkit/kernels/kernels.hpp"
#include "quadkit/rng.hpp"

namespace quadkit::vje {

void BoxTrack::validate() const {
  if (entries.empty()) throw std::invalid_argument("track has no entries");
  if (!(fps > 0.0)) throw std::invalid_argument("fps must be positive");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (i > 0 && e.frame <= entries[i - 1].frame)
      throw std::invalid_argument("frame indices must be strictly increasing (frame " + std::to_string(e.frame) + ")");
    if (!e.visible) continue;
    const double w = static_cast<double>(image_width), h = static_cast<double>(image_height);
    if (!(0.0 <= e.x1 && e.x1 <= e.x2 && e.x2 <= w && 0.0 <= e.y1 && e.y1 <= e.y2 && e.y2 <= h))
      throw std::invalid_argument("box at frame " + std::to_string(e.frame) + " lies outside the image");
  }
}

void ButterworthSpec::validate() const {
  if (!(cutoff_hz > 0.0)) throw std::invalid_argument("cutoff must be positive");
  if (!(order > 0.0)) throw std::invalid_argument("order must be positive");
  if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("sample rate must be positive");
  if (!(cutoff_hz < sample_rate_hz / 2.0)) throw std::invalid_argument("cutoff must be below the Nyquist frequency");
}

CameraIntrinsics CameraIntrinsics::from_image_size(std::size_t width, std::size_t height) {
  const double f = static_cast<double>(width) / 2.0;
  return {f, f, static_cast<double>(width) / 2.0, static_cast<double>(height) / 2.0};
}

Tensor vertical_series(const BoxTrack& track) {
  if (track.entries.empty()) throw std::invalid_argument("track has no entries");
  std::vector<std::pair<long, double>> known;
  for (const auto& e : track.entries)
    if (e.visible) known.emplace_back(e.frame, 0.5 * (e.y1 + e.y2));
  if (known.empty()) throw std::invalid_argument("no visible boxes");
  const long first = track.entries.front().frame;
  const long last = track.entries.back().frame;
  Tensor out({static_cast<std::size_t>(last - first + 1)});
  std::size_t next = 0;  // first known sample with frame >= f
  for (long f = first; f <= last; ++f) {
    while (next < known.size() && known[next].first < f) ++next;
    double v;
    if (next < known.size() && known[next].first == f) {
      v = known[next].second;
    } else if (next == 0) {
      v = known.front().second;
    } else if (next == known.size()) {
      v = known.back().second;
    } else {
      const auto& [f0, v0] = known[next - 1];
      const auto& [f1, v1] = known[next];
      const double a = static_cast<double>(f - f0) / static_cast<double>(f1 - f0);
      v = v0 + a * (v1 - v0);
    }
    out[static_cast<std::size_t>(f - first)] = v;
  }
  return out;
}

double butterworth_response(const ButterworthSpec& spec, double frequency_hz) {
  if (frequency_hz < 0.0 || std::isnan(frequency_hz)) throw std::invalid_argument("frequency must be non-negative");
  if (frequency_hz == 0.0) return 0.0;
  // Written as 1 / (1 + (fc/f)^2n) so large f/fc cannot overflow.
  const double r = std::pow(spec.cutoff_hz / frequency_hz, 2.0 * spec.order);
  return 1.0 / (1.0 + r);
}

JitterSignal highpass_filter(const Tensor& series, const ButterworthSpec& spec) {
  spec.validate();
  if (series.rank() != 1 || series.numel() < 2) throw std::invalid_argument("high-pass filter needs at least 2 samples");
  const std::size_t n = series.numel();
  ComplexTensor spectrum = dft_1d(ComplexTensor::from_real(series));
  for (std::size_t k = 0; k < n; ++k) {
    const double f = static_cast<double>(std::min(k, n - k)) * spec.sample_rate_hz / static_cast<double>(n);
    const double gain = k == 0 ? 0.0 : butterworth_response(spec, f);
    spectrum.re[k] *= gain;
    spectrum.im[k] *= gain;
  }
  ComplexTensor back = idft_1d(spectrum);
  JitterSignal out;
  out.values = back.re;
  out.spec = spec;
  out.source_mean = mean(series);
  return out;
}

std::vector<Vec3> lift_to_world(const JitterSignal& jitter, std::size_t image_width) {
  if (jitter.values.empty()) throw std::invalid_argument("empty jitter signal");
  std::vector<Vec3> pts;
  pts.reserve(jitter.values.size());
  for (double y : jitter.values) pts.push_back({static_cast<double>(image_width) / 2.0, y, 1.0});
  return pts;
}

PoseSequence project(const std::vector<Vec3>& world, const CameraIntrinsics& k) {
  PoseSequence seq;
  seq.world = world;
  for (const auto& p : world) {
    if (!(p.z > 0.0)) throw std::invalid_argument("point behind camera");
    seq.camera.push_back({k.fx * p.x + k.cx * p.z, k.fy * p.y + k.cy * p.z, p.z});
  }
  return seq;
}

Tensor plucker_embed(const std::vector<Vec3>& camera, const CameraIntrinsics& k, std::size_t height,
                     std::size_t width) {
  if (height == 0 || width == 0) throw std::invalid_argument("map size must be positive");
  if (k.fx == 0.0 || k.fy == 0.0 || !std::isfinite(k.fx) || !std::isfinite(k.fy))
    throw std::invalid_argument("singular intrinsic matrix");
  if (camera.empty()) throw std::invalid_argument("no camera poses");
  const std::size_t hw = height * width;
  Tensor out({camera.size(), 6, height, width});
  for (std::size_t t = 0; t < camera.size(); ++t) {
    // Vertical offset recovered through K^-1; the camera only translates along y.
    const double oy = (camera[t].y - k.cy * camera[t].z) / k.fy;
    double* base = out.data().data() + t * 6 * hw;
    for (std::size_t v = 0; v < height; ++v)
      for (std::size_t u = 0; u < width; ++u) {
        double dx = (static_cast<double>(u) + 0.5 - k.cx) / k.fx;
        double dy = (static_cast<double>(v) + 0.5 - k.cy) / k.fy;
        double dz = 1.0;
        const double inv = 1.0 / std::sqrt(dx * dx + dy * dy + dz * dz);
        dx *= inv;
        dy *= inv;
        dz *= inv;
        const std::size_t p = v * width + u;
        base[0 * hw + p] = dx;
        base[1 * hw + p] = dy;
        base[2 * hw + p] = dz;
        base[3 * hw + p] = oy * dz;
        base[4 * hw + p] = 0.0;
        base[5 * hw + p] = -oy * dx;
      }
  }
  return out;
}

PoseEncoder::PoseEncoder() {
  Rng rng(kSeed);
  w1_ = rng.normal_tensor({kHidden, 6, 3, 3}, 1.0 / std::sqrt(6.0 * 9.0));
  w2_ = rng.normal_tensor({kFeatures, kHidden, 3, 3}, 1.0 / std::sqrt(static_cast<double>(kHidden) * 9.0));
}

namespace {

Tensor strided_conv_silu(const Tensor& x, const Tensor& w) {
  const kernels::Conv2dDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), 3, 2, 1};
  Tensor y({d.batch, d.cout, d.out_height(), d.out_width()});
  kernels::conv2d_forward(d, x.data(), w.data(), {}, y.data());
  for (auto& v : y.vec()) v = v / (1.0 + std::exp(-v));
  return y;
}

}  // namespace

Tensor PoseEncoder::encode(const Tensor& plucker) const {
  if (plucker.rank() != 4 || plucker.dim(1) != 6) throw std::invalid_argument("pose encoder expects (T, 6, H, W)");
  if (plucker.dim(2) % 4 != 0 || plucker.dim(3) % 4 != 0)
    throw std::invalid_argument("pose encoder needs H and W divisible by 4");
  return strided_conv_silu(strided_conv_silu(plucker, w1_), w2_);
}

Tensor pose_encode(const Tensor& plucker) {
  static const PoseEncoder encoder;
  return encoder.encode(plucker);
}

BackgroundFeatures encode_jitter(const JitterSignal& jitter, std::size_t height, std::size_t width) {
  BackgroundFeatures out;
  out.jitter = jitter;
  const auto k = CameraIntrinsics::from_image_size(width, height);
  out.poses = project(lift_to_world(jitter, width), k);
  out.plucker = plucker_embed(out.poses.camera, k, height, width);
  out.features = pose_encode(out.plucker);
  return out;
}

BackgroundFeatures encode_track(const BoxTrack& track, const ButterworthSpec& spec, std::size_t height,
                                std::size_t width) {
  return encode_jitter(highpass_filter(vertical_series(track), spec), height, width);
}

}  // namespace quadkit::vje
