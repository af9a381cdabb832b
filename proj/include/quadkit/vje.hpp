#pragma once

// Vertical jitter encoding: box track -> vertical series -> Butterworth
// high-pass jitter -> world points -> camera points -> per-pixel Plücker rays
// -> frozen pose-encoder features.

#include <cstdint>
#include <vector>

#include "quadkit/tensor.hpp"

namespace quadkit::vje {

struct BoxEntry {
  long frame = 0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool visible = true;
};

struct BoxTrack {
  int id = 0;
  double fps = 10.0;
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  std::vector<BoxEntry> entries;

  /// Throws on non-increasing frames or visible boxes outside the image.
  void validate() const;
};

struct ButterworthSpec {
  double cutoff_hz = 0.3;
  double order = 1.0;
  double sample_rate_hz = 10.0;

  void validate() const;
};

struct JitterSignal {
  std::vector<double> values;
  ButterworthSpec spec;
  double source_mean = 0.0;
};

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;

  /// Rough pinhole estimate from the frame size: f = width / 2, principal
  /// point at the image center.
  static CameraIntrinsics from_image_size(std::size_t width, std::size_t height);
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

struct PoseSequence {
  std::vector<Vec3> world;   // P_w per frame
  std::vector<Vec3> camera;  // C = K P_w per frame
};

/// Box vertical center per frame from the first to the last entry; missing
/// or invisible frames are linearly interpolated, ends extended flat.
Tensor vertical_series(const BoxTrack& track);

/// (f/fc)^(2n) / (1 + (f/fc)^(2n)).
double butterworth_response(const ButterworthSpec& spec, double frequency_hz);

/// Applies the response as a gain on every DFT bin (bin k maps to
/// min(k, T-k) * fs / T) and returns the real part; the DC bin is zeroed.
JitterSignal highpass_filter(const Tensor& series, const ButterworthSpec& spec);

/// P_w(i) = (image_width / 2, y_w(i), 1).
std::vector<Vec3> lift_to_world(const JitterSignal& jitter, std::size_t image_width);
PoseSequence project(const std::vector<Vec3>& world, const CameraIntrinsics& k);

/// Per-frame 6-channel map (d, o x d) of shape (T, 6, H, W); camera center
/// o = (0, (K^-1 C)_y, 0), identity rotation, rays through pixel centers.
Tensor plucker_embed(const std::vector<Vec3>& camera, const CameraIntrinsics& k, std::size_t height,
                     std::size_t width);

/// Frozen two-layer strided conv encoder 6 -> 16 -> 32 channels (SiLU after
/// each), weights drawn once from a fixed seed. (T, 6, H, W) -> (T, 32, H/4, W/4).
class PoseEncoder {
 public:
  static constexpr std::size_t kHidden = 16;
  static constexpr std::size_t kFeatures = 32;
  static constexpr std::uint64_t kSeed = 0xCAFE;

  PoseEncoder();
  Tensor encode(const Tensor& plucker) const;

 private:
  Tensor w1_;
  Tensor w2_;
};

/// Convenience wrapper over a shared PoseEncoder instance.
Tensor pose_encode(const Tensor& plucker);

/// Full chain from a box track to background features f_bg at (H/4, W/4).
struct BackgroundFeatures {
  JitterSignal jitter;
  PoseSequence poses;
  Tensor plucker;
  Tensor features;
};
BackgroundFeatures encode_track(const BoxTrack& track, const ButterworthSpec& spec, std::size_t height,
                                std::size_t width);
/// Same chain starting from an already extracted jitter series.
BackgroundFeatures encode_jitter(const JitterSignal& jitter, std::size_t height, std::size_t width);

}  // namespace quadkit::vje
