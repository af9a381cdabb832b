#pragma once

// Procedural panoramic test videos with known vertical camera motion, moving
// objects and ground-truth point trajectories.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "quadkit/metrics.hpp"
#include "quadkit/tensor.hpp"
#include "quadkit/vje.hpp"

namespace quadkit::synth {

struct Oscillation {
  double amplitude = 0.0;  // pixels
  double freq_hz = 0.0;
  double phase = 0.0;  // radians

  double at(double seconds) const;
};

struct ObjectSpec {
  double width = 8.0;
  double height = 8.0;
  double speed = 1.0;  // pixels per frame, positive = rightwards
  double x0 = 0.0;     // left edge at frame 0
  double y0 = 0.0;     // top edge before the vertical motion
  double gray = 0.9;
};

struct SceneSpec {
  std::size_t width = 64;
  std::size_t height = 32;
  std::size_t frames = 8;
  double fps = 10.0;
  Oscillation drift;
  Oscillation jitter;
  std::vector<ObjectSpec> objects;
  std::size_t grid = 10;
  std::uint64_t seed = 0;
  /// Vertical period of the background texture in pixels.
  double texture_period = 16.0;
  /// Contrast of the horizontal part of the texture relative to the vertical part.
  double horizontal_contrast = 1.0;
  /// Static vertical shift of the whole video in pixels.
  double vertical_offset = 0.0;

  /// Throws on W != 2H, out-of-band frequencies or objects that do not fit.
  void validate() const;
  /// d(t) = drift(t) + jitter(t) + vertical_offset in pixels at frame index t.
  double displacement(std::size_t frame) const;
};

struct SynthBundle {
  SceneSpec spec;
  Tensor frames;  // (T, 1, H, W) in [0, 1]
  std::vector<vje::BoxTrack> tracks;
  std::vector<double> true_jitter;
  metrics::PTrackSet trajectories;
  /// Set by perturb(): analytic PTrack of this bundle against its source.
  double expected_ptrack = 0.0;
  std::string perturbation = "none";
  double magnitude = 0.0;
};

SynthBundle render(const SceneSpec& spec);

enum class Perturbation { VerticalOffset, VarianceChange };
Perturbation parse_perturbation(const std::string& name);

/// VerticalOffset shifts the whole video down by `magnitude` pixels;
/// VarianceChange scales the jitter amplitude by (1 + magnitude).
SynthBundle perturb(const SynthBundle& bundle, Perturbation mode, double magnitude);

/// Writes frame_000.pgm, frame_001.pgm, ... into `dir`.
void export_pgm(const SynthBundle& bundle, const std::filesystem::path& dir);

}  // namespace quadkit::synth
