#pragma once

// JSON file formats: box tracks, jitter series (with a spectrum sidecar),
// point trajectories, metric reports and the strict run configuration.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadkit/metrics.hpp"
#include "quadkit/vje.hpp"

namespace quadkit::formats {

/// Malformed or semantically invalid input file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrackFile {
  double fps = 10.0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<vje::BoxTrack> tracks;

  const vje::BoxTrack& find(int id) const;
};

TrackFile parse_tracks(const std::string& text);
std::string dump_tracks(const TrackFile& file);
TrackFile read_tracks(const std::filesystem::path& path);
void write_tracks(const std::filesystem::path& path, const TrackFile& file);

vje::JitterSignal parse_jitter(const std::string& text);
std::string dump_jitter(const vje::JitterSignal& jitter);
vje::JitterSignal read_jitter(const std::filesystem::path& path);
void write_jitter(const std::filesystem::path& path, const vje::JitterSignal& jitter);
/// Per-bin frequency and magnitude of the raw and filtered series.
std::string dump_spectrum(const Tensor& raw_series, const vje::JitterSignal& jitter);
/// "<stem>.spectrum.json" next to the jitter file.
std::filesystem::path spectrum_path(const std::filesystem::path& jitter_path);

metrics::PTrackSet parse_trajectories(const std::string& text);
std::string dump_trajectories(const metrics::PTrackSet& set);
metrics::PTrackSet read_trajectories(const std::filesystem::path& path);
void write_trajectories(const std::filesystem::path& path, const metrics::PTrackSet& set);

std::string dump_ptrack_report(const metrics::PTrackResult& r);

struct RunConfig {
  std::uint64_t seed = 0;
  // scene
  std::size_t width = 64;
  std::size_t height = 32;
  std::size_t frames = 8;
  double fps = 10.0;
  std::size_t grid = 10;
  std::size_t objects = 1;
  double jitter_amplitude = 3.0;
  double jitter_min_hz = 1.0;
  double jitter_max_hz = 4.0;
  double drift_amplitude = 0.0;
  double drift_hz = 0.05;
  // jitter filter
  double cutoff_hz = 0.3;
  double order = 1.0;
  // diffusion
  std::size_t diffusion_steps = 100;
  double beta_start = 1e-3;
  double beta_end = 0.2;
  // denoiser
  std::size_t hidden = 16;
  std::size_t key_dim = 8;
  std::size_t enhancer_channels = 8;
  std::size_t ffc_blocks = 1;
  std::size_t state_dim = 4;
  // training
  std::size_t videos = 4;
  std::size_t train_steps = 200;
  double lr = 0.05;
  double clip = 1.0;

  void validate() const;
};

/// Strict: unknown keys and wrong types are errors. QUADKIT_SEED, when set,
/// overrides the seed.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Defaults with the QUADKIT_SEED override applied.
RunConfig default_run_config();
std::string dump_run_config(const RunConfig& cfg);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace quadkit::formats
