#include <gtest/gtest.h>

#include <cstdlib>
#include <json.hpp>

#include "quadkit/formats.hpp"
#include "quadkit/rng.hpp"

using namespace quadkit;
using namespace quadkit::formats;

namespace {

class ScopedSeed {
 public:
  explicit ScopedSeed(const char* value) { setenv("QUADKIT_SEED", value, 1); }
  ~ScopedSeed() { unsetenv("QUADKIT_SEED"); }
};

}  // namespace

TEST(Tracks, RoundTripPreservesValues) {
  Rng rng(1);
  TrackFile f;
  f.fps = 12.5;
  f.width = 64;
  f.height = 32;
  for (int id : {3, 7}) {
    vje::BoxTrack t{id, f.fps, f.width, f.height, {}};
    for (long k = 0; k < 5; ++k) {
      const double x = rng.uniform(0, 40), y = rng.uniform(0, 20);
      t.entries.push_back({k * 2, x, y, x + rng.uniform(1, 10), y + rng.uniform(1, 10), k != 2});
    }
    f.tracks.push_back(t);
  }
  const TrackFile back = parse_tracks(dump_tracks(f));
  EXPECT_EQ(back.fps, f.fps);
  ASSERT_EQ(back.tracks.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.tracks[i].id, f.tracks[i].id);
    ASSERT_EQ(back.tracks[i].entries.size(), f.tracks[i].entries.size());
    for (std::size_t k = 0; k < f.tracks[i].entries.size(); ++k) {
      const auto &a = back.tracks[i].entries[k], &b = f.tracks[i].entries[k];
      EXPECT_EQ(a.frame, b.frame);
      EXPECT_EQ(a.x1, b.x1);
      EXPECT_EQ(a.y1, b.y1);
      EXPECT_EQ(a.x2, b.x2);
      EXPECT_EQ(a.y2, b.y2);
      EXPECT_EQ(a.visible, b.visible);
    }
  }
  EXPECT_EQ(back.find(7).id, 7);
  EXPECT_THROW(back.find(5), std::exception);
}

TEST(Tracks, RejectsMalformedInput) {
  EXPECT_THROW(parse_tracks("{not json"), FormatError);
  EXPECT_THROW(parse_tracks(R"({"fps": 10})"), FormatError);
}

TEST(Trajectories, RoundTripPreservesValues) {
  Rng rng(2);
  metrics::PTrackSet s{64, 32, 4, 2, {}};
  for (int i = 0; i < 4; ++i) {
    metrics::Trajectory t;
    for (int k = 0; k < 4; ++k) t.push_back({rng.uniform(0, 63), rng.uniform(0, 31)});
    s.points.push_back(t);
  }
  const auto back = parse_trajectories(dump_trajectories(s));
  EXPECT_EQ(back.width, s.width);
  EXPECT_EQ(back.grid, s.grid);
  EXPECT_EQ(back.points, s.points);
  metrics::PTrackSet bad = s;
  bad.points.pop_back();
  EXPECT_THROW(parse_trajectories(dump_trajectories(bad)), std::exception);
}

TEST(Jitter, RoundTripPreservesValues) {
  vje::JitterSignal j;
  j.values = {0.1, -2.5, 1e-17, 3.0};
  j.spec = {0.4, 2.0, 12.0};
  j.source_mean = 17.25;
  const auto back = parse_jitter(dump_jitter(j));
  EXPECT_EQ(back.values, j.values);
  EXPECT_EQ(back.spec.cutoff_hz, 0.4);
  EXPECT_EQ(back.spec.order, 2.0);
  EXPECT_EQ(back.spec.sample_rate_hz, 12.0);
  EXPECT_EQ(back.source_mean, 17.25);
  EXPECT_EQ(spectrum_path("out/jit.json"), std::filesystem::path("out/jit.spectrum.json"));
}

TEST(RunConfig, DefaultsRoundTrip) {
  const RunConfig d = default_run_config();
  const RunConfig back = parse_run_config(dump_run_config(d));
  EXPECT_EQ(dump_run_config(back), dump_run_config(d));
}

TEST(RunConfig, UnknownKeysAndWrongTypesAreFatal) {
  EXPECT_THROW(parse_run_config(R"({"cutof_hz": 0.3})"), FormatError);
  EXPECT_THROW(parse_run_config(R"({"cutoff_hz": "0.3"})"), FormatError);
  EXPECT_THROW(parse_run_config(R"({"cutoff_hz": -1})"), std::exception);
  const RunConfig c = parse_run_config(R"({"cutoff_hz": 0.5, "videos": 3})");
  EXPECT_EQ(c.cutoff_hz, 0.5);
  EXPECT_EQ(c.videos, 3u);
  EXPECT_EQ(c.order, RunConfig{}.order);
}

TEST(RunConfig, SeedEnvironmentOverride) {
  {
    ScopedSeed s("1234");
    EXPECT_EQ(default_run_config().seed, 1234u);
    EXPECT_EQ(parse_run_config(R"({"seed": 5})").seed, 1234u);
  }
  EXPECT_EQ(parse_run_config(R"({"seed": 5})").seed, 5u);
}

TEST(PTrackReport, ContainsValueAndWarnings) {
  metrics::PTrackResult r{0.25, 12, {"weights vanish"}};
  const auto j = nlohmann::json::parse(dump_ptrack_report(r));
  EXPECT_EQ(j.at("ptrack").get<double>(), 0.25);
  EXPECT_EQ(j.at("kept").get<std::size_t>(), 12u);
  EXPECT_EQ(j.at("warnings").size(), 1u);
}
