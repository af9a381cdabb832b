#include "quadkit/formats.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "quadkit/fft.hpp"

namespace quadkit::formats {

using nlohmann::json;

namespace {

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed JSON: ") + e.what());
  }
}

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw FormatError(std::string(what) + ": unknown key '" + key + "'");
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os << text;
}

const vje::BoxTrack& TrackFile::find(int id) const {
  for (const auto& t : tracks)
    if (t.id == id) return t;
  throw FormatError("no track with id " + std::to_string(id));
}

TrackFile parse_tracks(const std::string& text) {
  const json j = parse_json(text);
  TrackFile f = guarded("track file", [&] {
    reject_unknown(j, {"fps", "width", "height", "tracks"}, "track file");
    TrackFile out;
    out.fps = j.at("fps").get<double>();
    out.width = j.at("width").get<std::size_t>();
    out.height = j.at("height").get<std::size_t>();
    for (const auto& jt : j.at("tracks")) {
      reject_unknown(jt, {"id", "boxes"}, "track");
      vje::BoxTrack t;
      t.id = jt.at("id").get<int>();
      t.fps = out.fps;
      t.image_width = out.width;
      t.image_height = out.height;
      for (const auto& b : jt.at("boxes")) {
        if (!b.is_array() || b.size() != 6) throw FormatError("box rows must be [frame, x1, y1, x2, y2, visible]");
        const int vis = b[5].get<int>();
        if (vis != 0 && vis != 1) throw FormatError("visible flag must be 0 or 1");
        t.entries.push_back({b[0].get<long>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>(),
                             b[4].get<double>(), vis == 1});
      }
      out.tracks.push_back(std::move(t));
    }
    return out;
  });
  try {
    for (const auto& t : f.tracks) t.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid track: ") + e.what());
  }
  return f;
}

std::string dump_tracks(const TrackFile& file) {
  json tracks = json::array();
  for (const auto& t : file.tracks) {
    json boxes = json::array();
    for (const auto& e : t.entries) boxes.push_back({e.frame, e.x1, e.y1, e.x2, e.y2, e.visible ? 1 : 0});
    tracks.push_back({{"id", t.id}, {"boxes", boxes}});
  }
  return json{{"fps", file.fps}, {"width", file.width}, {"height", file.height}, {"tracks", tracks}}.dump(2) + "\n";
}

TrackFile read_tracks(const std::filesystem::path& path) { return parse_tracks(read_text(path)); }
void write_tracks(const std::filesystem::path& path, const TrackFile& file) { write_text(path, dump_tracks(file)); }

vje::JitterSignal parse_jitter(const std::string& text) {
  const json j = parse_json(text);
  return guarded("jitter file", [&] {
    reject_unknown(j, {"cutoff_hz", "order", "fs", "values", "source_mean"}, "jitter file");
    vje::JitterSignal s;
    s.spec.cutoff_hz = j.at("cutoff_hz").get<double>();
    s.spec.order = j.at("order").get<double>();
    s.spec.sample_rate_hz = j.at("fs").get<double>();
    s.values = j.at("values").get<std::vector<double>>();
    if (j.contains("source_mean")) s.source_mean = j.at("source_mean").get<double>();
    return s;
  });
}

std::string dump_jitter(const vje::JitterSignal& s) {
  return json{{"cutoff_hz", s.spec.cutoff_hz},
              {"order", s.spec.order},
              {"fs", s.spec.sample_rate_hz},
              {"values", s.values},
              {"source_mean", s.source_mean}}
             .dump(2) +
         "\n";
}

vje::JitterSignal read_jitter(const std::filesystem::path& path) { return parse_jitter(read_text(path)); }
void write_jitter(const std::filesystem::path& path, const vje::JitterSignal& s) { write_text(path, dump_jitter(s)); }

std::string dump_spectrum(const Tensor& raw_series, const vje::JitterSignal& jitter) {
  const std::size_t n = raw_series.numel();
  const ComplexTensor raw = dft_1d(ComplexTensor::from_real(raw_series));
  const ComplexTensor filt = dft_1d(ComplexTensor::from_real(Tensor({n}, jitter.values)));
  json bins = json::array();
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * jitter.spec.sample_rate_hz / static_cast<double>(n);
    bins.push_back({{"bin", k},
                    {"frequency_hz", f},
                    {"raw_magnitude", std::hypot(raw.re[k], raw.im[k])},
                    {"filtered_magnitude", std::hypot(filt.re[k], filt.im[k])},
                    {"gain", k == 0 ? 0.0 : vje::butterworth_response(jitter.spec, f)}});
  }
  return json{{"fs", jitter.spec.sample_rate_hz}, {"cutoff_hz", jitter.spec.cutoff_hz}, {"bins", bins}}.dump(2) + "\n";
}

std::filesystem::path spectrum_path(const std::filesystem::path& jitter_path) {
  std::filesystem::path p = jitter_path;
  p.replace_filename(jitter_path.stem().string() + ".spectrum.json");
  return p;
}

metrics::PTrackSet parse_trajectories(const std::string& text) {
  const json j = parse_json(text);
  metrics::PTrackSet set = guarded("trajectory file", [&] {
    reject_unknown(j, {"width", "height", "T", "G", "points"}, "trajectory file");
    metrics::PTrackSet s;
    s.width = j.at("width").get<std::size_t>();
    s.height = j.at("height").get<std::size_t>();
    s.frames = j.at("T").get<std::size_t>();
    s.grid = j.at("G").get<std::size_t>();
    for (const auto& traj : j.at("points")) {
      metrics::Trajectory t;
      for (const auto& p : traj) {
        if (!p.is_array() || p.size() != 2) throw FormatError("trajectory points must be [x, y]");
        t.push_back({p[0].get<double>(), p[1].get<double>()});
      }
      s.points.push_back(std::move(t));
    }
    return s;
  });
  try {
    set.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid trajectory file: ") + e.what());
  }
  return set;
}

std::string dump_trajectories(const metrics::PTrackSet& set) {
  json points = json::array();
  for (const auto& t : set.points) {
    json traj = json::array();
    for (const auto& p : t) traj.push_back({p.x, p.y});
    points.push_back(std::move(traj));
  }
  return json{{"width", set.width}, {"height", set.height}, {"T", set.frames}, {"G", set.grid}, {"points", points}}
             .dump() +
         "\n";
}

metrics::PTrackSet read_trajectories(const std::filesystem::path& path) { return parse_trajectories(read_text(path)); }
void write_trajectories(const std::filesystem::path& path, const metrics::PTrackSet& set) {
  write_text(path, dump_trajectories(set));
}

std::string dump_ptrack_report(const metrics::PTrackResult& r) {
  return json{{"ptrack", r.value}, {"kept", r.kept}, {"warnings", r.warnings}}.dump() + "\n";
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw FormatError("config: " + m); };
  if (height < 4 || width != 2 * height) fail("width must equal 2 * height");
  if (height % 32 != 0) fail("height must be a multiple of 32 (latent bottleneck)");
  if (frames < 1) fail("frames must be positive");
  if (!(fps > 0.0)) fail("fps must be positive");
  if (grid < 1) fail("grid must be positive");
  if (objects > 8) fail("at most 8 objects");
  if (!(cutoff_hz > 0.0)) fail("cutoff must be positive");
  if (!(order > 0.0)) fail("order must be positive");
  if (!(jitter_min_hz >= 1.0 && jitter_min_hz <= jitter_max_hz && jitter_max_hz < fps / 2.0))
    fail("jitter frequency range must satisfy 1 <= min <= max < fps / 2");
  if (!(drift_hz >= 0.0 && drift_hz <= 0.1)) fail("drift frequency must lie in [0, 0.1]");
  if (diffusion_steps < 1) fail("diffusion_steps must be positive");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) fail("need 0 < beta_start <= beta_end < 1");
  if (hidden < 2 || hidden % 2 != 0) fail("hidden must be even");
  if (key_dim < 1 || enhancer_channels < 2 || state_dim < 1) fail("model dimensions must be positive");
  if (videos < 1) fail("videos must be positive");
  if (lr < 0.0 || clip < 0.0) fail("lr and clip must be non-negative");
}

RunConfig parse_run_config(const std::string& text) {
  const json j = parse_json(text);
  RunConfig c = guarded("config", [&] {
    reject_unknown(j,
                   {"seed", "width", "height", "frames", "fps", "grid", "objects", "jitter_amplitude", "jitter_min_hz",
                    "jitter_max_hz", "drift_amplitude", "drift_hz", "cutoff_hz", "order", "diffusion_steps",
                    "beta_start", "beta_end", "hidden", "key_dim", "enhancer_channels", "ffc_blocks", "state_dim",
                    "videos", "train_steps", "lr", "clip"},
                   "config");
    RunConfig r;
    auto get = [&](const char* key, auto& field) {
      if (!j.contains(key)) return;
      using T = std::decay_t<decltype(field)>;
      const json& v = j.at(key);
      if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw FormatError(std::string("config: '") + key + "' must be a number");
      } else {
        if (!v.is_number_unsigned()) throw FormatError(std::string("config: '") + key + "' must be a non-negative integer");
      }
      field = v.get<T>();
    };
    get("seed", r.seed);
    get("width", r.width);
    get("height", r.height);
    get("frames", r.frames);
    get("fps", r.fps);
    get("grid", r.grid);
    get("objects", r.objects);
    get("jitter_amplitude", r.jitter_amplitude);
    get("jitter_min_hz", r.jitter_min_hz);
    get("jitter_max_hz", r.jitter_max_hz);
    get("drift_amplitude", r.drift_amplitude);
    get("drift_hz", r.drift_hz);
    get("cutoff_hz", r.cutoff_hz);
    get("order", r.order);
    get("diffusion_steps", r.diffusion_steps);
    get("beta_start", r.beta_start);
    get("beta_end", r.beta_end);
    get("hidden", r.hidden);
    get("key_dim", r.key_dim);
    get("enhancer_channels", r.enhancer_channels);
    get("ffc_blocks", r.ffc_blocks);
    get("state_dim", r.state_dim);
    get("videos", r.videos);
    get("train_steps", r.train_steps);
    get("lr", r.lr);
    get("clip", r.clip);
    return r;
  });
  if (const char* env = std::getenv("QUADKIT_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw FormatError("QUADKIT_SEED must be a non-negative integer");
    c.seed = v;
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_text(path)); }
RunConfig default_run_config() { return parse_run_config("{}"); }

std::string dump_run_config(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"width", c.width},
              {"height", c.height},
              {"frames", c.frames},
              {"fps", c.fps},
              {"grid", c.grid},
              {"objects", c.objects},
              {"jitter_amplitude", c.jitter_amplitude},
              {"jitter_min_hz", c.jitter_min_hz},
              {"jitter_max_hz", c.jitter_max_hz},
              {"drift_amplitude", c.drift_amplitude},
              {"drift_hz", c.drift_hz},
              {"cutoff_hz", c.cutoff_hz},
              {"order", c.order},
              {"diffusion_steps", c.diffusion_steps},
              {"beta_start", c.beta_start},
              {"beta_end", c.beta_end},
              {"hidden", c.hidden},
              {"key_dim", c.key_dim},
              {"enhancer_channels", c.enhancer_channels},
              {"ffc_blocks", c.ffc_blocks},
              {"state_dim", c.state_dim},
              {"videos", c.videos},
              {"train_steps", c.train_steps},
              {"lr", c.lr},
              {"clip", c.clip}}
             .dump(2) +
         "\n";
}

}  // namespace quadkit::formats
