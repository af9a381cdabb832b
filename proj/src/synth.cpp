#include "quadkit/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "quadkit/rng.hpp"
#include "quadkit/tensor_io.hpp"

namespace quadkit::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap(double x, double period) {
  double r = std::fmod(x, period);
  return r < 0.0 ? r + period : r;
}

// Length of [a0, a1) intersected with [b0, b1).
double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

struct Texture {
  double phase_v = 0.0;
  double phase_h = 0.0;
  double cycles_h = 1.0;
};

Texture texture_for(std::uint64_t seed) {
  Rng rng(seed ^ 0x7E47u);
  Texture t;
  t.phase_v = rng.uniform(0.0, kTwoPi);
  t.phase_h = rng.uniform(0.0, kTwoPi);
  t.cycles_h = static_cast<double>(1 + rng.below(4));
  return t;
}

double background(const SceneSpec& s, const Texture& tex, double x, double y) {
  const double w = static_cast<double>(s.width), h = static_cast<double>(s.height);
  return 0.5 + 0.25 * std::sin(kTwoPi * y / s.texture_period + tex.phase_v) +
         0.1 * s.horizontal_contrast * std::sin(kTwoPi * tex.cycles_h * x / w + tex.phase_h) + 0.1 * (y / h - 0.5);
}

double object_left(const ObjectSpec& o, std::size_t frame, double width) {
  return wrap(o.x0 + o.speed * static_cast<double>(frame), width);
}

// Fraction of pixel [px, px + 1) x [py, py + 1) covered by the object, with
// horizontal wraparound.
double coverage(const ObjectSpec& o, double left, double top, double px, double py, double width) {
  const double cy = overlap(py, py + 1.0, top, top + o.height);
  if (cy == 0.0) return 0.0;
  double cx = 0.0;
  for (double shift : {-width, 0.0, width}) cx += overlap(px, px + 1.0, left + shift, left + shift + o.width);
  return std::min(1.0, cx) * cy;
}

bool inside_object(const ObjectSpec& o, double left, double top, double x, double y, double width) {
  if (y < top || y >= top + o.height) return false;
  const double rel = wrap(x - left, width);
  return rel < o.width;
}

}  // namespace

double Oscillation::at(double seconds) const { return amplitude * std::sin(kTwoPi * freq_hz * seconds + phase); }

double SceneSpec::displacement(std::size_t frame) const {
  const double t = static_cast<double>(frame) / fps;
  return drift.at(t) + jitter.at(t) + vertical_offset;
}

void SceneSpec::validate() const {
  if (height < 4 || width != 2 * height) throw std::invalid_argument("scene must be panoramic: width == 2 * height");
  if (frames < 1) throw std::invalid_argument("scene needs at least one frame");
  if (!(fps > 0.0)) throw std::invalid_argument("fps must be positive");
  if (drift.amplitude != 0.0 && !(drift.freq_hz >= 0.0 && drift.freq_hz <= 0.1))
    throw std::invalid_argument("drift frequency must lie in [0, 0.1] Hz");
  if (jitter.amplitude != 0.0 && !(jitter.freq_hz >= 1.0 && jitter.freq_hz < fps / 2.0))
    throw std::invalid_argument("jitter frequency must lie in [1 Hz, fps / 2)");
  if (!(texture_period > 0.0)) throw std::invalid_argument("texture period must be positive");
  if (grid < 1) throw std::invalid_argument("grid side must be positive");
  const double reach = std::abs(drift.amplitude) + std::abs(jitter.amplitude) + std::abs(vertical_offset);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (!(o.width > 0.0 && o.height > 0.0) || o.width > static_cast<double>(width) ||
        o.height > static_cast<double>(height))
      throw std::invalid_argument("object " + std::to_string(i) + " is larger than the frame");
    if (o.y0 - reach < 0.0 || o.y0 + o.height + reach > static_cast<double>(height))
      throw std::invalid_argument("object " + std::to_string(i) + " would leave the frame vertically");
  }
}

SynthBundle render(const SceneSpec& spec) {
  spec.validate();
  const std::size_t t_count = spec.frames, h = spec.height, w = spec.width;
  const double wd = static_cast<double>(w);
  const Texture tex = texture_for(spec.seed);
  SynthBundle b;
  b.spec = spec;
  b.frames = Tensor({t_count, 1, h, w});
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    vje::BoxTrack tr;
    tr.id = static_cast<int>(i);
    tr.fps = spec.fps;
    tr.image_width = w;
    tr.image_height = h;
    b.tracks.push_back(tr);
  }
  for (std::size_t f = 0; f < t_count; ++f) {
    const double d = spec.displacement(f);
    b.true_jitter.push_back(spec.jitter.at(static_cast<double>(f) / spec.fps));
    double* frame = b.frames.data().data() + f * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        frame[y * w + x] = background(spec, tex, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5 - d);
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      const auto& o = spec.objects[i];
      const double left = object_left(o, f, wd), top = o.y0 + d;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double c = coverage(o, left, top, static_cast<double>(x), static_cast<double>(y), wd);
          if (c > 0.0) frame[y * w + x] = (1.0 - c) * frame[y * w + x] + c * o.gray;
        }
      b.tracks[i].entries.push_back(
          {static_cast<long>(f), left, top, std::min(left + o.width, wd), top + o.height, true});
    }
  }

  auto& traj = b.trajectories;
  traj.width = w;
  traj.height = h;
  traj.frames = t_count;
  traj.grid = spec.grid;
  // Trajectories start on the grid; a static offset moves them as a whole.
  const double d0 = spec.displacement(0) - spec.vertical_offset;
  for (const auto& p : metrics::grid_points(w, h, spec.grid)) {
    const ObjectSpec* carrier = nullptr;
    for (const auto& o : spec.objects)
      if (inside_object(o, object_left(o, 0, wd), o.y0 + spec.displacement(0), p.x, p.y, wd)) {
        carrier = &o;
        break;
      }
    metrics::Trajectory tj;
    for (std::size_t f = 0; f < t_count; ++f) {
      const double x = carrier ? wrap(p.x + carrier->speed * static_cast<double>(f), wd) : p.x;
      tj.push_back({x, p.y + spec.displacement(f) - d0});
    }
    traj.points.push_back(std::move(tj));
  }
  return b;
}

Perturbation parse_perturbation(const std::string& name) {
  if (name == "vertical_offset") return Perturbation::VerticalOffset;
  if (name == "variance_change") return Perturbation::VarianceChange;
  throw std::invalid_argument("unknown perturbation mode '" + name + "'");
}

SynthBundle perturb(const SynthBundle& bundle, Perturbation mode, double magnitude) {
  if (!std::isfinite(magnitude)) throw std::invalid_argument("perturbation magnitude must be finite");
  if (magnitude == 0.0) return bundle;
  SceneSpec spec = bundle.spec;
  if (mode == Perturbation::VarianceChange) spec.jitter.amplitude *= 1.0 + magnitude;
  else spec.vertical_offset += magnitude;
  SynthBundle out = render(spec);

  // Every trajectory shares the vertical series y0 + d(t) - d(0), so the
  // metric reduces to one term regardless of which points the filter keeps.
  const std::size_t t_count = spec.frames;
  std::vector<double> real(t_count), gen(t_count);
  for (std::size_t f = 0; f < t_count; ++f) {
    real[f] = bundle.trajectories.points[0][f].y;
    gen[f] = out.trajectories.points[0][f].y;
  }
  auto var = [](const std::vector<double>& v) {
    double m = 0.0, s = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
  };
  const double dy = bundle.trajectories.dy();
  double offset_term = 0.0;
  for (std::size_t f = 0; f < t_count; ++f) offset_term += ((gen[f] - real[f]) / dy) * ((gen[f] - real[f]) / dy);
  offset_term /= static_cast<double>(t_count);
  const double dv = var(real) - var(gen);
  out.expected_ptrack = offset_term * dv * dv;
  out.perturbation = mode == Perturbation::VerticalOffset ? "vertical_offset" : "variance_change";
  out.magnitude = magnitude;
  return out;
}

void export_pgm(const SynthBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t h = bundle.frames.dim(2), w = bundle.frames.dim(3);
  for (std::size_t f = 0; f < bundle.frames.dim(0); ++f) {
    Tensor img({h, w}, std::vector<double>(bundle.frames.data().begin() + static_cast<std::ptrdiff_t>(f * h * w),
                                            bundle.frames.data().begin() + static_cast<std::ptrdiff_t>((f + 1) * h * w)));
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.pgm", f);
    write_pgm(dir / name, to_gray(img));
  }
}

}  // namespace quadkit::synth
