#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>

#include "quadkit/diffusion.hpp"
#include "quadkit/formats.hpp"
#include "quadkit/gradsuite.hpp"
#include "quadkit/metrics.hpp"
#include "quadkit/pipeline.hpp"
#include "quadkit/soc.hpp"
#include "quadkit/synth.hpp"
#include "quadkit/tensor_io.hpp"
#include "quadkit/vje.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace quadkit;

namespace {

constexpr int kOk = 0;
constexpr int kNumerical = 1;
constexpr int kUsage = 2;

/// Failure of a verification command, reported with exit code 1.
struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

formats::RunConfig load_config(const std::string& path) {
  return path.empty() ? formats::default_run_config() : formats::load_run_config(path);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw formats::FormatError("cannot create directory " + dir.string() + ": " + ec.message());
}

/// (H, W) plane(s) from a PGM or QTNSR1 file; rank > 2 tensors are split into
/// their trailing (H, W) planes.
std::vector<Tensor> load_planes(const fs::path& path) {
  if (path.extension() == ".pgm") return {from_gray(read_pgm(path))};
  const Tensor t = read_tensor(path);
  if (t.rank() < 2) throw formats::FormatError(path.string() + ": expected at least two axes");
  const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  std::vector<Tensor> planes;
  for (std::size_t off = 0; off < t.numel(); off += h * w)
    planes.emplace_back(Shape{h, w}, std::vector<double>(t.data().begin() + static_cast<std::ptrdiff_t>(off),
                                                         t.data().begin() + static_cast<std::ptrdiff_t>(off + h * w)));
  return planes;
}

formats::TrackFile track_file(const synth::SynthBundle& b) {
  formats::TrackFile f;
  f.fps = b.spec.fps;
  f.width = b.spec.width;
  f.height = b.spec.height;
  f.tracks = b.tracks;
  return f;
}

void write_bundle(const synth::SynthBundle& b, const fs::path& dir) {
  ensure_dir(dir);
  write_tensor(dir / "frames.qtn", b.frames);
  synth::export_pgm(b, dir);
  formats::write_tracks(dir / "tracks.json", track_file(b));
  formats::write_trajectories(dir / "trajectories.json", b.trajectories);
}

int cmd_extract_jitter(const std::string& tracks, const std::string& out, double cutoff, double order, int track_id) {
  const auto file = formats::read_tracks(tracks);
  const auto& track = file.find(track_id);
  vje::ButterworthSpec spec{cutoff, order, file.fps};
  spec.validate();
  const Tensor series = vje::vertical_series(track);
  const auto jitter = vje::highpass_filter(series, spec);
  formats::write_jitter(out, jitter);
  formats::write_text(formats::spectrum_path(out), formats::dump_spectrum(series, jitter));
  return kOk;
}

int cmd_ptrack(const std::string& real, const std::string& gen) {
  const auto r = metrics::ptrack(formats::read_trajectories(real), formats::read_trajectories(gen));
  std::cout << formats::dump_ptrack_report(r) << "\n";
  return kOk;
}

int cmd_synth(const formats::RunConfig& cfg, const std::string& out, std::size_t index, const std::string& mode,
              double magnitude) {
  const auto bundle = synth::render(pipeline::toy_scene(cfg, index));
  write_bundle(bundle, out);
  json meta{{"index", index}, {"jitter_hz", bundle.spec.jitter.freq_hz}, {"true_jitter", bundle.true_jitter}};
  if (!mode.empty()) {
    const auto p = synth::perturb(bundle, synth::parse_perturbation(mode), magnitude);
    write_bundle(p, fs::path(out) / "perturbed");
    meta["perturbation"] = {{"mode", mode}, {"magnitude", magnitude}, {"expected_ptrack", p.expected_ptrack}};
  }
  formats::write_text(fs::path(out) / "meta.json", meta.dump(2) + "\n");
  return kOk;
}

int cmd_train_toy(const formats::RunConfig& cfg, const std::string& out) {
  const auto data = pipeline::toy_dataset(cfg);
  const auto sched = pipeline::schedule(cfg);
  Rng rng(cfg.seed);
  auto den = diffusion::ToyDenoiser::init(pipeline::toy_config(cfg), rng);
  const auto report = diffusion::train(den, data, sched, pipeline::train_config(cfg));
  diffusion::save_checkpoint(out, den, sched, cfg.seed);
  const json j{{"losses", report.losses},
               {"initial_loss", report.initial_loss},
               {"final_loss", report.final_loss},
               {"parameters", report.parameters},
               {"gamma", den.gated.gamma.value[0]}};
  formats::write_text(fs::path(out) / "report.json", j.dump(2) + "\n");
  std::cerr << "trained " << report.parameters << " parameters in " << report.seconds << " s: loss "
            << report.initial_loss << " -> " << report.final_loss << "\n";
  return kOk;
}

int cmd_sample(const formats::RunConfig& cfg, const std::string& checkpoint, const std::string& out,
               std::size_t index, const std::string& jitter_path, const std::string& frames_dir) {
  const auto info = diffusion::read_checkpoint_info(checkpoint);
  Rng init_rng(info.seed);
  auto den = diffusion::ToyDenoiser::init(info.cfg, init_rng);
  diffusion::load_checkpoint(checkpoint, den);
  const auto ex = pipeline::make_example(synth::render(pipeline::toy_scene(cfg, index)), pipeline::filter_spec(cfg));
  const auto cond = jitter_path.empty() ? ex.cond
                                        : pipeline::condition_on(ex, formats::read_jitter(jitter_path), cfg.height,
                                                                 cfg.width);
  Rng rng(cfg.seed);
  const Tensor z = diffusion::sample(den, cond, info.sched, rng);
  write_tensor(out, z);
  if (!frames_dir.empty()) {
    ensure_dir(frames_dir);
    const Tensor img = diffusion::decode_latents(z);
    const std::size_t h = img.dim(2), w = img.dim(3);
    for (std::size_t f = 0; f < img.dim(0); ++f) {
      const auto begin = img.data().begin() + static_cast<std::ptrdiff_t>(f * h * w);
      const Tensor plane({h, w}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(h * w)));
      char name[32];
      std::snprintf(name, sizeof name, "frame_%03zu.pgm", f);
      write_pgm(fs::path(frames_dir) / name, to_gray(plane));
    }
  }
  return kOk;
}

int cmd_metrics(const std::string& a, const std::string& b) {
  const auto pa = load_planes(a), pb = load_planes(b);
  if (pa.size() != pb.size() || pa.front().shape() != pb.front().shape())
    throw formats::FormatError("images differ in shape or frame count");
  double psnr = 0.0, ssim = 0.0;
  std::vector<double> per_psnr, per_ssim;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    per_psnr.push_back(metrics::psnr(pa[i], pb[i]));
    per_ssim.push_back(metrics::ssim(pa[i], pb[i]));
    psnr += per_psnr.back();
    ssim += per_ssim.back();
  }
  const double n = static_cast<double>(pa.size());
  // Identical frames (infinite PSNR) are reported as null.
  auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j{{"frames", pa.size()}, {"psnr", finite(psnr / n)}, {"ssim", ssim / n}};
  j["psnr_per_frame"] = json::array();
  for (double v : per_psnr) j["psnr_per_frame"].push_back(finite(v));
  j["ssim_per_frame"] = per_ssim;
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_encode(const formats::RunConfig& cfg, const std::string& jitter_path, const std::string& tracks_path,
               const std::string& out) {
  ensure_dir(out);
  if (!jitter_path.empty()) {
    const auto bg = vje::encode_jitter(formats::read_jitter(jitter_path), cfg.height, cfg.width);
    write_tensor(fs::path(out) / "plucker.qtn", bg.plucker);
    write_tensor(fs::path(out) / "f_bg.qtn", bg.features);
  }
  if (!tracks_path.empty()) {
    const auto file = formats::read_tracks(tracks_path);
    const soc::FourierEmbedSpec spec;
    for (const auto& tr : file.tracks) {
      Tensor boxes({tr.entries.size(), 4});
      for (std::size_t i = 0; i < tr.entries.size(); ++i) {
        const auto& e = tr.entries[i];
        const double w = static_cast<double>(file.width), h = static_cast<double>(file.height);
        boxes[i * 4 + 0] = e.x1 / w;
        boxes[i * 4 + 1] = e.y1 / h;
        boxes[i * 4 + 2] = e.x2 / w;
        boxes[i * 4 + 3] = e.y2 / h;
      }
      write_tensor(fs::path(out) / ("boxes_" + std::to_string(tr.id) + ".qtn"), soc::fourier_embed_rows(boxes, spec));
    }
  }
  return kOk;
}

int cmd_gradcheck(std::size_t trials, std::uint64_t seed) {
  bool ok = true;
  std::printf("%-22s %12s %10s  %s\n", "block", "max_rel_err", "tolerance", "status");
  for (const auto& name : gradsuite::block_names()) {
    const auto r = gradsuite::check_block(name, trials, seed);
    std::printf("%-22s %12.3e %10.0e  %s\n", name.c_str(), r.max_rel_error, r.tolerance, r.passed() ? "ok" : "FAIL");
    std::fflush(stdout);
    if (!r.passed()) {
      std::fprintf(stderr, "gradient check failed: %s\n", name.c_str());
      ok = false;
    }
  }
  if (!ok) throw VerificationFailure("gradient suite failed");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quadkit: jitter extraction, toy jitter-conditioned video diffusion and PTrack evaluation"};
  app.require_subcommand(1);
  std::string config;
  app.add_option("--config", config, "Run configuration JSON (defaults apply when omitted)");

  std::string tracks, out, real, gen, checkpoint, jitter, frames_dir, mode, a, b;
  double cutoff = 0.3, order = 1.0, magnitude = 0.0;
  int track_id = 0;
  std::size_t index = 0, trials = 20;
  std::uint64_t seed = 0;

  auto* ej = app.add_subcommand("extract-jitter", "High-pass the vertical box-centre series of one track");
  ej->add_option("--tracks", tracks, "Track JSON")->required();
  ej->add_option("--out", out, "Jitter JSON; a .spectrum.json sidecar is written next to it")->required();
  ej->add_option("--cutoff", cutoff, "Cutoff frequency in Hz")->capture_default_str();
  ej->add_option("--order", order, "Filter order")->capture_default_str();
  ej->add_option("--track-id", track_id, "Track id")->capture_default_str();

  auto* pt = app.add_subcommand("ptrack", "PTrack of generated against real trajectories (report on stdout)");
  pt->add_option("--real", real, "Real trajectory JSON")->required();
  pt->add_option("--gen", gen, "Generated trajectory JSON")->required();

  auto* sy = app.add_subcommand("synth", "Render one synthetic scene of the toy dataset");
  sy->add_option("--out", out, "Output directory")->required();
  sy->add_option("--index", index, "Scene index")->capture_default_str();
  sy->add_option("--perturb", mode, "vertical_offset or variance_change; also writes <out>/perturbed");
  sy->add_option("--magnitude", magnitude, "Perturbation magnitude")->capture_default_str();

  auto* tr = app.add_subcommand("train-toy", "Train the toy denoiser and write a checkpoint directory");
  tr->add_option("--out", out, "Checkpoint directory")->required();

  auto* sa = app.add_subcommand("sample", "Ancestral sampling from a checkpoint");
  sa->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  sa->add_option("--out", out, "Output latent tensor (QTNSR1)")->required();
  sa->add_option("--index", index, "Dataset scene providing the first frame and boxes")->capture_default_str();
  sa->add_option("--jitter", jitter, "Jitter JSON replacing the scene's own jitter conditioning");
  sa->add_option("--frames", frames_dir, "Directory for decoded PGM frames");

  auto* me = app.add_subcommand("metrics", "PSNR and SSIM between two images or frame stacks (.pgm or .qtn)");
  me->add_option("--a", a, "First image")->required();
  me->add_option("--b", b, "Second image")->required();

  auto* en = app.add_subcommand("encode", "Dump Plücker maps, background features and box embeddings");
  en->add_option("--jitter", jitter, "Jitter JSON");
  en->add_option("--tracks", tracks, "Track JSON");
  en->add_option("--out", out, "Output directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite over every differentiable block");
  gc->add_option("--trials", trials, "Random instances per block")->capture_default_str();
  gc->add_option("--seed", seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (ej->parsed()) return cmd_extract_jitter(tracks, out, cutoff, order, track_id);
    if (pt->parsed()) return cmd_ptrack(real, gen);
    if (me->parsed()) return cmd_metrics(a, b);
    if (gc->parsed()) return cmd_gradcheck(trials, seed);
    const auto cfg = load_config(config);
    if (sy->parsed()) return cmd_synth(cfg, out, index, mode, magnitude);
    if (tr->parsed()) return cmd_train_toy(cfg, out);
    if (sa->parsed()) return cmd_sample(cfg, checkpoint, out, index, jitter, frames_dir);
    if (en->parsed()) {
      if (jitter.empty() && tracks.empty()) throw std::invalid_argument("encode needs --jitter and/or --tracks");
      return cmd_encode(cfg, jitter, tracks, out);
    }
  } catch (const diffusion::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const VerificationFailure& e) {
    std::cerr << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
