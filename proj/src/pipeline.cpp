#include "quadkit/pipeline.hpp"

#include <numbers>

namespace quadkit::pipeline {

vje::ButterworthSpec filter_spec(const formats::RunConfig& cfg) { return {cfg.cutoff_hz, cfg.order, cfg.fps}; }

diffusion::ToyConfig toy_config(const formats::RunConfig& cfg) {
  diffusion::ToyConfig t;
  t.hidden = cfg.hidden;
  t.key_dim = cfg.key_dim;
  t.mlp_hidden = cfg.hidden;
  t.enhancer = {cfg.hidden, cfg.enhancer_channels, 3, cfg.ffc_blocks, cfg.state_dim, true};
  return t;
}

diffusion::DiffusionSchedule schedule(const formats::RunConfig& cfg) {
  return diffusion::make_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end);
}

diffusion::TrainConfig train_config(const formats::RunConfig& cfg) {
  diffusion::TrainConfig t;
  t.steps = cfg.train_steps;
  t.lr = cfg.lr;
  t.clip = cfg.clip;
  t.seed = cfg.seed;
  return t;
}

synth::SceneSpec toy_scene(const formats::RunConfig& cfg, std::size_t index) {
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + index + 1);
  synth::SceneSpec s;
  s.width = cfg.width;
  s.height = cfg.height;
  s.frames = cfg.frames;
  s.fps = cfg.fps;
  s.grid = cfg.grid;
  s.seed = cfg.seed;
  s.jitter = {cfg.jitter_amplitude, rng.uniform(cfg.jitter_min_hz, cfg.jitter_max_hz),
              rng.uniform(0.0, 2.0 * std::numbers::pi)};
  s.drift = {cfg.drift_amplitude, cfg.drift_hz, rng.uniform(0.0, 2.0 * std::numbers::pi)};
  const double h = static_cast<double>(cfg.height), w = static_cast<double>(cfg.width);
  const double size = h / 4.0;
  for (std::size_t i = 0; i < cfg.objects; ++i) {
    synth::ObjectSpec o;
    o.width = size;
    o.height = size;
    o.speed = rng.uniform(-2.0, 2.0);
    o.x0 = rng.uniform(0.0, w);
    o.y0 = (h - size) / 2.0;
    o.gray = i % 2 == 0 ? 0.9 : 0.1;
    s.objects.push_back(o);
  }
  return s;
}

vje::JitterSignal scene_jitter(const synth::SynthBundle& bundle, const vje::ButterworthSpec& spec) {
  if (!bundle.tracks.empty()) return vje::highpass_filter(vje::vertical_series(bundle.tracks.front()), spec);
  return vje::highpass_filter(Tensor({bundle.true_jitter.size()}, bundle.true_jitter), spec);
}

diffusion::Example make_example(const synth::SynthBundle& bundle, const vje::ButterworthSpec& spec) {
  diffusion::Example ex;
  ex.latents = diffusion::encode_frames(bundle.frames);
  const auto bg = vje::encode_jitter(scene_jitter(bundle, spec), bundle.spec.height, bundle.spec.width);
  ex.cond = diffusion::make_conditioning(ex.latents, bundle.tracks, bg.features);
  return ex;
}

diffusion::Conditioning condition_on(const diffusion::Example& ex, const vje::JitterSignal& jitter,
                                     std::size_t image_height, std::size_t image_width) {
  diffusion::Conditioning c = ex.cond;
  c.f_bg = vje::encode_jitter(jitter, image_height, image_width).features;
  if (c.f_bg.dim(0) != ex.latents.dim(0)) throw std::invalid_argument("jitter length does not match the frame count");
  return c;
}

std::vector<diffusion::Example> toy_dataset(const formats::RunConfig& cfg) {
  std::vector<diffusion::Example> data;
  for (std::size_t i = 0; i < cfg.videos; ++i) data.push_back(make_example(synth::render(toy_scene(cfg, i)), filter_spec(cfg)));
  return data;
}

}  // namespace quadkit::pipeline
