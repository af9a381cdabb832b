#include "quadkit/diffusion.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>

#include "quadkit/tensor_io.hpp"

namespace quadkit::diffusion {

using nlohmann::json;

namespace {

Tensor scaled_normal(Rng& rng, Shape shape, std::size_t fan_in, double gain = 1.0) {
  return rng.normal_tensor(std::move(shape), gain / std::sqrt(static_cast<double>(fan_in)));
}

void check_step(std::size_t t, const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.steps)
    throw std::out_of_range("diffusion step " + std::to_string(t) + " outside 1.." + std::to_string(sched.steps));
}

}  // namespace

DiffusionSchedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("schedule requires 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.steps = steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.alpha_bars.push_back(1.0);
  double log_abar = 0.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    s.betas.push_back(beta);
    log_abar += std::log1p(-beta);
    s.alpha_bars.push_back(std::exp(log_abar));
  }
  return s;
}

Tensor q_sample(const Tensor& z0, std::size_t t, const Tensor& eps, const DiffusionSchedule& sched) {
  check_step(t, sched);
  if (z0.shape() != eps.shape()) throw std::invalid_argument("noise shape does not match the latent");
  const double a = std::sqrt(sched.alpha_bar(t)), b = std::sqrt(1.0 - sched.alpha_bar(t));
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

Tensor timestep_embedding(std::size_t t, std::size_t dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("timestep embedding dimension must be even");
  const std::size_t half = dim / 2;
  Tensor out({dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(static_cast<double>(t) * freq);
    out[half + i] = std::cos(static_cast<double>(t) * freq);
  }
  return out;
}

Tensor encode_frames(const Tensor& frames) {
  if (frames.rank() != 4 || frames.dim(1) != 1) throw std::invalid_argument("expected grayscale frames (T, 1, H, W)");
  const std::size_t t = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
  if (h % 4 != 0 || w % 4 != 0) throw std::invalid_argument("frame size must be divisible by 4");
  const std::size_t lh = h / 4, lw = w / 4;
  Tensor out({t, 4, lh, lw});
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t y = 0; y < lh; ++y)
      for (std::size_t x = 0; x < lw; ++x)
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            // Pooled pixel (2y + dy, 2x + dx) of the half-resolution image.
            const std::size_t py = 2 * (2 * y + dy), px = 2 * (2 * x + dx);
            const double* src = frames.data().data() + f * h * w;
            const double v =
                0.25 * (src[py * w + px] + src[py * w + px + 1] + src[(py + 1) * w + px] + src[(py + 1) * w + px + 1]);
            out[((f * 4 + dy * 2 + dx) * lh + y) * lw + x] = 2.0 * v - 1.0;
          }
  return out;
}

Tensor decode_latents(const Tensor& latents) {
  if (latents.rank() != 4 || latents.dim(1) != 4) throw std::invalid_argument("expected latents (T, 4, H, W)");
  const std::size_t t = latents.dim(0), lh = latents.dim(2), lw = latents.dim(3);
  const std::size_t h = lh * 4, w = lw * 4;
  Tensor out({t, 1, h, w});
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t hy = y / 2, hx = x / 2;  // half-resolution pixel
        const std::size_t c = (hy % 2) * 2 + (hx % 2);
        const double v = latents[((f * 4 + c) * lh + hy / 2) * lw + hx / 2];
        out[(f * h + y) * w + x] = 0.5 * (v + 1.0);
      }
  return out;
}

void ToyConfig::validate() const {
  if (latent_channels == 0 || bg_channels == 0 || key_dim == 0 || mlp_hidden == 0 || box_bands == 0)
    throw std::invalid_argument("toy config dimensions must be positive");
  if (hidden < 2 || hidden % 2 != 0) throw std::invalid_argument("toy hidden width must be even and >= 2");
  if (max_objects == 0 || max_objects > 8) throw std::invalid_argument("object cap must lie in 1..8");
  if (enhancer.in_channels != hidden) throw std::invalid_argument("enhancer input channels must equal the hidden width");
  enhancer.validate();
}

Conditioning make_conditioning(const Tensor& latents, const std::vector<vje::BoxTrack>& tracks, const Tensor& f_bg) {
  if (latents.rank() != 4) throw std::invalid_argument("latents must be (T, C, H, W)");
  const std::size_t t = latents.dim(0);
  if (f_bg.rank() != 4 || f_bg.dim(0) != t) throw std::invalid_argument("f_bg must be (T, Cf, H, W) with matching T");
  const std::size_t objects = std::max<std::size_t>(1, tracks.size());
  Conditioning c;
  c.first_frame = Tensor({latents.dim(1), latents.dim(2), latents.dim(3)},
                         std::vector<double>(latents.data().begin(), latents.data().begin() +
                                                                         static_cast<std::ptrdiff_t>(latents.numel() / t)));
  c.boxes = Tensor({t, objects, 4});
  c.visible.assign(t * objects, 0);
  c.f_bg = f_bg;
  for (std::size_t o = 0; o < tracks.size(); ++o) {
    const auto& tr = tracks[o];
    const double w = static_cast<double>(tr.image_width), h = static_cast<double>(tr.image_height);
    for (const auto& e : tr.entries) {
      if (e.frame < 0 || static_cast<std::size_t>(e.frame) >= t || !e.visible) continue;
      const std::size_t f = static_cast<std::size_t>(e.frame);
      double* b = c.boxes.data().data() + (f * objects + o) * 4;
      b[0] = e.x1 / w;
      b[1] = e.y1 / h;
      b[2] = e.x2 / w;
      b[3] = e.y2 / h;
      c.visible[f * objects + o] = 1;
    }
  }
  return c;
}

ToyDenoiser ToyDenoiser::init(const ToyConfig& cfg, Rng& rng) {
  cfg.validate();
  ToyDenoiser d;
  d.cfg = cfg;
  const std::size_t c = cfg.latent_channels, ch = cfg.hidden, cf = cfg.bg_channels;
  d.conv_in_w = Parameter(scaled_normal(rng, {ch, 2 * c, 3, 3}, 2 * c * 9));
  d.conv_in_b = Parameter(Tensor({ch}));
  d.time_w = Parameter(scaled_normal(rng, {ch, ch}, ch));
  d.time_b = Parameter(Tensor({ch}));
  d.null_box = Parameter(Tensor({8 * cfg.box_bands}));
  d.fuser = soc::Fuser::init(8 * cfg.box_bands, ch, cfg.mlp_hidden, ch / 2, ch - ch / 2, rng);
  d.gated = soc::GatedSelfAttention::init(ch, rng);
  d.bg_proj_w = Parameter(scaled_normal(rng, {ch, cf, 1, 1}, cf));
  d.bg_proj_b = Parameter(Tensor({ch}));
  d.temporal = soc::TemporalAttention::init(ch, cfg.key_dim, rng);
  d.bg_conv = soc::Conv3dBg::init(cf, ch, rng);
  d.enhancer = pe::EnhancerParams::init(cfg.enhancer, rng);
  // Small output layer keeps the initial prediction near zero (loss near 1).
  d.conv_out_w = Parameter(scaled_normal(rng, {c, ch, 3, 3}, ch * 9, 0.1));
  d.conv_out_b = Parameter(Tensor({c}));
  return d;
}

Var ToyDenoiser::forward(Tape& tape, Var z_t, std::size_t t, const Conditioning& cond) {
  const Shape s = z_t.shape();
  if (s.size() != 4 || s[1] != cfg.latent_channels)
    throw std::invalid_argument("denoiser expects (T, " + std::to_string(cfg.latent_channels) + ", H, W), got " +
                                shape_str(s));
  const std::size_t frames = s[0], h = s[2], w = s[3], ch = cfg.hidden;
  if (cond.first_frame.shape() != Shape{s[1], h, w}) throw std::invalid_argument("first-frame latent shape mismatch");
  if (cond.f_bg.shape() != Shape{frames, cfg.bg_channels, h, w})
    throw std::invalid_argument("f_bg must have shape " + shape_str({frames, cfg.bg_channels, h, w}) + ", got " +
                                shape_str(cond.f_bg.shape()));
  const std::size_t objects = cond.boxes.rank() == 3 ? cond.boxes.dim(1) : 0;
  if (cond.boxes.rank() != 3 || cond.boxes.dim(0) != frames || cond.boxes.dim(2) != 4 || objects == 0 ||
      cond.visible.size() != frames * objects)
    throw std::invalid_argument("box conditioning must be (T, O, 4) with one visibility flag per entry");
  if (objects > cfg.max_objects) throw std::invalid_argument("too many objects per frame");

  Var first = ad::gather(tape.constant(cond.first_frame.reshaped({1, s[1], h, w})), 0,
                         std::vector<std::size_t>(frames, 0));
  Var x = ad::conv2d(ad::concat({z_t, first}, 1), tape.param(conv_in_w), tape.param(conv_in_b), 1, 1);
  Var temb = ad::linear(tape.constant(timestep_embedding(t, ch).reshaped({1, ch})), tape.param(time_w),
                        tape.param(time_b));
  x = ad::add_along(x, ad::reshape(temb, {ch}), 1);

  Var f_bg = tape.constant(cond.f_bg);
  Var a_bg = bg_conv.forward(tape, f_bg);

  const soc::FourierEmbedSpec fspec{cfg.box_bands, 100.0};
  Var gamma_b = tape.constant(soc::fourier_embed_rows(cond.boxes.reshaped({frames * objects, 4}), fspec));
  Var box_emb = soc::mask_embed(gamma_b, cond.visible, tape.param(null_box));
  Var grounding = fuser.forward(tape, ad::reshape(box_emb, {frames, objects, fspec.dim()}), a_bg);

  Var tokens = ad::reshape(ad::permute(x, {0, 2, 3, 1}), {frames, h * w, ch});
  tokens = gated.forward(tape, tokens, grounding);
  x = ad::permute(ad::reshape(tokens, {frames, h, w, ch}), {0, 3, 1, 2});

  Var bg = ad::conv2d(f_bg, tape.param(bg_proj_w), tape.param(bg_proj_b), 1, 0);
  x = temporal.forward(tape, x, bg);
  x = ad::add(x, a_bg);
  x = ad::add(x, pe::enhancer_forward(tape, x, cfg.enhancer, enhancer));
  return ad::conv2d(ad::silu(x), tape.param(conv_out_w), tape.param(conv_out_b), 1, 1);
}

void ToyDenoiser::visit(const ParamVisitor& f, const std::string& prefix) {
  f(prefix + "conv_in.w", conv_in_w);
  f(prefix + "conv_in.b", conv_in_b);
  f(prefix + "time.w", time_w);
  f(prefix + "time.b", time_b);
  f(prefix + "null_box", null_box);
  fuser.visit(f, prefix + "fuser.");
  gated.visit(f, prefix + "gated.");
  f(prefix + "bg_proj.w", bg_proj_w);
  f(prefix + "bg_proj.b", bg_proj_b);
  temporal.visit(f, prefix + "temporal.");
  bg_conv.visit(f, prefix + "bg_conv.");
  enhancer.visit(f, prefix + "enhancer.");
  f(prefix + "conv_out.w", conv_out_w);
  f(prefix + "conv_out.b", conv_out_b);
}

std::vector<Parameter*> ToyDenoiser::parameters() {
  std::vector<Parameter*> out;
  visit([&](const std::string&, Parameter& p) { out.push_back(&p); });
  return out;
}

std::size_t ToyDenoiser::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.numel();
  return n;
}

void ToyDenoiser::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

Var loss_at(Tape& tape, ToyDenoiser& den, const Example& ex, const DiffusionSchedule& sched, std::size_t t,
            const Tensor& eps) {
  Var zt = tape.constant(q_sample(ex.latents, t, eps, sched));
  return ad::mse(den.forward(tape, zt, t, ex.cond), eps);
}

double loss_and_grad(ToyDenoiser& den, const Example& ex, const DiffusionSchedule& sched, Rng& rng) {
  const std::size_t t = 1 + static_cast<std::size_t>(rng.below(sched.steps));
  const Tensor eps = rng.normal_tensor(ex.latents.shape(), 1.0);
  Tape tape;
  Var loss = loss_at(tape, den, ex, sched, t, eps);
  tape.backward(loss);
  return loss.value()[0];
}

double evaluate(ToyDenoiser& den, const std::vector<Example>& data, const DiffusionSchedule& sched,
                std::uint64_t seed, std::size_t draws) {
  Rng rng(seed ^ 0x5EED0E7A1ULL);
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& ex : data)
    for (std::size_t k = 0; k < draws; ++k) {
      (void)k;
      const std::size_t t = 1 + static_cast<std::size_t>(rng.below(sched.steps));
      const Tensor eps = rng.normal_tensor(ex.latents.shape(), 1.0);
      Tape tape(false);
      total += loss_at(tape, den, ex, sched, t, eps).value()[0];
      ++n;
    }
  return total / static_cast<double>(n);
}

TrainReport train(ToyDenoiser& den, const std::vector<Example>& data, const DiffusionSchedule& sched,
                  const TrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("training set is empty");
  if (cfg.lr < 0.0 || cfg.clip < 0.0) throw std::invalid_argument("learning rate and clip must be non-negative");
  const auto start = std::chrono::steady_clock::now();
  TrainReport rep;
  rep.parameters = den.parameter_count();
  rep.initial_loss = evaluate(den, data, sched, cfg.seed, cfg.eval_draws);
  Rng rng(cfg.seed);
  const auto params = den.parameters();
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    den.zero_grad();
    double loss = 0.0;
    for (const auto& ex : data) loss += loss_and_grad(den, ex, sched, rng);
    loss *= inv_n;
    if (!std::isfinite(loss) || loss > 1e6)
      throw NumericalError("training diverged at step " + std::to_string(step) + " (loss " + std::to_string(loss) + ")");
    rep.losses.push_back(loss);
    double norm2 = 0.0;
    for (Parameter* p : params) {
      for (double& g : p->grad.vec()) g *= inv_n;
      for (double g : p->grad.data()) norm2 += g * g;
    }
    const double norm = std::sqrt(norm2);
    const double scale = (cfg.clip > 0.0 && norm > cfg.clip) ? cfg.clip / norm : 1.0;
    for (Parameter* p : params)
      for (std::size_t i = 0; i < p->value.numel(); ++i) p->value[i] -= cfg.lr * scale * p->grad[i];
  }
  rep.final_loss = evaluate(den, data, sched, cfg.seed, cfg.eval_draws);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

Tensor sample(ToyDenoiser& den, const Conditioning& cond, const DiffusionSchedule& sched, Rng& rng) {
  const Shape shape{cond.frames(), den.cfg.latent_channels, cond.first_frame.dim(1), cond.first_frame.dim(2)};
  Tensor z = rng.normal_tensor(shape, 1.0);
  for (std::size_t t = sched.steps; t >= 1; --t) {
    Tape tape(false);
    const Tensor eps = den.forward(tape, tape.constant(z), t, cond).value();
    const double beta = sched.beta(t), abar = sched.alpha_bar(t), abar_prev = sched.alpha_bar(t - 1);
    const double a = 1.0 / std::sqrt(1.0 - beta);
    const double b = beta / std::sqrt(1.0 - abar);
    const double sigma = t > 1 ? std::sqrt(beta * (1.0 - abar_prev) / (1.0 - abar)) : 0.0;
    Tensor next(shape);
    if (t > 1) next = rng.normal_tensor(shape, sigma);
    for (std::size_t i = 0; i < z.numel(); ++i) next[i] += a * (z[i] - b * eps[i]);
    if (!next.all_finite()) throw NumericalError("sampling produced non-finite values at step " + std::to_string(t));
    z = std::move(next);
  }
  return z;
}

namespace {

json config_json(const ToyConfig& c) {
  return {{"latent_channels", c.latent_channels},
          {"hidden", c.hidden},
          {"key_dim", c.key_dim},
          {"bg_channels", c.bg_channels},
          {"box_bands", c.box_bands},
          {"mlp_hidden", c.mlp_hidden},
          {"max_objects", c.max_objects},
          {"enhancer",
           {{"in_channels", c.enhancer.in_channels},
            {"base_channels", c.enhancer.base_channels},
            {"stages", c.enhancer.stages},
            {"ffc_blocks", c.enhancer.ffc_blocks},
            {"state_dim", c.enhancer.state_dim},
            {"skip_connections", c.enhancer.skip_connections}}}};
}

ToyConfig config_from_json(const json& j) {
  ToyConfig c;
  c.latent_channels = j.at("latent_channels");
  c.hidden = j.at("hidden");
  c.key_dim = j.at("key_dim");
  c.bg_channels = j.at("bg_channels");
  c.box_bands = j.at("box_bands");
  c.mlp_hidden = j.at("mlp_hidden");
  c.max_objects = j.at("max_objects");
  const json& e = j.at("enhancer");
  c.enhancer.in_channels = e.at("in_channels");
  c.enhancer.base_channels = e.at("base_channels");
  c.enhancer.stages = e.at("stages");
  c.enhancer.ffc_blocks = e.at("ffc_blocks");
  c.enhancer.state_dim = e.at("state_dim");
  c.enhancer.skip_connections = e.at("skip_connections");
  return c;
}

json read_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("missing checkpoint manifest in " + dir.string());
  return json::parse(is);
}

std::string file_for(const std::string& name) { return name + ".qtn"; }

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, ToyDenoiser& den, const DiffusionSchedule& sched,
                     std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  json tensors = json::array();
  den.visit([&](const std::string& name, Parameter& p) {
    write_tensor(dir / file_for(name), p.value);
    tensors.push_back({{"name", name}, {"file", file_for(name)}, {"shape", p.value.shape()}});
  });
  json manifest = {{"format", "quadkit-checkpoint"},
                   {"version", 1},
                   {"seed", seed},
                   {"schedule", {{"steps", sched.steps}, {"beta_start", sched.beta_start}, {"beta_end", sched.beta_end}}},
                   {"config", config_json(den.cfg)},
                   {"tensors", tensors}};
  std::ofstream os(dir / "manifest.json");
  if (!os) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << "\n";
}

void load_checkpoint(const std::filesystem::path& dir, ToyDenoiser& den) {
  const json manifest = read_manifest(dir);
  std::map<std::string, std::string> files;
  for (const auto& t : manifest.at("tensors")) files[t.at("name").get<std::string>()] = t.at("file").get<std::string>();
  den.visit([&](const std::string& name, Parameter& p) {
    auto it = files.find(name);
    if (it == files.end()) throw std::runtime_error("checkpoint lacks tensor " + name);
    Tensor v = read_tensor(dir / it->second);
    if (v.shape() != p.value.shape())
      throw std::runtime_error("checkpoint tensor " + name + " has shape " + shape_str(v.shape()) + ", expected " +
                               shape_str(p.value.shape()));
    p.value = std::move(v);
    p.grad = Tensor(p.value.shape());
  });
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir) {
  const json m = read_manifest(dir);
  CheckpointInfo info;
  info.cfg = config_from_json(m.at("config"));
  const json& s = m.at("schedule");
  info.sched = make_schedule(s.at("steps"), s.at("beta_start"), s.at("beta_end"));
  info.seed = m.at("seed");
  return info;
}

}  // namespace quadkit::diffusion
