#pragma once

// Toy latent diffusion: linear noise schedule, closed-form forward noising,
// epsilon-prediction loss, gradient-descent training, ancestral sampling, and
// a small conditional denoiser assembled from the soc and pe blocks.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadkit/autograd.hpp"
#include "quadkit/pe.hpp"
#include "quadkit/rng.hpp"
#include "quadkit/soc.hpp"
#include "quadkit/vje.hpp"

namespace quadkit::diffusion {

using ad::Parameter;
using ad::ParamVisitor;
using ad::Tape;
using ad::Var;

/// Raised when training or sampling produces non-finite or exploding values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DiffusionSchedule {
  std::size_t steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;       // betas[t - 1] = beta_t
  std::vector<double> alpha_bars;  // alpha_bars[t] = prod_{s <= t} (1 - beta_s); alpha_bars[0] = 1

  double beta(std::size_t t) const { return betas.at(t - 1); }
  double alpha(std::size_t t) const { return 1.0 - betas.at(t - 1); }
  double alpha_bar(std::size_t t) const { return alpha_bars.at(t); }
};

/// Linear betas from beta_start to beta_end over `steps` steps.
DiffusionSchedule make_schedule(std::size_t steps = 100, double beta_start = 1e-3, double beta_end = 0.2);

/// sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Tensor q_sample(const Tensor& z0, std::size_t t, const Tensor& eps, const DiffusionSchedule& sched);

/// Sinusoidal embedding of a diffusion step: first half sin, second half cos,
/// frequencies 10000^(-i / (dim / 2)).
Tensor timestep_embedding(std::size_t t, std::size_t dim);

/// Fixed latent surrogate: 2x2 average pool, then 2x2 space-to-depth, mapped
/// from [0, 1] to [-1, 1]. frames (T, 1, H, W) -> latents (T, 4, H/4, W/4).
Tensor encode_frames(const Tensor& frames);
/// Depth-to-space followed by nearest-neighbour 2x unpooling.
Tensor decode_latents(const Tensor& latents);

struct ToyConfig {
  std::size_t latent_channels = 4;
  std::size_t hidden = 16;
  std::size_t key_dim = 8;
  std::size_t bg_channels = vje::PoseEncoder::kFeatures;
  std::size_t box_bands = 4;
  std::size_t mlp_hidden = 16;
  std::size_t max_objects = 8;
  pe::EnhancerConfig enhancer{16, 8, 3, 1, 4, true};

  void validate() const;
};

struct Conditioning {
  Tensor first_frame;        // (C, H, W)
  Tensor boxes;              // (T, O, 4), normalized to [0, 1]
  std::vector<int> visible;  // T * O flags
  Tensor f_bg;               // (T, Cf, H, W)

  std::size_t frames() const { return f_bg.dim(0); }
  std::size_t objects() const { return boxes.dim(1); }
};

/// Boxes normalized by the image size, one slot per track; frames without an
/// entry or with an invisible entry get visible = 0.
Conditioning make_conditioning(const Tensor& latents, const std::vector<vje::BoxTrack>& tracks, const Tensor& f_bg);

struct ToyDenoiser {
  ToyConfig cfg;
  Parameter conv_in_w, conv_in_b;  // (Ch, 2C, 3, 3), (Ch)
  Parameter time_w, time_b;        // (Ch, Ch), (Ch)
  Parameter null_box;              // (8K)
  soc::Fuser fuser;
  soc::GatedSelfAttention gated;
  Parameter bg_proj_w, bg_proj_b;  // (Ch, Cf, 1, 1), (Ch)
  soc::TemporalAttention temporal;
  soc::Conv3dBg bg_conv;
  pe::EnhancerParams enhancer;
  Parameter conv_out_w, conv_out_b;  // (C, Ch, 3, 3), (C)

  static ToyDenoiser init(const ToyConfig& cfg, Rng& rng);
  /// z_t (T, C, H, W) -> predicted noise of the same shape.
  Var forward(Tape& tape, Var z_t, std::size_t t, const Conditioning& cond);
  void visit(const ParamVisitor& f, const std::string& prefix = "");
  std::vector<Parameter*> parameters();
  std::size_t parameter_count();
  void zero_grad();
};

struct Example {
  Tensor latents;  // (T, C, H, W)
  Conditioning cond;
};

/// mean((eps - eps_theta(z_t; t, cond))^2) for a given (t, eps).
Var loss_at(Tape& tape, ToyDenoiser& den, const Example& ex, const DiffusionSchedule& sched, std::size_t t,
            const Tensor& eps);
/// Draws t ~ U{1..steps} and eps ~ N(0, I), adds the parameter gradients into
/// the denoiser and returns the loss.
double loss_and_grad(ToyDenoiser& den, const Example& ex, const DiffusionSchedule& sched, Rng& rng);

struct TrainConfig {
  std::size_t steps = 200;
  double lr = 0.05;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip = 1.0;
  std::uint64_t seed = 0;
  /// Fixed (t, eps) draws per example used for the reported initial/final loss.
  std::size_t eval_draws = 4;
};

struct TrainReport {
  std::vector<double> losses;  // mean training loss per step
  double initial_loss = 0.0;   // on the fixed evaluation draws, before training
  double final_loss = 0.0;     // on the same draws, after training
  std::size_t parameters = 0;
  double seconds = 0.0;
};

/// Mean loss over a fixed set of (t, eps) draws derived from `seed`.
double evaluate(ToyDenoiser& den, const std::vector<Example>& data, const DiffusionSchedule& sched,
                std::uint64_t seed, std::size_t draws);

/// Full-batch gradient descent. Throws NumericalError on divergence.
TrainReport train(ToyDenoiser& den, const std::vector<Example>& data, const DiffusionSchedule& sched,
                  const TrainConfig& cfg);

/// Ancestral sampling from z_T ~ N(0, I); returns the z_0 estimate with the
/// shape implied by the conditioning.
Tensor sample(ToyDenoiser& den, const Conditioning& cond, const DiffusionSchedule& sched, Rng& rng);

/// Directory of QTNSR1 tensors plus manifest.json (names, shapes, schedule, seed).
void save_checkpoint(const std::filesystem::path& dir, ToyDenoiser& den, const DiffusionSchedule& sched,
                     std::uint64_t seed);
/// Loads parameter values into an already constructed denoiser of the same config.
void load_checkpoint(const std::filesystem::path& dir, ToyDenoiser& den);

struct CheckpointInfo {
  ToyConfig cfg;
  DiffusionSchedule sched;
  std::uint64_t seed = 0;
};
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

}  // namespace quadkit::diffusion
