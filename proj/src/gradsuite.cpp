#include "quadkit/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

#include "quadkit/diffusion.hpp"
#include "quadkit/gradcheck.hpp"
#include "quadkit/pe.hpp"
#include "quadkit/soc.hpp"

namespace quadkit::gradsuite {

namespace {

using ad::Parameter;
using ad::Tape;
using ad::Var;

constexpr double kBlockTolerance = 1e-4;
constexpr double kLossTolerance = 1e-3;

template <class Block>
std::vector<Parameter*> params_of(Block& b) {
  std::vector<Parameter*> out;
  b.visit([&](const std::string&, Parameter& p) { out.push_back(&p); }, "");
  return out;
}

// Zero-initialised biases would make their gradient checks degenerate.
void jitter_params(const std::vector<Parameter*>& ps, Rng& rng) {
  for (Parameter* p : ps)
    for (auto& v : p->value.vec()) v += rng.uniform(-0.1, 0.1);
}

double trial(const ad::LossBuilder& loss, std::vector<Parameter*> leaves, std::uint64_t seed,
             std::size_t max_coords = 48) {
  ad::GradCheckOptions opt;
  opt.seed = seed;
  opt.max_coords = max_coords;
  return ad::gradcheck(loss, leaves, opt).rel_error;
}

double mask_embed_trial(Rng& rng) {
  Parameter gamma(rng.normal_tensor({5, 6}));
  Parameter phi(rng.normal_tensor({6}));
  std::vector<int> mask(5);
  for (auto& m : mask) m = static_cast<int>(rng.below(2));
  const Tensor w = rng.normal_tensor({5, 6});
  return trial([&](Tape& t) { return ad::weighted_sum(soc::mask_embed(t.param(gamma), mask, t.param(phi)), w); },
               {&gamma, &phi}, rng.next_u64());
}

double conv3d_bg_trial(Rng& rng) {
  auto block = soc::Conv3dBg::init(3, 2, rng);
  Parameter x(rng.normal_tensor({3, 3, 4, 4}));
  auto leaves = params_of(block);
  jitter_params(leaves, rng);
  leaves.push_back(&x);
  const Tensor w = rng.normal_tensor({3, 2, 4, 4});
  return trial([&](Tape& t) { return ad::weighted_sum(block.forward(t, t.param(x)), w); }, leaves, rng.next_u64());
}

double temporal_attention_trial(Rng& rng) {
  auto block = soc::TemporalAttention::init(3, 2, rng);
  Parameter z(rng.normal_tensor({4, 3, 2, 3}));
  Parameter f(rng.normal_tensor({4, 3, 2, 3}));
  auto leaves = params_of(block);
  leaves.push_back(&z);
  leaves.push_back(&f);
  const Tensor w = rng.normal_tensor({4, 3, 2, 3});
  return trial([&](Tape& t) { return ad::weighted_sum(block.forward(t, t.param(z), t.param(f)), w); }, leaves,
               rng.next_u64());
}

double fuse_trial(Rng& rng) {
  auto block = soc::Fuser::init(8, 3, 5, 3, 2, rng);
  Parameter box(rng.normal_tensor({3, 2, 8}));
  Parameter a_bg(rng.normal_tensor({3, 3, 2, 4}));
  auto leaves = params_of(block);
  jitter_params(leaves, rng);
  leaves.push_back(&box);
  leaves.push_back(&a_bg);
  const Tensor w = rng.normal_tensor({3, 2, 5});
  return trial([&](Tape& t) { return ad::weighted_sum(block.forward(t, t.param(box), t.param(a_bg)), w); },
               leaves, rng.next_u64());
}

double gated_self_attention_trial(Rng& rng) {
  auto block = soc::GatedSelfAttention::init(4, rng);
  block.gamma.value[0] = rng.uniform(0.3, 1.0);
  Parameter z(rng.normal_tensor({2, 5, 4}));
  Parameter g(rng.normal_tensor({2, 3, 4}));
  auto leaves = params_of(block);
  leaves.push_back(&z);
  leaves.push_back(&g);
  const Tensor w = rng.normal_tensor({2, 5, 4});
  return trial([&](Tape& t) { return ad::weighted_sum(block.forward(t, t.param(z), t.param(g)), w); }, leaves,
               rng.next_u64());
}

double ffc_unit_trial(Rng& rng) {
  auto block = pe::FfcUnit::init(4, rng);
  Parameter x(rng.normal_tensor({2, 4, 4, 6}));
  auto leaves = params_of(block);
  jitter_params(leaves, rng);
  leaves.push_back(&x);
  const Tensor w = rng.normal_tensor({2, 4, 4, 6});
  return trial([&](Tape& t) { return ad::weighted_sum(block.forward(t, t.param(x)), w); }, leaves, rng.next_u64());
}

double ffc_residual_trial(Rng& rng) {
  auto block = pe::FfcResidual::init(4, rng);
  Parameter x(rng.normal_tensor({1, 4, 4, 8}));
  auto leaves = params_of(block);
  jitter_params(leaves, rng);
  leaves.push_back(&x);
  const Tensor w = rng.normal_tensor({1, 4, 4, 8});
  return trial([&](Tape& t) { return ad::weighted_sum(block.forward(t, t.param(x)), w); }, leaves, rng.next_u64());
}

double s6_scan_trial(Rng& rng) {
  auto block = pe::S6Params::init(3, 2, rng);
  Parameter x(rng.normal_tensor({2, 6, 3}));
  auto leaves = params_of(block);
  jitter_params(leaves, rng);
  leaves.push_back(&x);
  const Tensor w = rng.normal_tensor({2, 6, 3});
  return trial([&](Tape& t) { return ad::weighted_sum(pe::s6_scan(t, t.param(x), block), w); }, leaves,
               rng.next_u64());
}

double multidir_ssm_trial(Rng& rng) {
  auto block = pe::S6Params::init(3, 2, rng);
  Parameter x(rng.normal_tensor({1, 3, 3, 4}));
  auto leaves = params_of(block);
  jitter_params(leaves, rng);
  leaves.push_back(&x);
  const auto scans = pe::ScanSet::standard(3, 4);
  const Tensor w = rng.normal_tensor({1, 3, 3, 4});
  return trial([&](Tape& t) { return ad::weighted_sum(pe::multidir_ssm(t, t.param(x), block, scans), w); }, leaves,
               rng.next_u64());
}

double enhancer_trial(Rng& rng) {
  const pe::EnhancerConfig cfg{3, 4, 2, 1, 2, true};
  auto p = pe::EnhancerParams::init(cfg, rng);
  Parameter x(rng.normal_tensor({1, 3, 4, 8}));
  auto leaves = params_of(p);
  jitter_params(leaves, rng);
  leaves.push_back(&x);
  const Tensor w = rng.normal_tensor({1, 3, 4, 8});
  return trial([&](Tape& t) { return ad::weighted_sum(pe::enhancer_forward(t, t.param(x), cfg, p), w); }, leaves,
               rng.next_u64(), 24);
}

double full_loss_trial(Rng& rng) {
  diffusion::ToyConfig cfg;
  cfg.hidden = 8;
  cfg.key_dim = 4;
  cfg.box_bands = 2;
  cfg.mlp_hidden = 8;
  cfg.enhancer = {8, 4, 3, 1, 2, true};
  auto den = diffusion::ToyDenoiser::init(cfg, rng);
  den.gated.gamma.value[0] = rng.uniform(0.3, 1.0);
  const std::size_t frames = 2, h = 8, w = 16;
  diffusion::Example ex;
  ex.latents = rng.uniform_tensor({frames, 4, h, w}, -1.0, 1.0);
  ex.cond.first_frame = rng.uniform_tensor({4, h, w}, -1.0, 1.0);
  ex.cond.boxes = rng.uniform_tensor({frames, 2, 4}, 0.0, 1.0);
  ex.cond.visible = {1, 0, 1, 1};
  ex.cond.f_bg = rng.normal_tensor({frames, cfg.bg_channels, h, w}, 0.5);
  const auto sched = diffusion::make_schedule();
  const std::size_t t = 1 + static_cast<std::size_t>(rng.below(sched.steps));
  const Tensor eps = rng.normal_tensor(ex.latents.shape());
  return trial([&](Tape& tp) { return diffusion::loss_at(tp, den, ex, sched, t, eps); }, den.parameters(),
               rng.next_u64(), 4);
}

using Trial = double (*)(Rng&);

const std::map<std::string, Trial>& trials() {
  static const std::map<std::string, Trial> m{
      {"mask_embed", mask_embed_trial},
      {"conv3d_bg", conv3d_bg_trial},
      {"temporal_attention", temporal_attention_trial},
      {"fuse", fuse_trial},
      {"gated_self_attention", gated_self_attention_trial},
      {"ffc_unit", ffc_unit_trial},
      {"ffc_residual", ffc_residual_trial},
      {"s6_scan", s6_scan_trial},
      {"multidir_ssm", multidir_ssm_trial},
      {"enhancer_forward", enhancer_trial},
      {"full_loss", full_loss_trial},
  };
  return m;
}

}  // namespace

const std::vector<std::string>& block_names() {
  static const std::vector<std::string> names{"mask_embed",       "conv3d_bg",    "temporal_attention",
                                              "fuse",             "gated_self_attention",
                                              "ffc_unit",         "ffc_residual", "s6_scan",
                                              "multidir_ssm",     "enhancer_forward", "full_loss"};
  return names;
}

BlockCheck check_block(const std::string& block, std::size_t n, std::uint64_t seed) {
  const auto it = trials().find(block);
  if (it == trials().end()) throw std::invalid_argument("unknown block: " + block);
  BlockCheck out{block, 0.0, block == "full_loss" ? kLossTolerance : kBlockTolerance, n};
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Rng trial_rng = rng.fork();
    const double e = it->second(trial_rng);
    out.max_rel_error = std::isfinite(e) ? std::max(out.max_rel_error, e) : HUGE_VAL;
  }
  return out;
}

std::vector<BlockCheck> run_suite(std::size_t n, std::uint64_t seed) {
  std::vector<BlockCheck> out;
  for (std::size_t i = 0; i < block_names().size(); ++i) out.push_back(check_block(block_names()[i], n, seed + i));
  return out;
}

}  // namespace quadkit::gradsuite
