#pragma once

// Panoramic enhancer: fast Fourier convolution residual blocks, selective
// state-space scans over several 2-D traversal orders, and the encoder-decoder
// that combines them. Feature maps are (N, C, H, W); rank-3 (C, H, W) inputs
// are accepted where noted and treated as N = 1.

#include <vector>

#include "quadkit/autograd.hpp"
#include "quadkit/ops.hpp"
#include "quadkit/rng.hpp"

namespace quadkit::pe {

using ad::Parameter;
using ad::ParamVisitor;
using ad::Tape;
using ad::Var;

struct FfcSplit {
  double local_ratio = 0.25;

  /// local = max(1, floor(C * local_ratio)), global = C - local.
  std::size_t local_channels(std::size_t channels) const;
  /// Throws "global branch empty" when nothing is left for the global branch.
  std::size_t global_channels(std::size_t channels) const;
};

struct FfcUnit {
  std::size_t channels = 0;
  std::size_t local = 0;
  Parameter w_ll;    // (Cl, Cl, 3, 3)
  Parameter w_gl;    // (Cl, Cg, 3, 3)
  Parameter w_lg;    // (Cg, Cl, 3, 3)
  Parameter b_l;     // (Cl)
  Parameter b_g;     // (Cg)
  Parameter w_spec;  // (2Cg, 2Cg, 1, 1), acts on stacked (re, im) channels
  Parameter b_spec;  // (2Cg)
  bool spectral_activation = true;
  bool output_activation = true;

  static FfcUnit zeros(std::size_t channels, FfcSplit split = {});
  static FfcUnit init(std::size_t channels, Rng& rng, FfcSplit split = {});
  std::size_t global() const { return channels - local; }

  /// x (N, C, H, W) with W even.
  Var forward(Tape& tape, Var x);
  /// g -> g path alone: irdft(act(conv1x1(rdft(x_g)))).
  Var spectral(Tape& tape, Var x_g);
  void visit(const ParamVisitor& f, const std::string& prefix);
};

/// x + unit2(unit1(x)).
struct FfcResidual {
  FfcUnit first;
  FfcUnit second;

  static FfcResidual zeros(std::size_t channels);
  static FfcResidual init(std::size_t channels, Rng& rng);
  Var forward(Tape& tape, Var x);
  void visit(const ParamVisitor& f, const std::string& prefix);
};

/// Pointwise multiply of the half spectrum of every (H, W) plane of x by
/// `response` (H, W/2 + 1), then back to the spatial domain.
Tensor spectral_filter(const Tensor& x, const ComplexTensor& response);

struct S6Params {
  Parameter w_delta;  // (C, C)
  Parameter b_delta;  // (C)
  Parameter w_b;      // (C, S)
  Parameter w_c;      // (C, S)
  Parameter a_log;    // (C, S), A = -exp(a_log) < 0
  Parameter d_skip;   // (C)

  /// All projections zero, A = -1, D = 0.
  static S6Params zeros(std::size_t channels, std::size_t state);
  /// Small random projections, A_s = -(s + 1), D = 1.
  static S6Params init(std::size_t channels, std::size_t state, Rng& rng);
  std::size_t channels() const { return d_skip.value.numel(); }
  std::size_t state() const { return a_log.value.dim(1); }
  ad::ScanVars bind(Tape& tape);
  void visit(const ParamVisitor& f, const std::string& prefix);
};

/// seq (B, L, C) -> (B, L, C).
Var s6_scan(Tape& tape, Var seq, S6Params& p);

/// Traversal orders over an H x W grid; order[i] is the flat row-major index
/// visited at step i.
struct ScanSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::vector<std::size_t>> orders;

  /// Row-major forward, row-major reverse, column-major forward, column-major reverse.
  static ScanSet standard(std::size_t height, std::size_t width);
  static ScanSet identity(std::size_t height, std::size_t width);
  /// Throws if any order is not a permutation of 0..HW-1.
  void validate() const;
};

/// Mean over directions of inverse-permuted s6_scan outputs. x (N, C, H, W).
Var multidir_ssm(Tape& tape, Var x, S6Params& p, const ScanSet& scans);

struct EnhancerConfig {
  std::size_t in_channels = 4;
  std::size_t base_channels = 8;
  std::size_t stages = 3;
  std::size_t ffc_blocks = 1;
  std::size_t state_dim = 4;
  bool skip_connections = true;

  void validate() const;
  /// Throws unless H is divisible by 2^stages and the bottleneck width is even.
  void check_input(std::size_t height, std::size_t width) const;
};

struct EnhancerParams {
  S6Params ssm_in;
  std::vector<Parameter> down_w, down_b;
  std::vector<FfcResidual> mid;
  std::vector<Parameter> up_w, up_b;
  S6Params ssm_out;
  Parameter out_w, out_b;

  static EnhancerParams init(const EnhancerConfig& cfg, Rng& rng);
  static EnhancerParams zeros(const EnhancerConfig& cfg);
  void visit(const ParamVisitor& f, const std::string& prefix);
};

/// x (C_in, H, W) or (N, C_in, H, W) -> same shape. Each multi-directional
/// scan sees a channel-wise RMS-normalised input.
Var enhancer_forward(Tape& tape, Var x, const EnhancerConfig& cfg, EnhancerParams& p);

}  // namespace quadkit::pe
