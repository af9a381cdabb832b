#pragma once

// Scene-object controller blocks: Fourier box embedding, visibility switch,
// spatiotemporal background conv, temporal attention, grounding-token fusion
// and gated self-attention.

#include <array>
#include <vector>

#include "quadkit/autograd.hpp"
#include "quadkit/ops.hpp"
#include "quadkit/rng.hpp"

namespace quadkit::soc {

using ad::Parameter;
using ad::ParamVisitor;
using ad::Tape;
using ad::Var;

struct FourierEmbedSpec {
  std::size_t bands = 8;
  double tau = 100.0;

  void validate() const;
  std::size_t dim() const { return 8 * bands; }
};

/// Band-major [sin(w_k b), cos(w_k b)] over the coordinates (x1, y1, x2, y2),
/// w_k = tau^(k/K) for k = 1..K. Output length 8K.
std::vector<double> fourier_embed(const std::array<double, 4>& box, const FourierEmbedSpec& spec);
/// Row-wise embedding of boxes (N, 4) -> (N, 8K).
Tensor fourier_embed_rows(const Tensor& boxes, const FourierEmbedSpec& spec);

/// m * gamma + (1 - m) * phi_null per row of gamma (N, D).
Var mask_embed(Var gamma, const std::vector<int>& mask, Var phi_null);

/// A_bg = Conv3D(f_bg): 3x3x3, same padding, (T, Cf, H, W) -> (T, Ca, H, W).
struct Conv3dBg {
  Parameter weight;  // (Ca, Cf, 3, 3, 3)
  Parameter bias;    // (Ca)

  static Conv3dBg init(std::size_t in_channels, std::size_t out_channels, Rng& rng);
  Var forward(Tape& tape, Var f_bg);
  void visit(const ParamVisitor& f, const std::string& prefix);
};

/// x = z + f_bg; single-head self-attention across frames at every pixel;
/// output x + attention(x). No positional encoding.
struct TemporalAttention {
  Parameter wq;  // (C, dk)
  Parameter wk;  // (C, dk)
  Parameter wv;  // (C, C)

  static TemporalAttention init(std::size_t channels, std::size_t key_dim, Rng& rng);
  Var forward(Tape& tape, Var z, Var f_bg);
  void visit(const ParamVisitor& f, const std::string& prefix);
};

/// Two-layer perceptron with SiLU between the layers.
struct Mlp {
  Parameter w1, b1, w2, b2;

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Var forward(Tape& tape, Var x);
  void visit(const ParamVisitor& f, const std::string& prefix);
  std::size_t out_dim() const { return w2.value.dim(1); }
};

/// Grounding tokens: concat(MLP_b(B), MLP_a(mean-pooled A_bg of the frame)).
struct Fuser {
  Mlp box_mlp;
  Mlp bg_mlp;

  static Fuser init(std::size_t box_dim, std::size_t bg_channels, std::size_t hidden, std::size_t box_out,
                    std::size_t bg_out, Rng& rng);
  /// box_emb (T, O, D) and a_bg (T, Ca, H, W) -> tokens (T, O, box_out + bg_out).
  Var forward(Tape& tape, Var box_emb, Var a_bg);
  void visit(const ParamVisitor& f, const std::string& prefix);
  std::size_t token_dim() const { return box_mlp.out_dim() + bg_mlp.out_dim(); }
};

/// z + tanh(gamma) * attention(concat(z, grounding))[:L]; gamma starts at 0.
struct GatedSelfAttention {
  Parameter wq, wk, wv;  // (d, d)
  Parameter gamma;       // (1)

  static GatedSelfAttention init(std::size_t dim, Rng& rng);
  /// z (B, L, d), grounding (B, G, d) -> (B, L, d).
  Var forward(Tape& tape, Var z, Var grounding);
  void visit(const ParamVisitor& f, const std::string& prefix);
};

}  // namespace quadkit::soc
