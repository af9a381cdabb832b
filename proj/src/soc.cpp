#include "quadkit/soc.hpp"

#include <cmath>
#include <stdexcept>

namespace quadkit::soc {

namespace {
Tensor scaled_normal(Rng& rng, Shape shape, std::size_t fan_in) {
  return rng.normal_tensor(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)));
}
}  // namespace

void FourierEmbedSpec::validate() const {
  if (bands < 1) throw std::invalid_argument("Fourier embedding needs at least one band");
  if (!(tau > 1.0)) throw std::invalid_argument("Fourier embedding base tau must exceed 1");
}

std::vector<double> fourier_embed(const std::array<double, 4>& box, const FourierEmbedSpec& spec) {
  spec.validate();
  std::vector<double> out;
  out.reserve(spec.dim());
  for (std::size_t k = 1; k <= spec.bands; ++k) {
    const double w = std::pow(spec.tau, static_cast<double>(k) / static_cast<double>(spec.bands));
    for (double b : box) out.push_back(std::sin(w * b));
    for (double b : box) out.push_back(std::cos(w * b));
  }
  return out;
}

Tensor fourier_embed_rows(const Tensor& boxes, const FourierEmbedSpec& spec) {
  if (boxes.rank() != 2 || boxes.dim(1) != 4) throw std::invalid_argument("boxes must have shape (N, 4)");
  const std::size_t n = boxes.dim(0);
  Tensor out({n, spec.dim()});
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = fourier_embed({boxes[i * 4], boxes[i * 4 + 1], boxes[i * 4 + 2], boxes[i * 4 + 3]}, spec);
    std::copy(e.begin(), e.end(), out.vec().begin() + static_cast<std::ptrdiff_t>(i * spec.dim()));
  }
  return out;
}

Var mask_embed(Var gamma, const std::vector<int>& mask, Var phi_null) { return ad::mask_select(gamma, phi_null, mask); }

Conv3dBg Conv3dBg::init(std::size_t in_channels, std::size_t out_channels, Rng& rng) {
  Conv3dBg c;
  c.weight = Parameter(scaled_normal(rng, {out_channels, in_channels, 3, 3, 3}, in_channels * 27));
  c.bias = Parameter(Tensor({out_channels}));
  return c;
}

Var Conv3dBg::forward(Tape& tape, Var f_bg) { return ad::conv3d(f_bg, tape.param(weight), tape.param(bias)); }

void Conv3dBg::visit(const ParamVisitor& f, const std::string& prefix) {
  f(prefix + "weight", weight);
  f(prefix + "bias", bias);
}

TemporalAttention TemporalAttention::init(std::size_t channels, std::size_t key_dim, Rng& rng) {
  TemporalAttention a;
  a.wq = Parameter(scaled_normal(rng, {channels, key_dim}, channels));
  a.wk = Parameter(scaled_normal(rng, {channels, key_dim}, channels));
  a.wv = Parameter(scaled_normal(rng, {channels, channels}, channels));
  return a;
}

Var TemporalAttention::forward(Tape& tape, Var z, Var f_bg) {
  if (z.shape() != f_bg.shape() || z.shape().size() != 4)
    throw std::invalid_argument("temporal attention: z and f_bg must share a (T, C, H, W) shape, got " +
                                shape_str(z.shape()) + " and " + shape_str(f_bg.shape()));
  const Shape s = z.shape();
  const std::size_t t = s[0], c = s[1], h = s[2], w = s[3];
  Var x = ad::add(z, f_bg);
  // (T, C, H, W) -> (H*W, T, C): one token set per pixel.
  Var tokens = ad::reshape(ad::permute(x, {2, 3, 0, 1}), {h * w, t, c});
  Var att = ad::attention(tokens, tape.param(wq), tape.param(wk), tape.param(wv));
  Var back = ad::permute(ad::reshape(att, {h, w, t, c}), {2, 3, 0, 1});
  return ad::add(x, back);
}

void TemporalAttention::visit(const ParamVisitor& f, const std::string& prefix) {
  f(prefix + "wq", wq);
  f(prefix + "wk", wk);
  f(prefix + "wv", wv);
}

Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Mlp m;
  m.w1 = Parameter(scaled_normal(rng, {in, hidden}, in));
  m.b1 = Parameter(Tensor({hidden}));
  m.w2 = Parameter(scaled_normal(rng, {hidden, out}, hidden));
  m.b2 = Parameter(Tensor({out}));
  return m;
}

Var Mlp::forward(Tape& tape, Var x) {
  Var h = ad::silu(ad::linear(x, tape.param(w1), tape.param(b1)));
  return ad::linear(h, tape.param(w2), tape.param(b2));
}

void Mlp::visit(const ParamVisitor& f, const std::string& prefix) {
  f(prefix + "w1", w1);
  f(prefix + "b1", b1);
  f(prefix + "w2", w2);
  f(prefix + "b2", b2);
}

Fuser Fuser::init(std::size_t box_dim, std::size_t bg_channels, std::size_t hidden, std::size_t box_out,
                  std::size_t bg_out, Rng& rng) {
  Fuser f;
  f.box_mlp = Mlp::init(box_dim, hidden, box_out, rng);
  f.bg_mlp = Mlp::init(bg_channels, hidden, bg_out, rng);
  return f;
}

Var Fuser::forward(Tape& tape, Var box_emb, Var a_bg) {
  if (box_emb.shape().size() != 3 || a_bg.shape().size() != 4)
    throw std::invalid_argument("fuse: expected box embeddings (T, O, D) and A_bg (T, C, H, W)");
  const std::size_t t = box_emb.dim(0), objects = box_emb.dim(1), d = box_emb.dim(2);
  if (a_bg.dim(0) != t)
    throw std::invalid_argument("fuse: frame count mismatch (" + std::to_string(t) + " box frames, " +
                                std::to_string(a_bg.dim(0)) + " background frames)");
  Var box_tokens = box_mlp.forward(tape, ad::reshape(box_emb, {t * objects, d}));
  Var bg_tokens = bg_mlp.forward(tape, ad::mean_spatial(a_bg));
  std::vector<std::size_t> frame_of_token;
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t o = 0; o < objects; ++o) frame_of_token.push_back(i);
  Var bg_per_token = ad::gather(bg_tokens, 0, frame_of_token);
  Var fused = ad::concat({box_tokens, bg_per_token}, 1);
  return ad::reshape(fused, {t, objects, token_dim()});
}

void Fuser::visit(const ParamVisitor& f, const std::string& prefix) {
  box_mlp.visit(f, prefix + "box_mlp.");
  bg_mlp.visit(f, prefix + "bg_mlp.");
}

GatedSelfAttention GatedSelfAttention::init(std::size_t dim, Rng& rng) {
  GatedSelfAttention g;
  g.wq = Parameter(scaled_normal(rng, {dim, dim}, dim));
  g.wk = Parameter(scaled_normal(rng, {dim, dim}, dim));
  g.wv = Parameter(scaled_normal(rng, {dim, dim}, dim));
  g.gamma = Parameter(Tensor({1}));
  return g;
}

Var GatedSelfAttention::forward(Tape& tape, Var z, Var grounding) {
  if (z.shape().size() != 3 || grounding.shape().size() != 3 || z.dim(0) != grounding.dim(0))
    throw std::invalid_argument("gated self-attention: expected z (B, L, d) and grounding (B, G, d)");
  if (z.dim(2) != grounding.dim(2))
    throw std::invalid_argument("gated self-attention: dim mismatch (" + std::to_string(z.dim(2)) + " vs " +
                                std::to_string(grounding.dim(2)) + ")");
  const std::size_t l = z.dim(1);
  Var joint = ad::concat({z, grounding}, 1);
  Var att = ad::attention(joint, tape.param(wq), tape.param(wk), tape.param(wv));
  Var visual = ad::slice(att, 1, 0, l);
  Var gate = ad::tanh(tape.param(gamma));
  return ad::add(z, ad::mul_scalar(visual, gate));
}

void GatedSelfAttention::visit(const ParamVisitor& f, const std::string& prefix) {
  f(prefix + "wq", wq);
  f(prefix + "wk", wk);
  f(prefix + "wv", wv);
  f(prefix + "gamma", gamma);
}

}  // namespace quadkit::soc
