#include "quadkit/pe.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "quadkit/fft.hpp"

namespace quadkit::pe {

namespace {

Tensor scaled_normal(Rng& rng, Shape shape, std::size_t fan_in, double gain = 1.0) {
  return rng.normal_tensor(std::move(shape), gain / std::sqrt(static_cast<double>(fan_in)));
}

Parameter zero_param(Shape shape) { return Parameter(Tensor(std::move(shape))); }

void require_even_width(const Shape& s, const char* what) {
  if (s.size() != 4) throw std::invalid_argument(std::string(what) + ": expected (N, C, H, W), got " + shape_str(s));
  if (s[3] % 2 != 0) throw std::invalid_argument(std::string(what) + ": spectral width must be even");
}

}  // namespace

std::size_t FfcSplit::local_channels(std::size_t channels) const {
  if (!(local_ratio > 0.0 && local_ratio < 1.0)) throw std::invalid_argument("local ratio must lie in (0, 1)");
  const auto l = static_cast<std::size_t>(std::floor(static_cast<double>(channels) * local_ratio));
  return std::max<std::size_t>(1, l);
}

std::size_t FfcSplit::global_channels(std::size_t channels) const {
  const std::size_t l = local_channels(channels);
  if (channels <= l) throw std::invalid_argument("global branch empty");
  return channels - l;
}

FfcUnit FfcUnit::zeros(std::size_t channels, FfcSplit split) {
  FfcUnit u;
  const std::size_t cg = split.global_channels(channels);
  const std::size_t cl = channels - cg;
  u.channels = channels;
  u.local = cl;
  u.w_ll = zero_param({cl, cl, 3, 3});
  u.w_gl = zero_param({cl, cg, 3, 3});
  u.w_lg = zero_param({cg, cl, 3, 3});
  u.b_l = zero_param({cl});
  u.b_g = zero_param({cg});
  u.w_spec = zero_param({2 * cg, 2 * cg, 1, 1});
  u.b_spec = zero_param({2 * cg});
  return u;
}

FfcUnit FfcUnit::init(std::size_t channels, Rng& rng, FfcSplit split) {
  FfcUnit u = zeros(channels, split);
  const std::size_t cl = u.local, cg = u.global();
  // Each destination sums two paths, hence the 1/sqrt(2) gain.
  const double g = 1.0 / std::sqrt(2.0);
  u.w_ll.value = scaled_normal(rng, {cl, cl, 3, 3}, cl * 9, g);
  u.w_gl.value = scaled_normal(rng, {cl, cg, 3, 3}, cg * 9, g);
  u.w_lg.value = scaled_normal(rng, {cg, cl, 3, 3}, cl * 9, g);
  u.w_spec.value = scaled_normal(rng, {2 * cg, 2 * cg, 1, 1}, 2 * cg, g);
  return u;
}

Var FfcUnit::spectral(Tape& tape, Var x_g) {
  require_even_width(x_g.shape(), "spectral transform");
  const std::size_t width = x_g.dim(3);
  Var s = ad::conv2d(ad::rdft2_stack(x_g), tape.param(w_spec), tape.param(b_spec), 1, 0);
  if (spectral_activation) s = ad::silu(s);
  return ad::irdft2_unstack(s, width);
}

Var FfcUnit::forward(Tape& tape, Var x) {
  require_even_width(x.shape(), "ffc_unit");
  if (x.dim(1) != channels)
    throw std::invalid_argument("ffc_unit: expected " + std::to_string(channels) + " channels, got " +
                                std::to_string(x.dim(1)));
  Var xl = ad::slice(x, 1, 0, local);
  Var xg = ad::slice(x, 1, local, channels);
  Var yl = ad::add(ad::conv2d(xl, tape.param(w_ll), tape.param(b_l), 1, 1),
                   ad::conv2d(xg, tape.param(w_gl), std::nullopt, 1, 1));
  Var yg = ad::add(ad::conv2d(xl, tape.param(w_lg), tape.param(b_g), 1, 1), spectral(tape, xg));
  if (output_activation) {
    yl = ad::silu(yl);
    yg = ad::silu(yg);
  }
  return ad::concat({yl, yg}, 1);
}

void FfcUnit::visit(const ParamVisitor& f, const std::string& prefix) {
  f(prefix + "w_ll", w_ll);
  f(prefix + "w_gl", w_gl);
  f(prefix + "w_lg", w_lg);
  f(prefix + "b_l", b_l);
  f(prefix + "b_g", b_g);
  f(prefix + "w_spec", w_spec);
  f(prefix + "b_spec", b_spec);
}

FfcResidual FfcResidual::zeros(std::size_t channels) { return {FfcUnit::zeros(channels), FfcUnit::zeros(channels)}; }

FfcResidual FfcResidual::init(std::size_t channels, Rng& rng) {
  FfcResidual r;
  r.first = FfcUnit::init(channels, rng);
  r.second = FfcUnit::init(channels, rng);
  return r;
}

Var FfcResidual::forward(Tape& tape, Var x) { return ad::add(x, second.forward(tape, first.forward(tape, x))); }

void FfcResidual::visit(const ParamVisitor& f, const std::string& prefix) {
  first.visit(f, prefix + "first.");
  second.visit(f, prefix + "second.");
}

Tensor spectral_filter(const Tensor& x, const ComplexTensor& response) {
  if (x.rank() < 2) throw std::invalid_argument("spectral_filter: input needs at least two axes");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  if (response.shape != Shape{h, w / 2 + 1})
    throw std::invalid_argument("spectral_filter: response must have shape " + shape_str({h, w / 2 + 1}));
  ComplexTensor s = rdft_2d(x);
  const std::size_t plane = h * (w / 2 + 1);
  for (std::size_t i = 0; i < s.re.size(); ++i) {
    const std::size_t j = i % plane;
    const double a = s.re[i], b = s.im[i], c = response.re[j], d = response.im[j];
    s.re[i] = a * c - b * d;
    s.im[i] = a * d + b * c;
  }
  return irdft_2d(s, w);
}

S6Params S6Params::zeros(std::size_t channels, std::size_t state) {
  if (channels == 0 || state == 0) throw std::invalid_argument("S6 needs positive channel and state counts");
  S6Params p;
  p.w_delta = zero_param({channels, channels});
  p.b_delta = zero_param({channels});
  p.w_b = zero_param({channels, state});
  p.w_c = zero_param({channels, state});
  p.a_log = zero_param({channels, state});
  p.d_skip = zero_param({channels});
  return p;
}

S6Params S6Params::init(std::size_t channels, std::size_t state, Rng& rng) {
  S6Params p = zeros(channels, state);
  p.w_delta.value = scaled_normal(rng, {channels, channels}, channels, 0.5);
  p.w_b.value = scaled_normal(rng, {channels, state}, channels, 0.5);
  p.w_c.value = scaled_normal(rng, {channels, state}, channels, 0.5);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t s = 0; s < state; ++s) p.a_log.value[c * state + s] = std::log(static_cast<double>(s + 1));
  p.d_skip.value.fill(1.0);
  return p;
}

ad::ScanVars S6Params::bind(Tape& tape) {
  return {tape.param(w_delta), tape.param(b_delta), tape.param(w_b),
          tape.param(w_c),     tape.param(a_log),   tape.param(d_skip)};
}

void S6Params::visit(const ParamVisitor& f, const std::string& prefix) {
  f(prefix + "w_delta", w_delta);
  f(prefix + "b_delta", b_delta);
  f(prefix + "w_b", w_b);
  f(prefix + "w_c", w_c);
  f(prefix + "a_log", a_log);
  f(prefix + "d_skip", d_skip);
}

Var s6_scan(Tape& tape, Var seq, S6Params& p) { return ad::selective_scan(seq, p.bind(tape)); }

ScanSet ScanSet::standard(std::size_t height, std::size_t width) {
  ScanSet s{height, width, {}};
  const std::size_t n = height * width;
  std::vector<std::size_t> row(n), col;
  for (std::size_t i = 0; i < n; ++i) row[i] = i;
  col.reserve(n);
  for (std::size_t x = 0; x < width; ++x)
    for (std::size_t y = 0; y < height; ++y) col.push_back(y * width + x);
  s.orders.push_back(row);
  s.orders.emplace_back(row.rbegin(), row.rend());
  s.orders.push_back(col);
  s.orders.emplace_back(col.rbegin(), col.rend());
  return s;
}

ScanSet ScanSet::identity(std::size_t height, std::size_t width) {
  ScanSet s{height, width, {std::vector<std::size_t>(height * width)}};
  for (std::size_t i = 0; i < height * width; ++i) s.orders[0][i] = i;
  return s;
}

void ScanSet::validate() const {
  if (orders.empty()) throw std::invalid_argument("scan set is empty");
  const std::size_t n = height * width;
  for (std::size_t d = 0; d < orders.size(); ++d) {
    if (orders[d].size() != n)
      throw std::invalid_argument("scan order " + std::to_string(d) + " does not cover the grid (non-bijective)");
    std::vector<char> seen(n, 0);
    for (std::size_t idx : orders[d]) {
      if (idx >= n || seen[idx]) throw std::invalid_argument("scan order " + std::to_string(d) + " is not a bijection");
      seen[idx] = 1;
    }
  }
}

Var multidir_ssm(Tape& tape, Var x, S6Params& p, const ScanSet& scans) {
  const Shape s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("multidir_ssm: expected (N, C, H, W), got " + shape_str(s));
  if (s[2] != scans.height || s[3] != scans.width)
    throw std::invalid_argument("multidir_ssm: scan grid does not match the feature map");
  scans.validate();
  const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
  Var seq = ad::permute(ad::reshape(x, {n, c, hw}), {0, 2, 1});  // (N, HW, C)
  ad::ScanVars vars = p.bind(tape);
  std::vector<Var> outs;
  for (const auto& order : scans.orders) {
    std::vector<std::size_t> inverse(hw);
    for (std::size_t i = 0; i < hw; ++i) inverse[order[i]] = i;
    Var y = ad::selective_scan(ad::gather(seq, 1, order), vars);
    outs.push_back(ad::gather(y, 1, inverse));
  }
  Var total = outs[0];
  for (std::size_t d = 1; d < outs.size(); ++d) total = ad::add(total, outs[d]);
  Var mean = ad::scale(total, 1.0 / static_cast<double>(outs.size()));
  return ad::reshape(ad::permute(mean, {0, 2, 1}), s);
}

void EnhancerConfig::validate() const {
  if (in_channels == 0 || base_channels < 2) throw std::invalid_argument("enhancer needs in_channels >= 1 and base_channels >= 2");
  if (stages == 0) throw std::invalid_argument("enhancer needs at least one stage");
  if (state_dim == 0) throw std::invalid_argument("enhancer state dimension must be positive");
}

void EnhancerConfig::check_input(std::size_t height, std::size_t width) const {
  const std::size_t f = std::size_t{1} << stages;
  if (height % f != 0 || width % f != 0)
    throw std::invalid_argument("enhancer input " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by " + std::to_string(f));
  if ((width / f) % 2 != 0) throw std::invalid_argument("enhancer bottleneck width must be even");
}

EnhancerParams EnhancerParams::zeros(const EnhancerConfig& cfg) {
  cfg.validate();
  EnhancerParams p;
  const std::size_t b = cfg.base_channels;
  p.ssm_in = S6Params::zeros(cfg.in_channels, cfg.state_dim);
  for (std::size_t i = 0; i < cfg.stages; ++i) {
    p.down_w.push_back(zero_param({b, i == 0 ? cfg.in_channels : b, 3, 3}));
    p.down_b.push_back(zero_param({b}));
    p.up_w.push_back(zero_param({b, b, 3, 3}));
    p.up_b.push_back(zero_param({b}));
  }
  for (std::size_t i = 0; i < cfg.ffc_blocks; ++i) p.mid.push_back(FfcResidual::zeros(b));
  p.ssm_out = S6Params::zeros(b, cfg.state_dim);
  p.out_w = zero_param({cfg.in_channels, b, 1, 1});
  p.out_b = zero_param({cfg.in_channels});
  return p;
}

EnhancerParams EnhancerParams::init(const EnhancerConfig& cfg, Rng& rng) {
  EnhancerParams p = zeros(cfg);
  const std::size_t b = cfg.base_channels;
  p.ssm_in = S6Params::init(cfg.in_channels, cfg.state_dim, rng);
  for (std::size_t i = 0; i < cfg.stages; ++i) {
    const std::size_t cin = i == 0 ? cfg.in_channels : b;
    p.down_w[i].value = scaled_normal(rng, {b, cin, 3, 3}, cin * 9);
  }
  for (auto& m : p.mid) m = FfcResidual::init(b, rng);
  for (std::size_t i = 0; i < cfg.stages; ++i) p.up_w[i].value = scaled_normal(rng, {b, b, 3, 3}, b * 9);
  p.ssm_out = S6Params::init(b, cfg.state_dim, rng);
  p.out_w.value = scaled_normal(rng, {cfg.in_channels, b, 1, 1}, b);
  return p;
}

void EnhancerParams::visit(const ParamVisitor& f, const std::string& prefix) {
  ssm_in.visit(f, prefix + "ssm_in.");
  for (std::size_t i = 0; i < down_w.size(); ++i) {
    f(prefix + "down" + std::to_string(i) + ".w", down_w[i]);
    f(prefix + "down" + std::to_string(i) + ".b", down_b[i]);
  }
  for (std::size_t i = 0; i < mid.size(); ++i) mid[i].visit(f, prefix + "mid" + std::to_string(i) + ".");
  for (std::size_t i = 0; i < up_w.size(); ++i) {
    f(prefix + "up" + std::to_string(i) + ".w", up_w[i]);
    f(prefix + "up" + std::to_string(i) + ".b", up_b[i]);
  }
  ssm_out.visit(f, prefix + "ssm_out.");
  f(prefix + "out.w", out_w);
  f(prefix + "out.b", out_b);
}

Var enhancer_forward(Tape& tape, Var x, const EnhancerConfig& cfg, EnhancerParams& p) {
  cfg.validate();
  const Shape in_shape = x.shape();
  if (in_shape.size() == 3) x = ad::reshape(x, {1, in_shape[0], in_shape[1], in_shape[2]});
  else if (in_shape.size() != 4) throw std::invalid_argument("enhancer expects (C, H, W) or (N, C, H, W)");
  if (x.dim(1) != cfg.in_channels)
    throw std::invalid_argument("enhancer expects " + std::to_string(cfg.in_channels) + " channels, got " +
                                std::to_string(x.dim(1)));
  const std::size_t h = x.dim(2), w = x.dim(3);
  cfg.check_input(h, w);

  Var e = multidir_ssm(tape, ad::rms_norm(x, 1), p.ssm_in, ScanSet::standard(h, w));
  std::vector<Var> skips;
  for (std::size_t i = 0; i < cfg.stages; ++i) {
    e = ad::silu(ad::conv2d(e, tape.param(p.down_w[i]), tape.param(p.down_b[i]), 2, 1));
    skips.push_back(e);
  }
  for (auto& block : p.mid) e = block.forward(tape, e);
  for (std::size_t i = 0; i < cfg.stages; ++i) {
    if (cfg.skip_connections) e = ad::add(e, skips[cfg.stages - 1 - i]);
    e = ad::silu(ad::conv2d(ad::upsample2x(e), tape.param(p.up_w[i]), tape.param(p.up_b[i]), 1, 1));
  }
  e = multidir_ssm(tape, ad::rms_norm(e, 1), p.ssm_out, ScanSet::standard(h, w));
  Var out = ad::conv2d(e, tape.param(p.out_w), tape.param(p.out_b), 1, 0);
  return in_shape.size() == 3 ? ad::reshape(out, in_shape) : out;
}

}  // namespace quadkit::pe
