#include "quadkit/ops.hpp"

#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "quadkit/kernels/kernels.hpp"

namespace quadkit::ad {

namespace {

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("vars recorded on different tapes");
}

void require_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

bool any_grad(std::initializer_list<Var> vs) {
  for (auto v : vs)
    if (v.tape->needs_grad(v)) return true;
  return false;
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Var add(Var a, Var b) {
  same_tape(a, b);
  require_shape(a, b, "add");
  Tape& t = *a.tape;
  return t.push(a.value() + b.value(), any_grad({a, b}), [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  require_shape(a, b, "sub");
  Tape& t = *a.tape;
  return t.push(a.value() - b.value(), any_grad({a, b}), [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g * -1.0);
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  require_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return a.tape->push(std::move(out), any_grad({a, b}), [a, b](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(a)) {
      Tensor& ga = tp.grad_buffer(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (tp.needs_grad(b)) {
      Tensor& gb = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
}

Var scale(Var a, double s) {
  return a.tape->push(a.value() * s, any_grad({a}), [a, s](Tape& tp, const Tensor& g) { tp.accumulate(a, g * s); });
}

Var mul_scalar(Var a, Var s) {
  same_tape(a, s);
  if (s.value().numel() != 1) throw std::invalid_argument("mul_scalar: scalar operand must hold one element");
  const double sv = s.value()[0];
  return a.tape->push(a.value() * sv, any_grad({a, s}), [a, s](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g * s.value()[0]);
    if (tp.needs_grad(s)) tp.grad_buffer(s)[0] += dot(g, a.value());
  });
}

Var add_along(Var x, Var v, std::size_t axis) {
  same_tape(x, v);
  const Shape& s = x.shape();
  if (axis >= s.size() || v.value().numel() != s[axis])
    throw std::invalid_argument("add_along: vector length does not match axis extent");
  const std::size_t outer = prod(s, 0, axis), n = s[axis], inner = prod(s, axis + 1, s.size());
  Tensor out = x.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < inner; ++j) out[(o * n + i) * inner + j] += v.value()[i];
  return x.tape->push(std::move(out), any_grad({x, v}), [x, v, outer, n, inner](Tape& tp, const Tensor& g) {
    tp.accumulate(x, g);
    if (tp.needs_grad(v)) {
      Tensor& gv = tp.grad_buffer(v);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < inner; ++j) gv[i] += g[(o * n + i) * inner + j];
    }
  });
}

Var silu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.vec()) v = v * sigmoid(v);
  return x.tape->push(std::move(out), any_grad({x}), [x](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double z = x.value()[i];
      const double s = sigmoid(z);
      gx[i] += g[i] * s * (1.0 + z * (1.0 - s));
    }
  });
}

Var tanh(Var x) {
  Tensor out = x.value();
  for (auto& v : out.vec()) v = std::tanh(v);
  auto saved = std::make_shared<Tensor>(out);
  return x.tape->push(std::move(out), any_grad({x}), [x, saved](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (1.0 - (*saved)[i] * (*saved)[i]);
  });
}

Var rms_norm(Var x, std::size_t axis, double eps) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw std::invalid_argument("rms_norm: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  auto rinv = std::make_shared<std::vector<double>>(outer * inner);
  Tensor out(s);
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      double m = 0.0;
      for (std::size_t c = 0; c < n; ++c) m += xv[(o * n + c) * inner + i] * xv[(o * n + c) * inner + i];
      const double r = 1.0 / std::sqrt(m / static_cast<double>(n) + eps);
      (*rinv)[o * inner + i] = r;
      for (std::size_t c = 0; c < n; ++c) out[(o * n + c) * inner + i] = xv[(o * n + c) * inner + i] * r;
    }
  return x.tape->push(std::move(out), any_grad({x}), [x, rinv, outer, inner, n](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    const Tensor& xv = x.value();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const double r = (*rinv)[o * inner + i];
        double gdotx = 0.0;
        for (std::size_t c = 0; c < n; ++c) gdotx += g[(o * n + c) * inner + i] * xv[(o * n + c) * inner + i];
        const double k = r * r * r * gdotx / static_cast<double>(n);
        for (std::size_t c = 0; c < n; ++c) {
          const std::size_t j = (o * n + c) * inner + i;
          gx[j] += r * g[j] - k * xv[j];
        }
      }
  });
}

Var reshape(Var x, Shape shape) {
  const Shape orig = x.shape();
  return x.tape->push(x.value().reshaped(std::move(shape)), any_grad({x}),
                      [x, orig](Tape& tp, const Tensor& g) { tp.accumulate(x, g.reshaped(orig)); });
}

namespace {

Tensor permute_tensor(const Tensor& x, const std::vector<std::size_t>& perm) {
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (perm.size() != r) throw std::invalid_argument("permute: rank mismatch");
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_stride[i] = in_stride[i + 1] * s[i + 1];
  Shape os(r);
  std::vector<bool> seen(r, false);
  for (std::size_t i = 0; i < r; ++i) {
    if (perm[i] >= r || seen[perm[i]]) throw std::invalid_argument("permute: not a permutation");
    seen[perm[i]] = true;
    os[i] = s[perm[i]];
  }
  Tensor out(os);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < out.numel(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * in_stride[perm[i]];
    out[flat] = x[src];
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < os[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

}  // namespace

Var permute(Var x, const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  Tensor out = permute_tensor(x.value(), perm);
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return x.tape->push(std::move(out), any_grad({x}),
                      [x, inv](Tape& tp, const Tensor& g) { tp.accumulate(x, permute_tensor(g, inv)); });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Shape s = parts[0].shape();
  if (axis >= s.size()) throw std::invalid_argument("concat: axis out of range");
  std::size_t total = 0;
  bool needs = false;
  for (auto p : parts) {
    same_tape(parts[0], p);
    Shape ps = p.shape();
    if (ps.size() != s.size()) throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && ps[i] != s[i]) throw std::invalid_argument("concat: extent mismatch");
    total += ps[axis];
    needs = needs || p.tape->needs_grad(p);
  }
  s[axis] = total;
  const std::size_t outer = prod(s, 0, axis), inner = prod(s, axis + 1, s.size());
  Tensor out(s);
  std::size_t off = 0;
  for (auto p : parts) {
    const std::size_t n = p.dim(axis);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < n * inner; ++i) out[(o * total + off) * inner + i] = p.value()[o * n * inner + i];
    off += n;
  }
  return parts[0].tape->push(std::move(out), needs, [parts, outer, inner, total, axis](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (auto p : parts) {
      const std::size_t n = p.dim(axis);
      if (tp.needs_grad(p)) {
        Tensor& gp = tp.grad_buffer(p);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < n * inner; ++i) gp[o * n * inner + i] += g[(o * total + off) * inner + i];
      }
      off += n;
    }
  });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx;
  if (axis >= x.shape().size() || begin >= end || end > x.dim(axis))
    throw std::invalid_argument("slice: invalid range");
  for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
  return gather(x, axis, idx);
}

Var gather(Var x, std::size_t axis, const std::vector<std::size_t>& index) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw std::invalid_argument("gather: axis out of range");
  const std::size_t outer = prod(s, 0, axis), n = s[axis], inner = prod(s, axis + 1, s.size());
  for (auto i : index)
    if (i >= n) throw std::invalid_argument("gather: index out of range");
  Shape os = s;
  os[axis] = index.size();
  const std::size_t m = index.size();
  Tensor out(os);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < inner; ++j) out[(o * m + i) * inner + j] = x.value()[(o * n + index[i]) * inner + j];
  return x.tape->push(std::move(out), any_grad({x}), [x, index, outer, n, m, inner](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < inner; ++j) gx[(o * n + index[i]) * inner + j] += g[(o * m + i) * inner + j];
  });
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  kernels::matmul(m, k, n, a.value().data(), b.value().data(), out.data());
  return a.tape->push(std::move(out), any_grad({a, b}), [a, b, m, k, n](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(a)) {
      Tensor ga({m, k});
      kernels::matmul_a_bt(m, n, k, g.data(), b.value().data(), ga.data());
      tp.accumulate(a, ga);
    }
    if (tp.needs_grad(b)) {
      Tensor gb({k, n});
      kernels::matmul_at_b(k, m, n, a.value().data(), g.data(), gb.data());
      tp.accumulate(b, gb);
    }
  });
}

Var linear(Var x, Var w, std::optional<Var> b) {
  Var y = matmul(x, w);
  if (b) y = add_along(y, *b, 1);
  return y;
}

Var conv2d(Var x, Var w, std::optional<Var> b, std::size_t stride, std::size_t pad) {
  same_tape(x, w);
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || ws[1] != xs[1] || ws[2] != ws[3])
    throw std::invalid_argument("conv2d: incompatible shapes " + shape_str(xs) + " and kernel " + shape_str(ws));
  if (b && b->value().numel() != ws[0]) throw std::invalid_argument("conv2d: bias length mismatch");
  if (xs[2] + 2 * pad < ws[2] || xs[3] + 2 * pad < ws[3]) throw std::invalid_argument("conv2d: input smaller than kernel");
  const kernels::Conv2dDims d{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, pad};
  Tensor out({d.batch, d.cout, d.out_height(), d.out_width()});
  kernels::conv2d_forward(d, x.value().data(), w.value().data(),
                          b ? b->value().data() : std::span<const double>{}, out.data());
  const bool needs = any_grad({x, w}) || (b && b->tape->needs_grad(*b));
  return x.tape->push(std::move(out), needs, [x, w, b, d](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(x)) {
      Tensor gx(x.shape());
      kernels::conv2d_backward_input(d, g.data(), w.value().data(), gx.data());
      tp.accumulate(x, gx);
    }
    const bool gw_needed = tp.needs_grad(w), gb_needed = b && tp.needs_grad(*b);
    if (gw_needed || gb_needed) {
      Tensor gw(w.shape());
      Tensor gb({d.cout});
      kernels::conv2d_backward_weight(d, x.value().data(), g.data(), gw.data(), gb.data());
      if (gw_needed) tp.accumulate(w, gw);
      if (gb_needed) tp.accumulate(*b, gb);
    }
  });
}

Var conv3d(Var x, Var w, std::optional<Var> b) {
  same_tape(x, w);
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 5 || ws[2] != 3 || ws[3] != 3 || ws[4] != 3)
    throw std::invalid_argument("conv3d: expected (T, C, H, W) input and (Cout, Cin, 3, 3, 3) kernel");
  if (ws[1] != xs[1])
    throw std::invalid_argument("conv3d: channel mismatch, input has " + std::to_string(xs[1]) + ", kernel expects " +
                                std::to_string(ws[1]));
  if (b && b->value().numel() != ws[0]) throw std::invalid_argument("conv3d: bias length mismatch");
  const kernels::Conv3dDims d{xs[0], xs[1], xs[2], xs[3], ws[0]};
  Tensor out({d.frames, d.cout, d.height, d.width});
  kernels::conv3d_forward(d, x.value().data(), w.value().data(),
                          b ? b->value().data() : std::span<const double>{}, out.data());
  const bool needs = any_grad({x, w}) || (b && b->tape->needs_grad(*b));
  return x.tape->push(std::move(out), needs, [x, w, b, d](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(x)) {
      Tensor gx(x.shape());
      kernels::conv3d_backward_input(d, g.data(), w.value().data(), gx.data());
      tp.accumulate(x, gx);
    }
    const bool gw_needed = tp.needs_grad(w), gb_needed = b && tp.needs_grad(*b);
    if (gw_needed || gb_needed) {
      Tensor gw(w.shape());
      Tensor gb({d.cout});
      kernels::conv3d_backward_weight(d, x.value().data(), g.data(), gw.data(), gb.data());
      if (gw_needed) tp.accumulate(w, gw);
      if (gb_needed) tp.accumulate(*b, gb);
    }
  });
}

Var upsample2x(Var x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("upsample2x: expected (N, C, H, W)");
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  Tensor out({s[0], s[1], 2 * h, 2 * w});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < 2 * h; ++i)
      for (std::size_t j = 0; j < 2 * w; ++j) out[(p * 2 * h + i) * 2 * w + j] = x.value()[(p * h + i / 2) * w + j / 2];
  return x.tape->push(std::move(out), any_grad({x}), [x, planes, h, w](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < 2 * h; ++i)
        for (std::size_t j = 0; j < 2 * w; ++j) gx[(p * h + i / 2) * w + j / 2] += g[(p * 2 * h + i) * 2 * w + j];
  });
}

Var mean_spatial(Var x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("mean_spatial: expected (N, C, H, W)");
  const std::size_t planes = s[0] * s[1], hw = s[2] * s[3];
  Tensor out({s[0], s[1]});
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t q = 0; q < hw; ++q) acc += x.value()[p * hw + q];
    out[p] = acc / static_cast<double>(hw);
  }
  return x.tape->push(std::move(out), any_grad({x}), [x, planes, hw](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t q = 0; q < hw; ++q) gx[p * hw + q] += g[p] / static_cast<double>(hw);
  });
}

namespace {

// Column weights of the half-spectrum: 1 for the DC and Nyquist columns, 2 otherwise.
double half_weight(std::size_t l, std::size_t width) { return (l == 0 || 2 * l == width) ? 1.0 : 2.0; }

}  // namespace

Var rdft2_stack(Var x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("rdft2_stack: expected (N, C, H, W)");
  const std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (w % 2 != 0) throw std::invalid_argument("spectral width must be even");
  const std::size_t wh = w / 2 + 1, plane = h * wh;
  std::vector<double> re(n * c * plane), im(n * c * plane);
  kernels::rdft2(n * c, h, w, x.value().data(), re, im);
  Tensor out({n, 2 * c, h, wh});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t q = 0; q < plane; ++q) {
        out[((b * 2 * c) + ch) * plane + q] = re[(b * c + ch) * plane + q];
        out[((b * 2 * c) + c + ch) * plane + q] = im[(b * c + ch) * plane + q];
      }
  return x.tape->push(std::move(out), any_grad({x}), [x, n, c, h, w, wh, plane](Tape& tp, const Tensor& g) {
    // Adjoint: Re(sum_{k,l} G e^{+i theta}) = H W irdft(G / c_l).
    std::vector<double> gr(n * c * plane), gi(n * c * plane);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t q = 0; q < plane; ++q) {
          const double cw = half_weight(q % wh, w);
          gr[(b * c + ch) * plane + q] = g[((b * 2 * c) + ch) * plane + q] / cw;
          gi[(b * c + ch) * plane + q] = g[((b * 2 * c) + c + ch) * plane + q] / cw;
        }
    Tensor gx(x.shape());
    kernels::irdft2(n * c, h, w, gr, gi, gx.data());
    tp.accumulate(x, gx * static_cast<double>(h * w));
  });
}

Var irdft2_unstack(Var spec, std::size_t width) {
  const Shape& s = spec.shape();
  if (s.size() != 4 || s[1] % 2 != 0) throw std::invalid_argument("irdft2_unstack: expected (N, 2C, H, W/2+1)");
  if (width % 2 != 0 || s[3] != width / 2 + 1) throw std::invalid_argument("spectral width must be even");
  const std::size_t n = s[0], c = s[1] / 2, h = s[2], wh = s[3], plane = h * wh;
  std::vector<double> re(n * c * plane), im(n * c * plane);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t q = 0; q < plane; ++q) {
        re[(b * c + ch) * plane + q] = spec.value()[((b * 2 * c) + ch) * plane + q];
        im[(b * c + ch) * plane + q] = spec.value()[((b * 2 * c) + c + ch) * plane + q];
      }
  Tensor out({n, c, h, width});
  kernels::irdft2(n * c, h, width, re, im, out.data());
  return spec.tape->push(std::move(out), any_grad({spec}), [spec, n, c, h, width, wh, plane](Tape& tp, const Tensor& g) {
    // Adjoint: G = (c_l / (H W)) rdft(g).
    std::vector<double> gr(n * c * plane), gi(n * c * plane);
    kernels::rdft2(n * c, h, width, g.data(), gr, gi);
    Tensor& gs = tp.grad_buffer(spec);
    const double inv = 1.0 / static_cast<double>(h * width);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t q = 0; q < plane; ++q) {
          const double cw = half_weight(q % wh, width) * inv;
          gs[((b * 2 * c) + ch) * plane + q] += cw * gr[(b * c + ch) * plane + q];
          gs[((b * 2 * c) + c + ch) * plane + q] += cw * gi[(b * c + ch) * plane + q];
        }
  });
}

Var attention(Var x, Var wq, Var wk, Var wv) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw std::invalid_argument("attention: expected (B, L, C) tokens");
  if (wq.shape().size() != 2 || wk.shape() != wq.shape() || wq.dim(0) != s[2] || wv.shape().size() != 2 ||
      wv.dim(0) != s[2])
    throw std::invalid_argument("attention: projection shapes do not match token dim " + std::to_string(s[2]));
  const kernels::AttentionDims d{s[0], s[1], s[2], wq.dim(1), wv.dim(1)};
  struct Saved {
    std::vector<double> q, k, v, p;
  };
  auto sv = std::make_shared<Saved>();
  sv->q.resize(d.batch * d.tokens * d.key_dim);
  sv->k.resize(sv->q.size());
  sv->v.resize(d.batch * d.tokens * d.value_dim);
  sv->p.resize(d.batch * d.tokens * d.tokens);
  Tensor out({d.batch, d.tokens, d.value_dim});
  kernels::attention_forward(d, x.value().data(), wq.value().data(), wk.value().data(), wv.value().data(), sv->q,
                             sv->k, sv->v, sv->p, out.data());
  return x.tape->push(std::move(out), any_grad({x, wq, wk, wv}), [x, wq, wk, wv, d, sv](Tape& tp, const Tensor& g) {
    Tensor gx(x.shape()), gq(wq.shape()), gk(wk.shape()), gv(wv.shape());
    kernels::attention_backward(d, x.value().data(), wq.value().data(), wk.value().data(), wv.value().data(), sv->q,
                                sv->k, sv->v, sv->p, g.data(), gx.data(), gq.data(), gk.data(), gv.data());
    tp.accumulate(x, gx);
    tp.accumulate(wq, gq);
    tp.accumulate(wk, gk);
    tp.accumulate(wv, gv);
  });
}

Var selective_scan(Var x, const ScanVars& p) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw std::invalid_argument("selective_scan: expected (B, L, C)");
  const std::size_t c = s[2];
  const std::size_t st = p.w_b.value().numel() / c;
  if (p.w_delta.value().numel() != c * c || p.b_delta.value().numel() != c || p.w_b.value().numel() != c * st ||
      p.w_c.value().numel() != c * st || p.a_log.value().numel() != c * st || p.d_skip.value().numel() != c)
    throw std::invalid_argument("selective_scan: parameter shapes do not match channel count");
  const kernels::ScanDims d{s[0], s[1], c, st};
  struct Saved {
    std::vector<double> delta, pre, bmat, cmat, hidden;
  };
  auto sv = std::make_shared<Saved>();
  sv->delta.resize(d.batch * d.length * c);
  sv->pre.resize(sv->delta.size());
  sv->bmat.resize(d.batch * d.length * st);
  sv->cmat.resize(sv->bmat.size());
  sv->hidden.resize(d.batch * d.length * c * st);
  const kernels::ScanCache cache{sv->delta, sv->pre, sv->bmat, sv->cmat, sv->hidden};
  const kernels::ScanParams params{p.w_delta.value().data(), p.b_delta.value().data(), p.w_b.value().data(),
                                   p.w_c.value().data(),     p.a_log.value().data(),   p.d_skip.value().data()};
  Tensor out(s);
  kernels::scan_forward(d, x.value().data(), params, cache, out.data());
  const bool needs = any_grad({x, p.w_delta, p.b_delta, p.w_b, p.w_c, p.a_log, p.d_skip});
  return x.tape->push(std::move(out), needs, [x, p, d, sv](Tape& tp, const Tensor& g) {
    const kernels::ScanCache cache{sv->delta, sv->pre, sv->bmat, sv->cmat, sv->hidden};
    const kernels::ScanParams params{p.w_delta.value().data(), p.b_delta.value().data(), p.w_b.value().data(),
                                     p.w_c.value().data(),     p.a_log.value().data(),   p.d_skip.value().data()};
    Tensor gx(x.shape()), gwd(p.w_delta.shape()), gbd(p.b_delta.shape()), gwb(p.w_b.shape()), gwc(p.w_c.shape()),
        gal(p.a_log.shape()), gd(p.d_skip.shape());
    kernels::scan_backward(d, x.value().data(), params, cache, g.data(), gx.data(),
                           {gwd.data(), gbd.data(), gwb.data(), gwc.data(), gal.data(), gd.data()});
    tp.accumulate(x, gx);
    tp.accumulate(p.w_delta, gwd);
    tp.accumulate(p.b_delta, gbd);
    tp.accumulate(p.w_b, gwb);
    tp.accumulate(p.w_c, gwc);
    tp.accumulate(p.a_log, gal);
    tp.accumulate(p.d_skip, gd);
  });
}

Var mask_select(Var gamma, Var phi, const std::vector<int>& mask) {
  same_tape(gamma, phi);
  const Shape& s = gamma.shape();
  const std::size_t rows = mask.size();
  if (rows == 0 || gamma.value().numel() % rows != 0) throw std::invalid_argument("mask_select: mask/rows mismatch");
  const std::size_t dim = gamma.value().numel() / rows;
  if (phi.value().numel() != dim)
    throw std::invalid_argument("mask_select: null embedding has dim " + std::to_string(phi.value().numel()) +
                                ", expected " + std::to_string(dim));
  for (int m : mask)
    if (m != 0 && m != 1) throw std::invalid_argument("mask_select: mask entries must be 0 or 1");
  Tensor out(s);
  for (std::size_t r = 0; r < rows; ++r) {
    const double m = mask[r];
    for (std::size_t i = 0; i < dim; ++i)
      out[r * dim + i] = m * gamma.value()[r * dim + i] + (1.0 - m) * phi.value()[i];
  }
  return gamma.tape->push(std::move(out), any_grad({gamma, phi}), [gamma, phi, mask, rows, dim](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(gamma)) {
      Tensor& gg = tp.grad_buffer(gamma);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < dim; ++i) gg[r * dim + i] += mask[r] * g[r * dim + i];
    }
    if (tp.needs_grad(phi)) {
      Tensor& gp = tp.grad_buffer(phi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < dim; ++i) gp[i] += (1 - mask[r]) * g[r * dim + i];
    }
  });
}

Var weighted_sum(Var x, const Tensor& weights) {
  if (weights.shape() != x.shape()) throw std::invalid_argument("weighted_sum: shape mismatch");
  return x.tape->push(Tensor::scalar(dot(x.value(), weights)), any_grad({x}),
                      [x, weights](Tape& tp, const Tensor& g) { tp.accumulate(x, weights * g[0]); });
}

Var mse(Var x, const Tensor& target) {
  if (target.shape() != x.shape()) throw std::invalid_argument("mse: shape mismatch");
  const double n = static_cast<double>(target.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    const double d = x.value()[i] - target[i];
    acc += d * d;
  }
  return x.tape->push(Tensor::scalar(acc / n), any_grad({x}), [x, target, n](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < target.numel(); ++i) gx[i] += g[0] * 2.0 * (x.value()[i] - target[i]) / n;
  });
}

}  // namespace quadkit::ad
