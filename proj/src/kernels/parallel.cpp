// OpenMP kernels. Work is split over independent output planes; inner loops
// are reordered for contiguous access but keep the reference summation order
// per output element.

#include <algorithm>
#include <cmath>
#include <vector>

#include "quadkit/fft.hpp"
#include "quadkit/kernels/kernels.hpp"
#include "scan_math.hpp"

namespace quadkit::kernels::parallel {

namespace {
using Index = std::ptrdiff_t;
inline Index ssize(std::size_t v) { return static_cast<Index>(v); }
}  // namespace

void matmul(std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < ssize(m); ++i) {
    double* row = c.data() + i * ssize(n);
    std::fill(row, row + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[static_cast<std::size_t>(i) * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

void matmul_at_b(std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < ssize(m); ++i) {
    double* row = c.data() + i * ssize(n);
    std::fill(row, row + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + static_cast<std::size_t>(i)];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

void matmul_a_bt(std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < ssize(m); ++i) {
    const double* arow = a.data() + i * ssize(k);
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

void conv2d_forward(const Conv2dDims& d, In x, In w, In b, Out y) {
  const std::size_t oh_n = d.out_height(), ow_n = d.out_width(), kk = d.kernel;
#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < ssize(d.batch); ++n)
    for (Index co = 0; co < ssize(d.cout); ++co) {
      double* out = y.data() + (n * ssize(d.cout) + co) * ssize(oh_n * ow_n);
      std::fill(out, out + oh_n * ow_n, b.empty() ? 0.0 : b[static_cast<std::size_t>(co)]);
      for (std::size_t ci = 0; ci < d.cin; ++ci) {
        const double* in = x.data() + (static_cast<std::size_t>(n) * d.cin + ci) * d.height * d.width;
        for (std::size_t kh = 0; kh < kk; ++kh)
          for (std::size_t kw = 0; kw < kk; ++kw) {
            const double wv = w[((static_cast<std::size_t>(co) * d.cin + ci) * kk + kh) * kk + kw];
            for (std::size_t oh = 0; oh < oh_n; ++oh) {
              const Index ih = ssize(oh * d.stride + kh) - ssize(d.pad);
              if (ih < 0 || ih >= ssize(d.height)) continue;
              for (std::size_t ow = 0; ow < ow_n; ++ow) {
                const Index iw = ssize(ow * d.stride + kw) - ssize(d.pad);
                if (iw < 0 || iw >= ssize(d.width)) continue;
                out[oh * ow_n + ow] += in[ih * ssize(d.width) + iw] * wv;
              }
            }
          }
      }
    }
}

void conv2d_backward_input(const Conv2dDims& d, In gy, In w, Out gx) {
  const std::size_t oh_n = d.out_height(), ow_n = d.out_width(), kk = d.kernel;
#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < ssize(d.batch); ++n)
    for (Index ci = 0; ci < ssize(d.cin); ++ci) {
      double* g = gx.data() + (n * ssize(d.cin) + ci) * ssize(d.height * d.width);
      std::fill(g, g + d.height * d.width, 0.0);
      for (std::size_t co = 0; co < d.cout; ++co) {
        const double* go = gy.data() + (static_cast<std::size_t>(n) * d.cout + co) * oh_n * ow_n;
        for (std::size_t kh = 0; kh < kk; ++kh)
          for (std::size_t kw = 0; kw < kk; ++kw) {
            const double wv = w[((co * d.cin + static_cast<std::size_t>(ci)) * kk + kh) * kk + kw];
            for (std::size_t oh = 0; oh < oh_n; ++oh) {
              const Index ih = ssize(oh * d.stride + kh) - ssize(d.pad);
              if (ih < 0 || ih >= ssize(d.height)) continue;
              for (std::size_t ow = 0; ow < ow_n; ++ow) {
                const Index iw = ssize(ow * d.stride + kw) - ssize(d.pad);
                if (iw < 0 || iw >= ssize(d.width)) continue;
                g[ih * ssize(d.width) + iw] += go[oh * ow_n + ow] * wv;
              }
            }
          }
      }
    }
}

void conv2d_backward_weight(const Conv2dDims& d, In x, In gy, Out gw, Out gb) {
  const std::size_t oh_n = d.out_height(), ow_n = d.out_width(), kk = d.kernel;
#pragma omp parallel for schedule(static)
  for (Index co = 0; co < ssize(d.cout); ++co) {
    for (std::size_t ci = 0; ci < d.cin; ++ci)
      for (std::size_t kh = 0; kh < kk; ++kh)
        for (std::size_t kw = 0; kw < kk; ++kw) {
          double acc = 0.0;
          for (std::size_t n = 0; n < d.batch; ++n) {
            const double* go = gy.data() + (n * d.cout + static_cast<std::size_t>(co)) * oh_n * ow_n;
            const double* in = x.data() + (n * d.cin + ci) * d.height * d.width;
            for (std::size_t oh = 0; oh < oh_n; ++oh) {
              const Index ih = ssize(oh * d.stride + kh) - ssize(d.pad);
              if (ih < 0 || ih >= ssize(d.height)) continue;
              for (std::size_t ow = 0; ow < ow_n; ++ow) {
                const Index iw = ssize(ow * d.stride + kw) - ssize(d.pad);
                if (iw < 0 || iw >= ssize(d.width)) continue;
                acc += go[oh * ow_n + ow] * in[ih * ssize(d.width) + iw];
              }
            }
          }
          gw[((static_cast<std::size_t>(co) * d.cin + ci) * kk + kh) * kk + kw] = acc;
        }
    if (!gb.empty()) {
      double acc = 0.0;
      for (std::size_t n = 0; n < d.batch; ++n) {
        const double* go = gy.data() + (n * d.cout + static_cast<std::size_t>(co)) * oh_n * ow_n;
        for (std::size_t q = 0; q < oh_n * ow_n; ++q) acc += go[q];
      }
      gb[static_cast<std::size_t>(co)] = acc;
    }
  }
}

void conv3d_forward(const Conv3dDims& d, In x, In w, In b, Out y) {
  const std::size_t hw = d.height * d.width;
  const Index H = ssize(d.height), W = ssize(d.width);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index t = 0; t < ssize(d.frames); ++t)
    for (Index co = 0; co < ssize(d.cout); ++co) {
      double* out = y.data() + (t * ssize(d.cout) + co) * ssize(hw);
      std::fill(out, out + hw, b.empty() ? 0.0 : b[static_cast<std::size_t>(co)]);
      for (std::size_t ci = 0; ci < d.cin; ++ci)
        for (Index kt = 0; kt < 3; ++kt) {
          const Index it = t + kt - 1;
          for (Index kh = 0; kh < 3; ++kh)
            for (Index kw = 0; kw < 3; ++kw) {
              if (it < 0 || it >= ssize(d.frames)) continue;
              const double wv = w[(((static_cast<std::size_t>(co) * d.cin + ci) * 3 + kt) * 3 + kh) * 3 + kw];
              const double* in = x.data() + (it * ssize(d.cin) + ssize(ci)) * ssize(hw);
              for (Index h = 0; h < H; ++h) {
                const Index ih = h + kh - 1;
                if (ih < 0 || ih >= H) continue;
                for (Index ww = 0; ww < W; ++ww) {
                  const Index iw = ww + kw - 1;
                  if (iw < 0 || iw >= W) continue;
                  out[h * W + ww] += in[ih * W + iw] * wv;
                }
              }
            }
        }
    }
}

void conv3d_backward_input(const Conv3dDims& d, In gy, In w, Out gx) {
  const std::size_t hw = d.height * d.width;
  const Index H = ssize(d.height), W = ssize(d.width);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index t = 0; t < ssize(d.frames); ++t)
    for (Index ci = 0; ci < ssize(d.cin); ++ci) {
      double* g = gx.data() + (t * ssize(d.cin) + ci) * ssize(hw);
      std::fill(g, g + hw, 0.0);
      for (std::size_t co = 0; co < d.cout; ++co)
        for (Index kt = 0; kt < 3; ++kt) {
          const Index ot = t + 1 - kt;
          if (ot < 0 || ot >= ssize(d.frames)) continue;
          const double* go = gy.data() + (ot * ssize(d.cout) + ssize(co)) * ssize(hw);
          for (Index kh = 0; kh < 3; ++kh)
            for (Index kw = 0; kw < 3; ++kw) {
              const double wv = w[(((co * d.cin + static_cast<std::size_t>(ci)) * 3 + kt) * 3 + kh) * 3 + kw];
              for (Index h = 0; h < H; ++h) {
                const Index oh = h + 1 - kh;
                if (oh < 0 || oh >= H) continue;
                for (Index ww = 0; ww < W; ++ww) {
                  const Index ow = ww + 1 - kw;
                  if (ow < 0 || ow >= W) continue;
                  g[h * W + ww] += go[oh * W + ow] * wv;
                }
              }
            }
        }
    }
}

void conv3d_backward_weight(const Conv3dDims& d, In x, In gy, Out gw, Out gb) {
  const std::size_t hw = d.height * d.width;
  const Index H = ssize(d.height), W = ssize(d.width);
#pragma omp parallel for schedule(static)
  for (Index co = 0; co < ssize(d.cout); ++co) {
    for (std::size_t ci = 0; ci < d.cin; ++ci)
      for (Index kt = 0; kt < 3; ++kt)
        for (Index kh = 0; kh < 3; ++kh)
          for (Index kw = 0; kw < 3; ++kw) {
            double acc = 0.0;
            for (Index t = 0; t < ssize(d.frames); ++t) {
              const Index it = t + kt - 1;
              if (it < 0 || it >= ssize(d.frames)) continue;
              const double* go = gy.data() + (t * ssize(d.cout) + co) * ssize(hw);
              const double* in = x.data() + (it * ssize(d.cin) + ssize(ci)) * ssize(hw);
              for (Index h = 0; h < H; ++h) {
                const Index ih = h + kh - 1;
                if (ih < 0 || ih >= H) continue;
                for (Index ww = 0; ww < W; ++ww) {
                  const Index iw = ww + kw - 1;
                  if (iw < 0 || iw >= W) continue;
                  acc += go[h * W + ww] * in[ih * W + iw];
                }
              }
            }
            gw[(((static_cast<std::size_t>(co) * d.cin + ci) * 3 + kt) * 3 + kh) * 3 + kw] = acc;
          }
    if (!gb.empty()) {
      double acc = 0.0;
      for (std::size_t t = 0; t < d.frames; ++t) {
        const double* go = gy.data() + (t * d.cout + static_cast<std::size_t>(co)) * hw;
        for (std::size_t q = 0; q < hw; ++q) acc += go[q];
      }
      gb[static_cast<std::size_t>(co)] = acc;
    }
  }
}

void rdft2(std::size_t batch, std::size_t h, std::size_t w, In x, Out re, Out im) {
  const std::size_t wh = w / 2 + 1;
#pragma omp parallel
  {
    std::vector<double> rr(w), ri(w), cr(h), ci(h);
#pragma omp for collapse(2) schedule(static)
    for (Index b = 0; b < ssize(batch); ++b)
      for (Index r = 0; r < ssize(h); ++r) {
        const std::size_t row = static_cast<std::size_t>(b) * h + static_cast<std::size_t>(r);
        std::copy_n(x.data() + row * w, w, rr.begin());
        std::fill(ri.begin(), ri.end(), 0.0);
        dft_inplace(rr, ri, false);
        std::copy_n(rr.begin(), wh, re.data() + row * wh);
        std::copy_n(ri.begin(), wh, im.data() + row * wh);
      }
#pragma omp for collapse(2) schedule(static)
    for (Index b = 0; b < ssize(batch); ++b)
      for (Index l = 0; l < ssize(wh); ++l) {
        const std::size_t base = static_cast<std::size_t>(b) * h * wh + static_cast<std::size_t>(l);
        for (std::size_t r = 0; r < h; ++r) {
          cr[r] = re[base + r * wh];
          ci[r] = im[base + r * wh];
        }
        dft_inplace(cr, ci, false);
        for (std::size_t r = 0; r < h; ++r) {
          re[base + r * wh] = cr[r];
          im[base + r * wh] = ci[r];
        }
      }
  }
}

void irdft2(std::size_t batch, std::size_t h, std::size_t w, In re, In im, Out x) {
  const std::size_t wh = w / 2 + 1;
  const double scale = 1.0 / static_cast<double>(h * w);
  std::vector<double> tr(batch * h * wh), ti(batch * h * wh);
#pragma omp parallel
  {
    std::vector<double> cr(h), ci(h), rr(w), ri(w);
#pragma omp for collapse(2) schedule(static)
    for (Index b = 0; b < ssize(batch); ++b)
      for (Index l = 0; l < ssize(wh); ++l) {
        const std::size_t base = static_cast<std::size_t>(b) * h * wh + static_cast<std::size_t>(l);
        for (std::size_t r = 0; r < h; ++r) {
          cr[r] = re[base + r * wh];
          ci[r] = im[base + r * wh];
        }
        dft_inplace(cr, ci, true);
        for (std::size_t r = 0; r < h; ++r) {
          tr[base + r * wh] = cr[r];
          ti[base + r * wh] = ci[r];
        }
      }
#pragma omp for collapse(2) schedule(static)
    for (Index b = 0; b < ssize(batch); ++b)
      for (Index r = 0; r < ssize(h); ++r) {
        const std::size_t row = static_cast<std::size_t>(b) * h + static_cast<std::size_t>(r);
        for (std::size_t l = 0; l < wh; ++l) {
          rr[l] = tr[row * wh + l];
          ri[l] = ti[row * wh + l];
        }
        for (std::size_t l = wh; l < w; ++l) {
          rr[l] = tr[row * wh + (w - l)];
          ri[l] = -ti[row * wh + (w - l)];
        }
        dft_inplace(rr, ri, true);
        for (std::size_t l = 0; l < w; ++l) x[row * w + l] = rr[l] * scale;
      }
  }
}

void attention_forward(const AttentionDims& d, In x, In wq, In wk, In wv, Out q, Out k, Out v, Out p, Out y) {
  const std::size_t L = d.tokens;
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < ssize(d.batch); ++b) {
    const auto ub = static_cast<std::size_t>(b);
    AttentionDims one = d;
    one.batch = 1;
    serial::attention_forward(one, x.subspan(ub * L * d.dim, L * d.dim), wq, wk, wv,
                              q.subspan(ub * L * d.key_dim, L * d.key_dim), k.subspan(ub * L * d.key_dim, L * d.key_dim),
                              v.subspan(ub * L * d.value_dim, L * d.value_dim), p.subspan(ub * L * L, L * L),
                              y.subspan(ub * L * d.value_dim, L * d.value_dim));
  }
}

void attention_backward(const AttentionDims& d, In x, In wq, In wk, In wv, In q, In k, In v, In p, In gy, Out gx,
                        Out gwq, Out gwk, Out gwv) {
  const std::size_t L = d.tokens;
  const std::size_t nq = d.dim * d.key_dim, nv = d.dim * d.value_dim;
  std::vector<double> part((2 * nq + nv) * d.batch);
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < ssize(d.batch); ++b) {
    const auto ub = static_cast<std::size_t>(b);
    AttentionDims one = d;
    one.batch = 1;
    double* slot = part.data() + ub * (2 * nq + nv);
    serial::attention_backward(one, x.subspan(ub * L * d.dim, L * d.dim), wq, wk, wv,
                               q.subspan(ub * L * d.key_dim, L * d.key_dim), k.subspan(ub * L * d.key_dim, L * d.key_dim),
                               v.subspan(ub * L * d.value_dim, L * d.value_dim), p.subspan(ub * L * L, L * L),
                               gy.subspan(ub * L * d.value_dim, L * d.value_dim), gx.subspan(ub * L * d.dim, L * d.dim),
                               Out(slot, nq), Out(slot + nq, nq), Out(slot + 2 * nq, nv));
  }
  std::fill(gwq.begin(), gwq.end(), 0.0);
  std::fill(gwk.begin(), gwk.end(), 0.0);
  std::fill(gwv.begin(), gwv.end(), 0.0);
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* slot = part.data() + b * (2 * nq + nv);
    for (std::size_t i = 0; i < nq; ++i) gwq[i] += slot[i];
    for (std::size_t i = 0; i < nq; ++i) gwk[i] += slot[nq + i];
    for (std::size_t i = 0; i < nv; ++i) gwv[i] += slot[2 * nq + i];
  }
}

void scan_forward(const ScanDims& d, In x, const ScanParams& p, const ScanCache& cache, Out y) {
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < ssize(d.batch); ++b) detail::scan_forward_one(d, static_cast<std::size_t>(b), x, p, cache, y);
}

void scan_backward(const ScanDims& d, In x, const ScanParams& p, const ScanCache& cache, In gy, Out gx,
                   const ScanGrads& g) {
  const std::size_t C = d.channels, S = d.state;
  const std::size_t sizes[6] = {C * C, C, C * S, C * S, C * S, C};
  std::size_t per = 0;
  for (auto s : sizes) per += s;
  std::vector<double> part(per * d.batch, 0.0);
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < ssize(d.batch); ++b) {
    double* slot = part.data() + static_cast<std::size_t>(b) * per;
    ScanGrads local{Out(slot, sizes[0]),
                    Out(slot + sizes[0], sizes[1]),
                    Out(slot + sizes[0] + sizes[1], sizes[2]),
                    Out(slot + sizes[0] + sizes[1] + sizes[2], sizes[3]),
                    Out(slot + sizes[0] + sizes[1] + sizes[2] + sizes[3], sizes[4]),
                    Out(slot + sizes[0] + sizes[1] + sizes[2] + sizes[3] + sizes[4], sizes[5])};
    detail::scan_backward_one(d, static_cast<std::size_t>(b), x, p, cache, gy, gx, local);
  }
  const Out outs[6] = {g.w_delta, g.b_delta, g.w_b, g.w_c, g.a_log, g.d_skip};
  for (auto o : outs) std::fill(o.begin(), o.end(), 0.0);
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* slot = part.data() + b * per;
    for (auto o : outs) {
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += slot[i];
      slot += o.size();
    }
  }
}

}  // namespace quadkit::kernels::parallel
