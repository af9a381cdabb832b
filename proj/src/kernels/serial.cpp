// Reference kernels: straightforward loops, one output element at a time.

#include <algorithm>
#include <cmath>
#include <vector>

#include "quadkit/fft.hpp"
#include "quadkit/kernels/kernels.hpp"
#include "scan_math.hpp"

namespace quadkit::kernels::serial {

void matmul(std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

void matmul_at_b(std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

void matmul_a_bt(std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
}

void conv2d_forward(const Conv2dDims& d, In x, In w, In b, Out y) {
  const std::size_t oh_n = d.out_height(), ow_n = d.out_width(), kk = d.kernel;
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t co = 0; co < d.cout; ++co)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          double acc = b.empty() ? 0.0 : b[co];
          for (std::size_t ci = 0; ci < d.cin; ++ci)
            for (std::size_t kh = 0; kh < kk; ++kh)
              for (std::size_t kw = 0; kw < kk; ++kw) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * d.stride + kh) - static_cast<std::ptrdiff_t>(d.pad);
                const auto iw = static_cast<std::ptrdiff_t>(ow * d.stride + kw) - static_cast<std::ptrdiff_t>(d.pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(d.height) ||
                    iw >= static_cast<std::ptrdiff_t>(d.width))
                  continue;
                acc += x[((n * d.cin + ci) * d.height + ih) * d.width + iw] *
                       w[((co * d.cin + ci) * kk + kh) * kk + kw];
              }
          y[((n * d.cout + co) * oh_n + oh) * ow_n + ow] = acc;
        }
}

void conv2d_backward_input(const Conv2dDims& d, In gy, In w, Out gx) {
  const std::size_t oh_n = d.out_height(), ow_n = d.out_width(), kk = d.kernel;
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t ci = 0; ci < d.cin; ++ci)
      for (std::size_t ih = 0; ih < d.height; ++ih)
        for (std::size_t iw = 0; iw < d.width; ++iw) {
          double acc = 0.0;
          for (std::size_t co = 0; co < d.cout; ++co)
            for (std::size_t kh = 0; kh < kk; ++kh)
              for (std::size_t kw = 0; kw < kk; ++kw) {
                const auto th = static_cast<std::ptrdiff_t>(ih + d.pad) - static_cast<std::ptrdiff_t>(kh);
                const auto tw = static_cast<std::ptrdiff_t>(iw + d.pad) - static_cast<std::ptrdiff_t>(kw);
                if (th < 0 || tw < 0) continue;
                if (th % static_cast<std::ptrdiff_t>(d.stride) || tw % static_cast<std::ptrdiff_t>(d.stride)) continue;
                const auto oh = static_cast<std::size_t>(th) / d.stride;
                const auto ow = static_cast<std::size_t>(tw) / d.stride;
                if (oh >= oh_n || ow >= ow_n) continue;
                acc += gy[((n * d.cout + co) * oh_n + oh) * ow_n + ow] * w[((co * d.cin + ci) * kk + kh) * kk + kw];
              }
          gx[((n * d.cin + ci) * d.height + ih) * d.width + iw] = acc;
        }
}

void conv2d_backward_weight(const Conv2dDims& d, In x, In gy, Out gw, Out gb) {
  const std::size_t oh_n = d.out_height(), ow_n = d.out_width(), kk = d.kernel;
  for (std::size_t co = 0; co < d.cout; ++co) {
    for (std::size_t ci = 0; ci < d.cin; ++ci)
      for (std::size_t kh = 0; kh < kk; ++kh)
        for (std::size_t kw = 0; kw < kk; ++kw) {
          double acc = 0.0;
          for (std::size_t n = 0; n < d.batch; ++n)
            for (std::size_t oh = 0; oh < oh_n; ++oh)
              for (std::size_t ow = 0; ow < ow_n; ++ow) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * d.stride + kh) - static_cast<std::ptrdiff_t>(d.pad);
                const auto iw = static_cast<std::ptrdiff_t>(ow * d.stride + kw) - static_cast<std::ptrdiff_t>(d.pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(d.height) ||
                    iw >= static_cast<std::ptrdiff_t>(d.width))
                  continue;
                acc += gy[((n * d.cout + co) * oh_n + oh) * ow_n + ow] *
                       x[((n * d.cin + ci) * d.height + ih) * d.width + iw];
              }
          gw[((co * d.cin + ci) * kk + kh) * kk + kw] = acc;
        }
    if (!gb.empty()) {
      double acc = 0.0;
      for (std::size_t n = 0; n < d.batch; ++n)
        for (std::size_t p = 0; p < oh_n * ow_n; ++p) acc += gy[(n * d.cout + co) * oh_n * ow_n + p];
      gb[co] = acc;
    }
  }
}

namespace {
inline bool inside(std::ptrdiff_t v, std::size_t n) { return v >= 0 && v < static_cast<std::ptrdiff_t>(n); }
}  // namespace

void conv3d_forward(const Conv3dDims& d, In x, In w, In b, Out y) {
  const std::size_t hw = d.height * d.width;
  for (std::size_t t = 0; t < d.frames; ++t)
    for (std::size_t co = 0; co < d.cout; ++co)
      for (std::size_t h = 0; h < d.height; ++h)
        for (std::size_t ww = 0; ww < d.width; ++ww) {
          double acc = b.empty() ? 0.0 : b[co];
          for (std::size_t ci = 0; ci < d.cin; ++ci)
            for (std::size_t kt = 0; kt < 3; ++kt)
              for (std::size_t kh = 0; kh < 3; ++kh)
                for (std::size_t kw = 0; kw < 3; ++kw) {
                  const auto it = static_cast<std::ptrdiff_t>(t + kt) - 1;
                  const auto ih = static_cast<std::ptrdiff_t>(h + kh) - 1;
                  const auto iw = static_cast<std::ptrdiff_t>(ww + kw) - 1;
                  if (!inside(it, d.frames) || !inside(ih, d.height) || !inside(iw, d.width)) continue;
                  acc += x[(it * d.cin + ci) * hw + ih * d.width + iw] * w[(((co * d.cin + ci) * 3 + kt) * 3 + kh) * 3 + kw];
                }
          y[(t * d.cout + co) * hw + h * d.width + ww] = acc;
        }
}

void conv3d_backward_input(const Conv3dDims& d, In gy, In w, Out gx) {
  const std::size_t hw = d.height * d.width;
  for (std::size_t t = 0; t < d.frames; ++t)
    for (std::size_t ci = 0; ci < d.cin; ++ci)
      for (std::size_t h = 0; h < d.height; ++h)
        for (std::size_t ww = 0; ww < d.width; ++ww) {
          double acc = 0.0;
          for (std::size_t co = 0; co < d.cout; ++co)
            for (std::size_t kt = 0; kt < 3; ++kt)
              for (std::size_t kh = 0; kh < 3; ++kh)
                for (std::size_t kw = 0; kw < 3; ++kw) {
                  const auto ot = static_cast<std::ptrdiff_t>(t + 1) - static_cast<std::ptrdiff_t>(kt);
                  const auto oh = static_cast<std::ptrdiff_t>(h + 1) - static_cast<std::ptrdiff_t>(kh);
                  const auto ow = static_cast<std::ptrdiff_t>(ww + 1) - static_cast<std::ptrdiff_t>(kw);
                  if (!inside(ot, d.frames) || !inside(oh, d.height) || !inside(ow, d.width)) continue;
                  acc += gy[(ot * d.cout + co) * hw + oh * d.width + ow] * w[(((co * d.cin + ci) * 3 + kt) * 3 + kh) * 3 + kw];
                }
          gx[(t * d.cin + ci) * hw + h * d.width + ww] = acc;
        }
}

void conv3d_backward_weight(const Conv3dDims& d, In x, In gy, Out gw, Out gb) {
  const std::size_t hw = d.height * d.width;
  for (std::size_t co = 0; co < d.cout; ++co) {
    for (std::size_t ci = 0; ci < d.cin; ++ci)
      for (std::size_t kt = 0; kt < 3; ++kt)
        for (std::size_t kh = 0; kh < 3; ++kh)
          for (std::size_t kw = 0; kw < 3; ++kw) {
            double acc = 0.0;
            for (std::size_t t = 0; t < d.frames; ++t)
              for (std::size_t h = 0; h < d.height; ++h)
                for (std::size_t ww = 0; ww < d.width; ++ww) {
                  const auto it = static_cast<std::ptrdiff_t>(t + kt) - 1;
                  const auto ih = static_cast<std::ptrdiff_t>(h + kh) - 1;
                  const auto iw = static_cast<std::ptrdiff_t>(ww + kw) - 1;
                  if (!inside(it, d.frames) || !inside(ih, d.height) || !inside(iw, d.width)) continue;
                  acc += gy[(t * d.cout + co) * hw + h * d.width + ww] * x[(it * d.cin + ci) * hw + ih * d.width + iw];
                }
            gw[(((co * d.cin + ci) * 3 + kt) * 3 + kh) * 3 + kw] = acc;
          }
    if (!gb.empty()) {
      double acc = 0.0;
      for (std::size_t t = 0; t < d.frames; ++t)
        for (std::size_t p = 0; p < hw; ++p) acc += gy[(t * d.cout + co) * hw + p];
      gb[co] = acc;
    }
  }
}

void rdft2(std::size_t batch, std::size_t h, std::size_t w, In x, Out re, Out im) {
  const std::size_t wh = w / 2 + 1;
  std::vector<double> rr(w), ri(w), cr(h), ci(h);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < h; ++r) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((b * h + r) * w), w, rr.begin());
      std::fill(ri.begin(), ri.end(), 0.0);
      dft_inplace(rr, ri, false);
      for (std::size_t l = 0; l < wh; ++l) {
        re[(b * h + r) * wh + l] = rr[l];
        im[(b * h + r) * wh + l] = ri[l];
      }
    }
    for (std::size_t l = 0; l < wh; ++l) {
      for (std::size_t r = 0; r < h; ++r) {
        cr[r] = re[(b * h + r) * wh + l];
        ci[r] = im[(b * h + r) * wh + l];
      }
      dft_inplace(cr, ci, false);
      for (std::size_t r = 0; r < h; ++r) {
        re[(b * h + r) * wh + l] = cr[r];
        im[(b * h + r) * wh + l] = ci[r];
      }
    }
  }
}

void irdft2(std::size_t batch, std::size_t h, std::size_t w, In re, In im, Out x) {
  const std::size_t wh = w / 2 + 1;
  const double scale = 1.0 / static_cast<double>(h * w);
  std::vector<double> tr(h * wh), ti(h * wh), cr(h), ci(h), rr(w), ri(w);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t l = 0; l < wh; ++l) {
      for (std::size_t r = 0; r < h; ++r) {
        cr[r] = re[(b * h + r) * wh + l];
        ci[r] = im[(b * h + r) * wh + l];
      }
      dft_inplace(cr, ci, true);
      for (std::size_t r = 0; r < h; ++r) {
        tr[r * wh + l] = cr[r];
        ti[r * wh + l] = ci[r];
      }
    }
    for (std::size_t r = 0; r < h; ++r) {
      // Hermitian extension of the row; only the real part is kept.
      for (std::size_t l = 0; l < w; ++l) {
        if (l < wh) {
          rr[l] = tr[r * wh + l];
          ri[l] = ti[r * wh + l];
        } else {
          rr[l] = tr[r * wh + (w - l)];
          ri[l] = -ti[r * wh + (w - l)];
        }
      }
      dft_inplace(rr, ri, true);
      for (std::size_t l = 0; l < w; ++l) x[(b * h + r) * w + l] = rr[l] * scale;
    }
  }
}

void attention_forward(const AttentionDims& d, In x, In wq, In wk, In wv, Out q, Out k, Out v, Out p, Out y) {
  const std::size_t L = d.tokens;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d.key_dim));
  for (std::size_t b = 0; b < d.batch; ++b) {
    const auto xb = x.subspan(b * L * d.dim, L * d.dim);
    auto qb = q.subspan(b * L * d.key_dim, L * d.key_dim);
    auto kb = k.subspan(b * L * d.key_dim, L * d.key_dim);
    auto vb = v.subspan(b * L * d.value_dim, L * d.value_dim);
    auto pb = p.subspan(b * L * L, L * L);
    auto yb = y.subspan(b * L * d.value_dim, L * d.value_dim);
    matmul(L, d.dim, d.key_dim, xb, wq, qb);
    matmul(L, d.dim, d.key_dim, xb, wk, kb);
    matmul(L, d.dim, d.value_dim, xb, wv, vb);
    matmul_a_bt(L, d.key_dim, L, qb, kb, pb);
    for (std::size_t i = 0; i < L; ++i) {
      auto row = pb.subspan(i * L, L);
      double mx = -INFINITY;
      for (auto& s : row) {
        s *= inv_sqrt;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (auto& s : row) {
        s = std::exp(s - mx);
        z += s;
      }
      for (auto& s : row) s /= z;
    }
    matmul(L, L, d.value_dim, pb, vb, yb);
  }
}

void attention_backward(const AttentionDims& d, In x, In wq, In wk, In wv, In q, In k, In v, In p, In gy, Out gx,
                        Out gwq, Out gwk, Out gwv) {
  const std::size_t L = d.tokens;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d.key_dim));
  std::fill(gwq.begin(), gwq.end(), 0.0);
  std::fill(gwk.begin(), gwk.end(), 0.0);
  std::fill(gwv.begin(), gwv.end(), 0.0);
  std::vector<double> gv(L * d.value_dim), gp(L * L), gq(L * d.key_dim), gk(L * d.key_dim);
  std::vector<double> tmp(L * d.dim), wtmp(d.dim * std::max(d.key_dim, d.value_dim));
  for (std::size_t b = 0; b < d.batch; ++b) {
    const auto xb = x.subspan(b * L * d.dim, L * d.dim);
    const auto qb = q.subspan(b * L * d.key_dim, L * d.key_dim);
    const auto kb = k.subspan(b * L * d.key_dim, L * d.key_dim);
    const auto vb = v.subspan(b * L * d.value_dim, L * d.value_dim);
    const auto pb = p.subspan(b * L * L, L * L);
    const auto gyb = gy.subspan(b * L * d.value_dim, L * d.value_dim);
    auto gxb = gx.subspan(b * L * d.dim, L * d.dim);

    matmul_at_b(L, L, d.value_dim, pb, gyb, gv);
    matmul_a_bt(L, d.value_dim, L, gyb, vb, gp);
    for (std::size_t i = 0; i < L; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < L; ++j) s += gp[i * L + j] * pb[i * L + j];
      for (std::size_t j = 0; j < L; ++j) gp[i * L + j] = pb[i * L + j] * (gp[i * L + j] - s) * inv_sqrt;
    }
    matmul(L, L, d.key_dim, gp, kb, gq);
    matmul_at_b(L, L, d.key_dim, gp, qb, gk);

    matmul_a_bt(L, d.key_dim, d.dim, gq, wq, gxb);
    matmul_a_bt(L, d.key_dim, d.dim, gk, wk, tmp);
    for (std::size_t i = 0; i < gxb.size(); ++i) gxb[i] += tmp[i];
    matmul_a_bt(L, d.value_dim, d.dim, gv, wv, tmp);
    for (std::size_t i = 0; i < gxb.size(); ++i) gxb[i] += tmp[i];

    auto wq_part = std::span(wtmp).first(d.dim * d.key_dim);
    matmul_at_b(d.dim, L, d.key_dim, xb, gq, wq_part);
    for (std::size_t i = 0; i < gwq.size(); ++i) gwq[i] += wq_part[i];
    matmul_at_b(d.dim, L, d.key_dim, xb, gk, wq_part);
    for (std::size_t i = 0; i < gwk.size(); ++i) gwk[i] += wq_part[i];
    auto wv_part = std::span(wtmp).first(d.dim * d.value_dim);
    matmul_at_b(d.dim, L, d.value_dim, xb, gv, wv_part);
    for (std::size_t i = 0; i < gwv.size(); ++i) gwv[i] += wv_part[i];
  }
}

void scan_forward(const ScanDims& d, In x, const ScanParams& p, const ScanCache& cache, Out y) {
  for (std::size_t b = 0; b < d.batch; ++b) detail::scan_forward_one(d, b, x, p, cache, y);
}

void scan_backward(const ScanDims& d, In x, const ScanParams& p, const ScanCache& cache, In gy, Out gx,
                   const ScanGrads& g) {
  for (auto s : {g.w_delta, g.b_delta, g.w_b, g.w_c, g.a_log, g.d_skip}) std::fill(s.begin(), s.end(), 0.0);
  for (std::size_t b = 0; b < d.batch; ++b) detail::scan_backward_one(d, b, x, p, cache, gy, gx, g);
}

}  // namespace quadkit::kernels::serial
