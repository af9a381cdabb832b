#pragma once

// Per-sequence selective scan. The time recurrence is sequential; both the
// serial and OpenMP kernels call these, differing only in how batch items
// are distributed and how parameter gradients are reduced.

#include <cmath>
#include <vector>

#include "quadkit/kernels/kernels.hpp"

namespace quadkit::kernels::detail {

inline double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline void scan_forward_one(const ScanDims& d, std::size_t b, In x, const ScanParams& p, const ScanCache& c, Out y) {
  const std::size_t L = d.length, C = d.channels, S = d.state;
  const std::size_t base = b * L;
  std::vector<double> h(C * S, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    const auto xt = x.subspan((base + t) * C, C);
    for (std::size_t ch = 0; ch < C; ++ch) {
      double z = p.b_delta[ch];
      for (std::size_t j = 0; j < C; ++j) z += xt[j] * p.w_delta[j * C + ch];
      c.pre[(base + t) * C + ch] = z;
      c.delta[(base + t) * C + ch] = softplus(z);
    }
    for (std::size_t s = 0; s < S; ++s) {
      double bs = 0.0, cs = 0.0;
      for (std::size_t j = 0; j < C; ++j) {
        bs += xt[j] * p.w_b[j * S + s];
        cs += xt[j] * p.w_c[j * S + s];
      }
      c.bmat[(base + t) * S + s] = bs;
      c.cmat[(base + t) * S + s] = cs;
    }
    for (std::size_t ch = 0; ch < C; ++ch) {
      const double delta = c.delta[(base + t) * C + ch];
      double acc = p.d_skip[ch] * xt[ch];
      for (std::size_t s = 0; s < S; ++s) {
        const double a = -std::exp(p.a_log[ch * S + s]);
        double& hs = h[ch * S + s];
        hs = std::exp(delta * a) * hs + delta * c.bmat[(base + t) * S + s] * xt[ch];
        c.hidden[((base + t) * C + ch) * S + s] = hs;
        acc += c.cmat[(base + t) * S + s] * hs;
      }
      y[(base + t) * C + ch] = acc;
    }
  }
}

/// Accumulates parameter gradients into `g`; writes gx for this sequence.
inline void scan_backward_one(const ScanDims& d, std::size_t b, In x, const ScanParams& p, const ScanCache& c, In gy,
                              Out gx, const ScanGrads& g) {
  const std::size_t L = d.length, C = d.channels, S = d.state;
  const std::size_t base = b * L;
  std::vector<double> gh(C * S, 0.0), gdelta(C), gbm(S), gcm(S);
  for (std::size_t t = L; t-- > 0;) {
    const auto xt = x.subspan((base + t) * C, C);
    const auto gyt = gy.subspan((base + t) * C, C);
    auto gxt = gx.subspan((base + t) * C, C);
    std::fill(gcm.begin(), gcm.end(), 0.0);
    std::fill(gbm.begin(), gbm.end(), 0.0);
    for (std::size_t ch = 0; ch < C; ++ch) {
      gxt[ch] = gyt[ch] * p.d_skip[ch];
      g.d_skip[ch] += gyt[ch] * xt[ch];
    }
    for (std::size_t ch = 0; ch < C; ++ch) {
      const double delta = c.delta[(base + t) * C + ch];
      double gd = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        const double hs = c.hidden[((base + t) * C + ch) * S + s];
        const double h_prev = t > 0 ? c.hidden[((base + t - 1) * C + ch) * S + s] : 0.0;
        const double a = -std::exp(p.a_log[ch * S + s]);
        const double decay = std::exp(delta * a);
        const double bs = c.bmat[(base + t) * S + s];
        gcm[s] += gyt[ch] * hs;
        double& ghs = gh[ch * S + s];
        ghs += gyt[ch] * c.cmat[(base + t) * S + s];
        gd += ghs * (a * decay * h_prev + bs * xt[ch]);
        // dA/da_log = a
        g.a_log[ch * S + s] += ghs * delta * decay * h_prev * a;
        gbm[s] += ghs * delta * xt[ch];
        gxt[ch] += ghs * delta * bs;
        ghs *= decay;
      }
      gdelta[ch] = gd * sigmoid(c.pre[(base + t) * C + ch]);
    }
    for (std::size_t j = 0; j < C; ++j) {
      double acc = 0.0;
      for (std::size_t ch = 0; ch < C; ++ch) {
        g.w_delta[j * C + ch] += xt[j] * gdelta[ch];
        acc += gdelta[ch] * p.w_delta[j * C + ch];
      }
      for (std::size_t s = 0; s < S; ++s) {
        g.w_b[j * S + s] += xt[j] * gbm[s];
        g.w_c[j * S + s] += xt[j] * gcm[s];
        acc += gbm[s] * p.w_b[j * S + s] + gcm[s] * p.w_c[j * S + s];
      }
      gxt[j] += acc;
    }
    for (std::size_t ch = 0; ch < C; ++ch) g.b_delta[ch] += gdelta[ch];
  }
}

}  // namespace quadkit::kernels::detail
