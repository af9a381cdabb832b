#pragma once

// Compute kernels behind the differentiable ops. Every kernel has a plain
// serial reference in `kernels::serial` and an OpenMP version in
// `kernels::parallel` with the same signature. The unqualified functions in
// `kernels` dispatch to the parallel versions unless disabled at runtime.
//
// Each output element is produced by a single thread in a fixed summation
// order, so results do not depend on the thread count.

#include <cstddef>
#include <span>

namespace quadkit::kernels {

using In = std::span<const double>;
using Out = std::span<double>;

struct Conv2dDims {
  std::size_t batch, cin, height, width, cout, kernel, stride, pad;
  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

/// 3x3x3 convolution, stride 1, zero padding 1, over (frames, H, W) with
/// layout (frames, channels, H, W).
struct Conv3dDims {
  std::size_t frames, cin, height, width, cout;
};

/// Single-head attention on a batch of token sets X: (batch, tokens, dim).
struct AttentionDims {
  std::size_t batch, tokens, dim, key_dim, value_dim;
};

/// Selective scan over (batch, length, channels) with state size `state`.
struct ScanDims {
  std::size_t batch, length, channels, state;
};

/// Buffers the scan forward pass keeps for the backward pass.
struct ScanCache {
  Out delta;   // (batch, length, channels), after softplus
  Out pre;     // (batch, length, channels), softplus argument
  Out bmat;    // (batch, length, state)
  Out cmat;    // (batch, length, state)
  Out hidden;  // (batch, length, channels, state)
};

struct ScanParams {
  In w_delta;  // (channels, channels)
  In b_delta;  // (channels)
  In w_b;      // (channels, state)
  In w_c;      // (channels, state)
  In a_log;    // (channels, state); A = -exp(a_log)
  In d_skip;   // (channels)
};

struct ScanGrads {
  Out w_delta, b_delta, w_b, w_c, a_log, d_skip;
};

#define QUADKIT_KERNEL_DECLS                                                                       \
  void matmul(std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c);                    \
  void matmul_at_b(std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c);               \
  void matmul_a_bt(std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c);               \
  void conv2d_forward(const Conv2dDims& d, In x, In w, In b, Out y);                              \
  void conv2d_backward_input(const Conv2dDims& d, In gy, In w, Out gx);                           \
  void conv2d_backward_weight(const Conv2dDims& d, In x, In gy, Out gw, Out gb);                  \
  void conv3d_forward(const Conv3dDims& d, In x, In w, In b, Out y);                              \
  void conv3d_backward_input(const Conv3dDims& d, In gy, In w, Out gx);                           \
  void conv3d_backward_weight(const Conv3dDims& d, In x, In gy, Out gw, Out gb);                  \
  void rdft2(std::size_t batch, std::size_t h, std::size_t w, In x, Out re, Out im);              \
  void irdft2(std::size_t batch, std::size_t h, std::size_t w, In re, In im, Out x);              \
  void attention_forward(const AttentionDims& d, In x, In wq, In wk, In wv, Out q, Out k, Out v,  \
                         Out p, Out y);                                                            \
  void attention_backward(const AttentionDims& d, In x, In wq, In wk, In wv, In q, In k, In v,    \
                          In p, In gy, Out gx, Out gwq, Out gwk, Out gwv);                         \
  void scan_forward(const ScanDims& d, In x, const ScanParams& p, const ScanCache& cache, Out y);  \
  void scan_backward(const ScanDims& d, In x, const ScanParams& p, const ScanCache& cache, In gy, \
                     Out gx, const ScanGrads& g);

// Gradient outputs (gx, gw, gb, ...) are overwritten, not accumulated.
// matmul:       c(m,n) = a(m,k) b(k,n)
// matmul_at_b:  c(m,n) = a(k,m)^T b(k,n)
// matmul_a_bt:  c(m,n) = a(m,k) b(n,k)^T
namespace serial {
QUADKIT_KERNEL_DECLS
}
namespace parallel {
QUADKIT_KERNEL_DECLS
}
QUADKIT_KERNEL_DECLS

#undef QUADKIT_KERNEL_DECLS

/// Route dispatching kernels to the serial references (false) or the OpenMP
/// versions (true, default).
void set_parallel(bool enabled);
bool parallel_enabled();
int max_threads();

}  // namespace quadkit::kernels
