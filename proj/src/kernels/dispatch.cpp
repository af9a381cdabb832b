#include <atomic>

#include "quadkit/kernels/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace quadkit::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel(bool enabled) { g_parallel = enabled; }
bool parallel_enabled() { return g_parallel; }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

#define QUADKIT_DISPATCH(name, params, args) \
  void name params {                         \
    if (g_parallel)                          \
      parallel::name args;                   \
    else                                     \
      serial::name args;                     \
  }

QUADKIT_DISPATCH(matmul, (std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c), (m, k, n, a, b, c))
QUADKIT_DISPATCH(matmul_at_b, (std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c), (m, k, n, a, b, c))
QUADKIT_DISPATCH(matmul_a_bt, (std::size_t m, std::size_t k, std::size_t n, In a, In b, Out c), (m, k, n, a, b, c))
QUADKIT_DISPATCH(conv2d_forward, (const Conv2dDims& d, In x, In w, In b, Out y), (d, x, w, b, y))
QUADKIT_DISPATCH(conv2d_backward_input, (const Conv2dDims& d, In gy, In w, Out gx), (d, gy, w, gx))
QUADKIT_DISPATCH(conv2d_backward_weight, (const Conv2dDims& d, In x, In gy, Out gw, Out gb), (d, x, gy, gw, gb))
QUADKIT_DISPATCH(conv3d_forward, (const Conv3dDims& d, In x, In w, In b, Out y), (d, x, w, b, y))
QUADKIT_DISPATCH(conv3d_backward_input, (const Conv3dDims& d, In gy, In w, Out gx), (d, gy, w, gx))
QUADKIT_DISPATCH(conv3d_backward_weight, (const Conv3dDims& d, In x, In gy, Out gw, Out gb), (d, x, gy, gw, gb))
QUADKIT_DISPATCH(rdft2, (std::size_t batch, std::size_t h, std::size_t w, In x, Out re, Out im),
                 (batch, h, w, x, re, im))
QUADKIT_DISPATCH(irdft2, (std::size_t batch, std::size_t h, std::size_t w, In re, In im, Out x),
                 (batch, h, w, re, im, x))
QUADKIT_DISPATCH(attention_forward,
                 (const AttentionDims& d, In x, In wq, In wk, In wv, Out q, Out k, Out v, Out p, Out y),
                 (d, x, wq, wk, wv, q, k, v, p, y))
QUADKIT_DISPATCH(attention_backward,
                 (const AttentionDims& d, In x, In wq, In wk, In wv, In q, In k, In v, In p, In gy, Out gx, Out gwq,
                  Out gwk, Out gwv),
                 (d, x, wq, wk, wv, q, k, v, p, gy, gx, gwq, gwk, gwv))
QUADKIT_DISPATCH(scan_forward, (const ScanDims& d, In x, const ScanParams& p, const ScanCache& cache, Out y),
                 (d, x, p, cache, y))
QUADKIT_DISPATCH(scan_backward,
                 (const ScanDims& d, In x, const ScanParams& p, const ScanCache& cache, In gy, Out gx,
                  const ScanGrads& g),
                 (d, x, p, cache, gy, gx, g))

#undef QUADKIT_DISPATCH

}  // namespace quadkit::kernels
