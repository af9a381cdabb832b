#include <gtest/gtest.h>

#include <omp.h>

#include <cmath>
#include <vector>

#include "quadkit/kernels/kernels.hpp"
#include "quadkit/rng.hpp"

using namespace quadkit;
namespace k = quadkit::kernels;

namespace {

std::vector<double> randv(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Runs `body` against the serial and the parallel namespace. The outputs
// must agree to rounding, and the parallel output must be bit-identical for
// one and for several threads.
template <class F>
void expect_same(std::size_t out_size, F body) {
  std::vector<double> a(out_size, -1.0), b(out_size, -2.0), c(out_size, -3.0);
  body(true, a);
  const int threads = omp_get_max_threads();
  omp_set_num_threads(4);
  body(false, b);
  omp_set_num_threads(1);
  body(false, c);
  omp_set_num_threads(threads);
  EXPECT_EQ(b, c);
  for (std::size_t i = 0; i < out_size; ++i) EXPECT_NEAR(a[i], b[i], 1e-12 * std::max(1.0, std::abs(a[i])));
}

}  // namespace

TEST(Kernels, MatmulVariants) {
  Rng rng(1);
  const std::size_t m = 7, kk = 13, n = 5;
  const auto a = randv(rng, m * kk), b = randv(rng, kk * n), at = randv(rng, kk * m), bt = randv(rng, n * kk);
  expect_same(m * n, [&](bool s, std::vector<double>& c) {
    s ? k::serial::matmul(m, kk, n, a, b, c) : k::parallel::matmul(m, kk, n, a, b, c);
  });
  expect_same(m * n, [&](bool s, std::vector<double>& c) {
    s ? k::serial::matmul_at_b(m, kk, n, at, b, c) : k::parallel::matmul_at_b(m, kk, n, at, b, c);
  });
  expect_same(m * n, [&](bool s, std::vector<double>& c) {
    s ? k::serial::matmul_a_bt(m, kk, n, a, bt, c) : k::parallel::matmul_a_bt(m, kk, n, a, bt, c);
  });
  std::vector<double> c(m * n);
  k::serial::matmul(m, kk, n, a, b, c);
  double ref = 0;
  for (std::size_t i = 0; i < kk; ++i) ref += a[2 * kk + i] * b[i * n + 3];
  EXPECT_NEAR(c[2 * n + 3], ref, 1e-12);
}

TEST(Kernels, Conv2dAllPasses) {
  Rng rng(2);
  const k::Conv2dDims d{2, 3, 9, 10, 4, 3, 2, 1};
  const std::size_t ho = d.out_height(), wo = d.out_width();
  const auto x = randv(rng, d.batch * d.cin * d.height * d.width);
  const auto w = randv(rng, d.cout * d.cin * 9), b = randv(rng, d.cout);
  const auto gy = randv(rng, d.batch * d.cout * ho * wo);
  expect_same(d.batch * d.cout * ho * wo, [&](bool s, std::vector<double>& y) {
    s ? k::serial::conv2d_forward(d, x, w, b, y) : k::parallel::conv2d_forward(d, x, w, b, y);
  });
  expect_same(x.size(), [&](bool s, std::vector<double>& gx) {
    s ? k::serial::conv2d_backward_input(d, gy, w, gx) : k::parallel::conv2d_backward_input(d, gy, w, gx);
  });
  expect_same(w.size() + b.size(), [&](bool s, std::vector<double>& out) {
    std::span<double> gw(out.data(), w.size()), gb(out.data() + w.size(), b.size());
    s ? k::serial::conv2d_backward_weight(d, x, gy, gw, gb) : k::parallel::conv2d_backward_weight(d, x, gy, gw, gb);
  });
}

TEST(Kernels, Conv3dAllPasses) {
  Rng rng(3);
  const k::Conv3dDims d{4, 2, 5, 6, 3};
  const auto x = randv(rng, d.frames * d.cin * d.height * d.width);
  const auto w = randv(rng, d.cout * d.cin * 27), b = randv(rng, d.cout);
  const auto gy = randv(rng, d.frames * d.cout * d.height * d.width);
  expect_same(gy.size(), [&](bool s, std::vector<double>& y) {
    s ? k::serial::conv3d_forward(d, x, w, b, y) : k::parallel::conv3d_forward(d, x, w, b, y);
  });
  expect_same(x.size(), [&](bool s, std::vector<double>& gx) {
    s ? k::serial::conv3d_backward_input(d, gy, w, gx) : k::parallel::conv3d_backward_input(d, gy, w, gx);
  });
  expect_same(w.size() + b.size(), [&](bool s, std::vector<double>& out) {
    std::span<double> gw(out.data(), w.size()), gb(out.data() + w.size(), b.size());
    s ? k::serial::conv3d_backward_weight(d, x, gy, gw, gb) : k::parallel::conv3d_backward_weight(d, x, gy, gw, gb);
  });
}

TEST(Kernels, RealDft2dBothDirections) {
  Rng rng(4);
  const std::size_t batch = 3, h = 6, w = 8, half = w / 2 + 1;
  const auto x = randv(rng, batch * h * w);
  const auto re = randv(rng, batch * h * half), im = randv(rng, batch * h * half);
  expect_same(2 * batch * h * half, [&](bool s, std::vector<double>& out) {
    std::span<double> r(out.data(), batch * h * half), i(out.data() + batch * h * half, batch * h * half);
    s ? k::serial::rdft2(batch, h, w, x, r, i) : k::parallel::rdft2(batch, h, w, x, r, i);
  });
  expect_same(x.size(), [&](bool s, std::vector<double>& out) {
    s ? k::serial::irdft2(batch, h, w, re, im, out) : k::parallel::irdft2(batch, h, w, re, im, out);
  });
}

TEST(Kernels, AttentionForwardBackward) {
  Rng rng(5);
  const k::AttentionDims d{3, 5, 4, 3, 4};
  const auto x = randv(rng, d.batch * d.tokens * d.dim);
  const auto wq = randv(rng, d.dim * d.key_dim), wk = randv(rng, d.dim * d.key_dim);
  const auto wv = randv(rng, d.dim * d.value_dim);
  const std::size_t nq = d.batch * d.tokens * d.key_dim, nv = d.batch * d.tokens * d.value_dim;
  const std::size_t np = d.batch * d.tokens * d.tokens;
  auto run_forward = [&](bool s, std::vector<double>& out) {
    double* o = out.data();
    std::span<double> q(o, nq), kk(o + nq, nq), v(o + 2 * nq, nv), p(o + 2 * nq + nv, np), y(o + 2 * nq + nv + np, nv);
    s ? k::serial::attention_forward(d, x, wq, wk, wv, q, kk, v, p, y)
      : k::parallel::attention_forward(d, x, wq, wk, wv, q, kk, v, p, y);
  };
  const std::size_t fwd = 2 * nq + 2 * nv + np;
  expect_same(fwd, run_forward);
  std::vector<double> cache(fwd);
  run_forward(true, cache);
  const double* c = cache.data();
  std::span<const double> q(c, nq), kk(c + nq, nq), v(c + 2 * nq, nv), p(c + 2 * nq + nv, np);
  const auto gy = randv(rng, nv);
  expect_same(x.size() + wq.size() + wk.size() + wv.size(), [&](bool s, std::vector<double>& out) {
    double* o = out.data();
    std::span<double> gx(o, x.size()), gq(o + x.size(), wq.size()), gk(o + x.size() + wq.size(), wk.size()),
        gv(o + x.size() + wq.size() + wk.size(), wv.size());
    s ? k::serial::attention_backward(d, x, wq, wk, wv, q, kk, v, p, gy, gx, gq, gk, gv)
      : k::parallel::attention_backward(d, x, wq, wk, wv, q, kk, v, p, gy, gx, gq, gk, gv);
  });
}

TEST(Kernels, SelectiveScanForwardBackward) {
  Rng rng(6);
  const k::ScanDims d{3, 11, 4, 3};
  const std::size_t blc = d.batch * d.length * d.channels, bls = d.batch * d.length * d.state;
  const auto x = randv(rng, blc);
  const auto wd = randv(rng, d.channels * d.channels, 0.3), bd = randv(rng, d.channels, 0.3);
  const auto wb = randv(rng, d.channels * d.state, 0.3), wc = randv(rng, d.channels * d.state, 0.3);
  const auto al = randv(rng, d.channels * d.state, 0.3), ds = randv(rng, d.channels);
  const k::ScanParams p{wd, bd, wb, wc, al, ds};
  const std::size_t cache_size = 2 * blc + 2 * bls + blc * d.state;
  auto make_cache = [&](std::vector<double>& buf) {
    double* o = buf.data();
    return k::ScanCache{{o, blc}, {o + blc, blc}, {o + 2 * blc, bls}, {o + 2 * blc + bls, bls},
                        {o + 2 * blc + 2 * bls, blc * d.state}};
  };
  auto run_forward = [&](bool s, std::vector<double>& out) {
    auto cache = make_cache(out);
    std::span<double> y(out.data() + cache_size, blc);
    s ? k::serial::scan_forward(d, x, p, cache, y) : k::parallel::scan_forward(d, x, p, cache, y);
  };
  expect_same(cache_size + blc, run_forward);
  std::vector<double> buf(cache_size + blc);
  run_forward(true, buf);
  const auto cache = make_cache(buf);
  const auto gy = randv(rng, blc);
  const std::size_t grads = blc + wd.size() + bd.size() + wb.size() + wc.size() + al.size() + ds.size();
  expect_same(grads, [&](bool s, std::vector<double>& out) {
    double* o = out.data();
    std::span<double> gx(o, blc);
    o += blc;
    k::ScanGrads g{{o, wd.size()}, {o + wd.size(), bd.size()}, {}, {}, {}, {}};
    o += wd.size() + bd.size();
    g.w_b = {o, wb.size()};
    o += wb.size();
    g.w_c = {o, wc.size()};
    o += wc.size();
    g.a_log = {o, al.size()};
    o += al.size();
    g.d_skip = {o, ds.size()};
    s ? k::serial::scan_backward(d, x, p, cache, gy, gx, g) : k::parallel::scan_backward(d, x, p, cache, gy, gx, g);
  });
}

TEST(Kernels, DispatchToggle) {
  const bool before = k::parallel_enabled();
  k::set_parallel(false);
  EXPECT_FALSE(k::parallel_enabled());
  k::set_parallel(true);
  EXPECT_TRUE(k::parallel_enabled());
  EXPECT_GE(k::max_threads(), 1);
  k::set_parallel(before);
}
