#include <benchmark/benchmark.h>

#include <vector>

#include "quadkit/kernels/kernels.hpp"
#include "quadkit/rng.hpp"

using namespace quadkit;
namespace k = quadkit::kernels;

namespace {

std::vector<double> randv(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = 0.3 * rng.normal();
  return v;
}

// Arg 0 selects the serial reference, 1 the OpenMP version.
bool serial(const benchmark::State& st) { return st.range(0) == 0; }

void BM_Matmul(benchmark::State& st) {
  const std::size_t n = static_cast<std::size_t>(st.range(1));
  const auto a = randv(n * n, 1), b = randv(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : st) {
    serial(st) ? k::serial::matmul(n, n, n, a, b, c) : k::parallel::matmul(n, n, n, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(n * n * n));
}
BENCHMARK(BM_Matmul)->ArgsProduct({{0, 1}, {64, 256}});

void BM_Conv2dForward(benchmark::State& st) {
  const k::Conv2dDims d{8, 16, 32, 64, 16, 3, 1, 1};
  const auto x = randv(d.batch * d.cin * d.height * d.width, 3), w = randv(d.cout * d.cin * 9, 4);
  const auto b = randv(d.cout, 5);
  std::vector<double> y(d.batch * d.cout * d.out_height() * d.out_width());
  for (auto _ : st) {
    serial(st) ? k::serial::conv2d_forward(d, x, w, b, y) : k::parallel::conv2d_forward(d, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Conv2dForward)->Arg(0)->Arg(1);

void BM_Conv2dBackwardWeight(benchmark::State& st) {
  const k::Conv2dDims d{8, 16, 32, 64, 16, 3, 1, 1};
  const auto x = randv(d.batch * d.cin * d.height * d.width, 6);
  const auto gy = randv(d.batch * d.cout * d.out_height() * d.out_width(), 7);
  std::vector<double> gw(d.cout * d.cin * 9), gb(d.cout);
  for (auto _ : st) {
    serial(st) ? k::serial::conv2d_backward_weight(d, x, gy, gw, gb)
               : k::parallel::conv2d_backward_weight(d, x, gy, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
}
BENCHMARK(BM_Conv2dBackwardWeight)->Arg(0)->Arg(1);

void BM_Conv3dForward(benchmark::State& st) {
  const k::Conv3dDims d{8, 32, 8, 16, 16};
  const auto x = randv(d.frames * d.cin * d.height * d.width, 8), w = randv(d.cout * d.cin * 27, 9);
  const auto b = randv(d.cout, 10);
  std::vector<double> y(d.frames * d.cout * d.height * d.width);
  for (auto _ : st) {
    serial(st) ? k::serial::conv3d_forward(d, x, w, b, y) : k::parallel::conv3d_forward(d, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Conv3dForward)->Arg(0)->Arg(1);

void BM_Rdft2(benchmark::State& st) {
  const std::size_t batch = 64, h = 32, w = 64, half = w / 2 + 1;
  const auto x = randv(batch * h * w, 11);
  std::vector<double> re(batch * h * half), im(batch * h * half);
  for (auto _ : st) {
    serial(st) ? k::serial::rdft2(batch, h, w, x, re, im) : k::parallel::rdft2(batch, h, w, x, re, im);
    benchmark::DoNotOptimize(re.data());
  }
}
BENCHMARK(BM_Rdft2)->Arg(0)->Arg(1);

void BM_Attention(benchmark::State& st) {
  const k::AttentionDims d{128, 8, 16, 8, 16};
  const auto x = randv(d.batch * d.tokens * d.dim, 12), wq = randv(d.dim * d.key_dim, 13);
  const auto wk = randv(d.dim * d.key_dim, 14), wv = randv(d.dim * d.value_dim, 15);
  std::vector<double> q(d.batch * d.tokens * d.key_dim), kk(q.size()), v(d.batch * d.tokens * d.value_dim);
  std::vector<double> p(d.batch * d.tokens * d.tokens), y(v.size());
  for (auto _ : st) {
    serial(st) ? k::serial::attention_forward(d, x, wq, wk, wv, q, kk, v, p, y)
               : k::parallel::attention_forward(d, x, wq, wk, wv, q, kk, v, p, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Attention)->Arg(0)->Arg(1);

void BM_ScanForward(benchmark::State& st) {
  const k::ScanDims d{32, 128, 8, 4};
  const std::size_t blc = d.batch * d.length * d.channels, bls = d.batch * d.length * d.state;
  const auto x = randv(blc, 16);
  const auto wd = randv(64, 17), bd = randv(8, 18), wb = randv(32, 19), wc = randv(32, 20), al = randv(32, 21);
  const auto ds = randv(8, 22);
  const k::ScanParams p{wd, bd, wb, wc, al, ds};
  std::vector<double> delta(blc), pre(blc), bm(bls), cm(bls), hid(blc * d.state), y(blc);
  const k::ScanCache cache{delta, pre, bm, cm, hid};
  for (auto _ : st) {
    serial(st) ? k::serial::scan_forward(d, x, p, cache, y) : k::parallel::scan_forward(d, x, p, cache, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_ScanForward)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
