#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "quadkit/fft.hpp"
#include "quadkit/rng.hpp"
#include "quadkit/tensor.hpp"
#include "quadkit/tensor_io.hpp"

using namespace quadkit;
using cd = std::complex<double>;

namespace {

std::vector<cd> direct_dft(const std::vector<cd>& x, double sign = -1.0) {
  const std::size_t n = x.size();
  std::vector<cd> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t t = 0; t < n; ++t)
      out[k] += x[t] * std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k * t % n) /
                                           static_cast<double>(n));
  return out;
}

ComplexTensor random_signal(Rng& rng, std::size_t n) {
  ComplexTensor s({n});
  for (std::size_t i = 0; i < n; ++i) {
    s.re[i] = rng.normal();
    s.im[i] = rng.normal();
  }
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("quadkit_test_" + name);
}

}  // namespace

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  t.at({1, 2, 3}) = 5.0;
  EXPECT_EQ(t[23], 5.0);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), std::invalid_argument);
  EXPECT_THROW(t.reshaped({5, 5}), std::invalid_argument);
  EXPECT_EQ(t.reshaped({6, 4}).dim(0), 6u);
}

TEST(Dft, ImpulseAndConstant) {
  ComplexTensor impulse({4});
  impulse.re[0] = 1.0;
  const auto s = dft_1d(impulse);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(s.re[k], 1.0, 1e-15);
    EXPECT_NEAR(s.im[k], 0.0, 1e-15);
  }
  ComplexTensor c({4});
  for (auto& v : c.re) v = 2.5;
  const auto sc = dft_1d(c);
  EXPECT_NEAR(sc.re[0], 10.0, 1e-12);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_NEAR(std::hypot(sc.re[k], sc.im[k]), 0.0, 1e-12);
  const auto back = idft_1d(sc);
  for (double v : back.re) EXPECT_NEAR(v, 2.5, 1e-12);
  ComplexTensor ones({4});
  for (auto& v : ones.re) v = 1.0;
  const auto d = idft_1d(ones);
  EXPECT_NEAR(d.re[0], 1.0, 1e-15);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_NEAR(d.re[k], 0.0, 1e-15);
}

TEST(Dft, EmptySignalRejected) {
  EXPECT_THROW(dft_1d(ComplexTensor({0})), std::invalid_argument);
  EXPECT_THROW(idft_1d(ComplexTensor({0})), std::invalid_argument);
}

TEST(Dft, MatchesDirectSummationForAllLengths) {
  Rng rng(11);
  for (std::size_t n = 1; n <= 64; ++n) {
    const auto x = random_signal(rng, n);
    std::vector<cd> xc(n);
    for (std::size_t i = 0; i < n; ++i) xc[i] = {x.re[i], x.im[i]};
    const auto oracle = direct_dft(xc);
    const auto got = dft_1d(x);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_NEAR(got.re[k], oracle[k].real(), 1e-9) << "n=" << n;
      EXPECT_NEAR(got.im[k], oracle[k].imag(), 1e-9) << "n=" << n;
    }
  }
}

TEST(Dft, ParsevalLinearityAndRoundTrip) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(64);
    const auto x = random_signal(rng, n);
    const auto y = random_signal(rng, n);
    const auto fx = dft_1d(x);
    double ex = 0, ef = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ex += x.re[i] * x.re[i] + x.im[i] * x.im[i];
      ef += fx.re[i] * fx.re[i] + fx.im[i] * fx.im[i];
    }
    EXPECT_NEAR(ex, ef / static_cast<double>(n), 1e-9 * ex);

    const double a = rng.normal(), b = rng.normal();
    ComplexTensor mix({n});
    for (std::size_t i = 0; i < n; ++i) {
      mix.re[i] = a * x.re[i] + b * y.re[i];
      mix.im[i] = a * x.im[i] + b * y.im[i];
    }
    const auto fm = dft_1d(mix);
    const auto fy = dft_1d(y);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_NEAR(fm.re[k], a * fx.re[k] + b * fy.re[k], 1e-9);
      EXPECT_NEAR(fm.im[k], a * fx.im[k] + b * fy.im[k], 1e-9);
    }
    const auto back = idft_1d(fx);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(back.re[i], x.re[i], 1e-9);
      EXPECT_NEAR(back.im[i], x.im[i], 1e-9);
    }
  }
}

TEST(Rdft2d, DeltaAndZeros) {
  const auto z = rdft_2d(Tensor({4, 4}));
  for (double v : z.re) EXPECT_EQ(v, 0.0);
  const auto d = rdft_2d(Tensor({2, 2}, {1, 0, 0, 0}));
  EXPECT_EQ(d.shape, (Shape{2, 2}));
  for (std::size_t i = 0; i < d.numel(); ++i) {
    EXPECT_NEAR(d.re[i], 1.0, 1e-15);
    EXPECT_NEAR(d.im[i], 0.0, 1e-15);
  }
  EXPECT_THROW(rdft_2d(Tensor({4, 5})), std::invalid_argument);
}

TEST(Rdft2d, MatchesFullComplexOracle) {
  Rng rng(13);
  const std::size_t h = 4, w = 8;
  const Tensor x = rng.normal_tensor({h, w});
  const auto got = rdft_2d(x);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v <= w / 2; ++v) {
      cd acc = 0;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
          acc += x[r * w + c] * std::polar(1.0, -2.0 * std::numbers::pi *
                                                    (static_cast<double>(u * r) / h + static_cast<double>(v * c) / w));
      EXPECT_NEAR(got.re[u * (w / 2 + 1) + v], acc.real(), 1e-9);
      EXPECT_NEAR(got.im[u * (w / 2 + 1) + v], acc.imag(), 1e-9);
    }
}

TEST(Rdft2d, RoundTripBatched) {
  Rng rng(14);
  for (std::size_t h : {2, 4, 8, 16})
    for (std::size_t w : {2, 4, 8, 16}) {
      const Tensor x = rng.normal_tensor({3, h, w});
      EXPECT_LE(max_abs_diff(irdft_2d(rdft_2d(x), w), x), 1e-9);
    }
  const Tensor odd = rng.normal_tensor({3, 6});
  EXPECT_LE(max_abs_diff(irdft_2d(rdft_2d(odd), 6), odd), 1e-9);
}

TEST(Rng, ReproducibleStreams) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 10000; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, NormalMoments) {
  Rng rng(5);
  const std::size_t n = 200000;
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(TensorIo, BitExactRoundTrip) {
  Rng rng(15);
  Tensor t = rng.normal_tensor({2, 3, 4});
  t[0] = -0.0;
  t[1] = 1e-310;
  const auto path = temp_file("roundtrip.qtn");
  write_tensor(path, t);
  const Tensor r = read_tensor(path);
  EXPECT_EQ(r.shape(), t.shape());
  EXPECT_EQ(std::memcmp(r.data().data(), t.data().data(), t.numel() * sizeof(double)), 0);
  std::filesystem::remove(path);
}

TEST(TensorIo, LayoutIsDocumented) {
  std::ostringstream os;
  write_tensor(os, Tensor({2}, {1.0, -2.0}));
  const std::string s = os.str();
  ASSERT_EQ(s.size(), 6u + 1 + 1 + 8 + 16);
  EXPECT_EQ(s.substr(0, 6), "QTNSR1");
  EXPECT_EQ(static_cast<unsigned char>(s[6]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(s[7]), 1);
  EXPECT_EQ(static_cast<unsigned char>(s[8]), 2);
  double v;
  std::memcpy(&v, s.data() + 24, 8);
  EXPECT_EQ(v, -2.0);
}

TEST(TensorIo, RejectsCorruptFiles) {
  std::ostringstream os;
  write_tensor(os, Tensor({3}, {1, 2, 3}));
  std::string good = os.str();

  std::string bad = good;
  bad[0] = 'X';
  std::istringstream is_bad(bad);
  try {
    read_tensor(is_bad);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }

  std::istringstream is_short(good.substr(0, good.size() - 3));
  try {
    read_tensor(is_short);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("truncated payload"), std::string::npos);
  }

  std::string deep = good;
  deep[7] = 9;
  std::istringstream is_deep(deep);
  EXPECT_THROW(read_tensor(is_deep), std::exception);
}

TEST(Pgm, LosslessForEightBitData) {
  GrayImage img{7, 5, {}};
  for (std::size_t i = 0; i < 35; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 7));
  const auto path = temp_file("img.pgm");
  write_pgm(path, img);
  const auto back = read_pgm(path);
  EXPECT_EQ(back.width, 7u);
  EXPECT_EQ(back.height, 5u);
  EXPECT_EQ(back.pixels, img.pixels);
  const auto again = to_gray(from_gray(back));
  EXPECT_EQ(again.pixels, img.pixels);
  std::filesystem::remove(path);
}
