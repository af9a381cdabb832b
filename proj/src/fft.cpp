#include "quadkit/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "quadkit/kernels/kernels.hpp"

namespace quadkit {

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

namespace {

// cos/sin of 2 pi j / n for j in [0, n); exact at the quarter points.
void twiddles(std::size_t n, std::vector<double>& c, std::vector<double>& s) {
  c.resize(n);
  s.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (4 * j % n == 0) {
      static constexpr double qc[] = {1.0, 0.0, -1.0, 0.0};
      static constexpr double qs[] = {0.0, 1.0, 0.0, -1.0};
      const std::size_t q = 4 * j / n;
      c[j] = qc[q];
      s[j] = qs[q];
    } else {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      c[j] = std::cos(a);
      s[j] = std::sin(a);
    }
  }
}

void radix2(std::span<double> re, std::span<double> im, bool inverse) {
  const std::size_t n = re.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  std::vector<double> c, s;
  twiddles(n, c, s);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const double wr = c[k * step];
        const double wi = sign * s[k * step];
        const std::size_t a = i + k, b = i + k + half;
        const double tr = re[b] * wr - im[b] * wi;
        const double ti = re[b] * wi + im[b] * wr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
      }
    }
  }
}

void direct(std::span<double> re, std::span<double> im, bool inverse) {
  const std::size_t n = re.size();
  std::vector<double> c, s;
  twiddles(n, c, s);
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<double> out_re(n), out_im(n);
  for (std::size_t k = 0; k < n; ++k) {
    double ar = 0.0, ai = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t j = (k * t) % n;
      const double wr = c[j], wi = sign * s[j];
      ar += re[t] * wr - im[t] * wi;
      ai += re[t] * wi + im[t] * wr;
    }
    out_re[k] = ar;
    out_im[k] = ai;
  }
  std::copy(out_re.begin(), out_re.end(), re.begin());
  std::copy(out_im.begin(), out_im.end(), im.begin());
}

void require_rank1(const ComplexTensor& t) {
  if (t.shape.size() != 1) throw std::invalid_argument("expected a rank-1 signal");
  if (t.numel() == 0) throw std::invalid_argument("empty signal");
}

}  // namespace

void dft_inplace(std::span<double> re, std::span<double> im, bool inverse) {
  if (re.size() != im.size()) throw std::invalid_argument("re/im length mismatch");
  if (re.empty()) throw std::invalid_argument("empty signal");
  if (re.size() == 1) return;
  if (is_power_of_two(re.size()))
    radix2(re, im, inverse);
  else
    direct(re, im, inverse);
}

ComplexTensor dft_1d(const ComplexTensor& signal) {
  if (signal.numel() == 0) throw std::invalid_argument("empty signal");
  require_rank1(signal);
  ComplexTensor out = signal;
  dft_inplace(out.re, out.im, false);
  return out;
}

ComplexTensor idft_1d(const ComplexTensor& spectrum) {
  if (spectrum.numel() == 0) throw std::invalid_argument("empty signal");
  require_rank1(spectrum);
  ComplexTensor out = spectrum;
  dft_inplace(out.re, out.im, true);
  const double inv = 1.0 / static_cast<double>(out.numel());
  for (auto& v : out.re) v *= inv;
  for (auto& v : out.im) v *= inv;
  return out;
}

ComplexTensor rdft_2d(const Tensor& x) {
  if (x.rank() < 2) throw std::invalid_argument("rdft_2d needs rank >= 2");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  if (w % 2 != 0) throw std::invalid_argument("spectral width must be even");
  const std::size_t batch = x.numel() / (h * w);
  Shape out_shape = x.shape();
  out_shape.back() = w / 2 + 1;
  ComplexTensor out(out_shape);
  kernels::rdft2(batch, h, w, x.data(), out.re, out.im);
  return out;
}

Tensor irdft_2d(const ComplexTensor& spectrum, std::size_t width) {
  if (spectrum.shape.size() < 2) throw std::invalid_argument("irdft_2d needs rank >= 2");
  if (width % 2 != 0 || width == 0) throw std::invalid_argument("spectral width must be even");
  if (spectrum.shape.back() != width / 2 + 1)
    throw std::invalid_argument("half-spectrum extent does not match width");
  const std::size_t h = spectrum.shape[spectrum.shape.size() - 2];
  const std::size_t batch = spectrum.numel() / (h * (width / 2 + 1));
  Shape out_shape = spectrum.shape;
  out_shape.back() = width;
  Tensor out(out_shape);
  kernels::irdft2(batch, h, width, spectrum.re, spectrum.im, out.data());
  return out;
}

}  // namespace quadkit
