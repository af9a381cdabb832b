#include "quadkit/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace quadkit {

namespace {

constexpr char kMagic[6] = {'Q', 'T', 'N', 'S', 'R', '1'};
constexpr std::uint8_t kDtypeF64 = 0x01;

void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 8);
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

bool read_exact(std::istream& is, char* dst, std::size_t n) {
  is.read(dst, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  if (t.rank() == 0 || t.rank() > kMaxTensorRank)
    throw std::invalid_argument("QTNSR1 rank must be in 1..8, got " + std::to_string(t.rank()));
  os.write(kMagic, 6);
  os.put(static_cast<char>(kDtypeF64));
  os.put(static_cast<char>(t.rank()));
  for (auto e : t.shape()) put_u64(os, e);
  for (double v : t.vec()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw std::runtime_error("failed writing tensor");
}

Tensor read_tensor(std::istream& is) {
  char magic[6];
  if (!read_exact(is, magic, 6) || std::memcmp(magic, kMagic, 6) != 0) throw std::runtime_error("bad magic");
  char hdr[2];
  if (!read_exact(is, hdr, 2)) throw std::runtime_error("truncated header");
  if (static_cast<std::uint8_t>(hdr[0]) != kDtypeF64)
    throw std::runtime_error("unsupported dtype code " + std::to_string(static_cast<unsigned char>(hdr[0])));
  const std::size_t rank = static_cast<unsigned char>(hdr[1]);
  if (rank == 0 || rank > kMaxTensorRank) throw std::runtime_error("rank " + std::to_string(rank) + " exceeds limit 8");
  std::vector<unsigned char> ext(rank * 8);
  if (!read_exact(is, reinterpret_cast<char*>(ext.data()), ext.size())) throw std::runtime_error("truncated header");
  Shape shape(rank);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_u64(ext.data() + 8 * i);
    if (shape[i] == 0) throw std::runtime_error("zero extent in tensor header");
    if (count > (std::uint64_t{1} << 40) / shape[i]) throw std::runtime_error("tensor header extents too large");
    count *= shape[i];
  }
  std::vector<unsigned char> payload(count * 8);
  if (!read_exact(is, reinterpret_cast<char*>(payload.data()), payload.size()))
    throw std::runtime_error("truncated payload");
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<double>(get_u64(payload.data() + 8 * i));
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_tensor(is);
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  if (img.pixels.size() != img.width * img.height) throw std::invalid_argument("pixel count mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

namespace {
// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}
}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  if (pgm_token(is) != "P5") throw std::runtime_error("not a binary PGM (P5) file");
  GrayImage img;
  try {
    img.width = std::stoul(pgm_token(is));
    img.height = std::stoul(pgm_token(is));
    if (std::stoul(pgm_token(is)) != 255) throw std::runtime_error("only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw std::runtime_error("malformed PGM header");
  }
  img.pixels.resize(img.width * img.height);
  if (!read_exact(is, reinterpret_cast<char*>(img.pixels.data()), img.pixels.size()))
    throw std::runtime_error("truncated payload");
  return img;
}

GrayImage to_gray(const Tensor& image) {
  if (image.rank() != 2) throw std::invalid_argument("to_gray expects an (H, W) tensor");
  GrayImage img{image.dim(1), image.dim(0), {}};
  img.pixels.resize(image.numel());
  for (std::size_t i = 0; i < image.numel(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  return img;
}

Tensor from_gray(const GrayImage& img) {
  Tensor t({img.height, img.width});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = img.pixels[i] / 255.0;
  return t;
}

}  // namespace quadkit
