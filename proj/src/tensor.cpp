#include "quadkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace quadkit {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto e : shape_)
    if (e == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_str(shape_));
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_)
    if (e == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_str(shape_));
  if (shape_numel(shape_) != data_.size())
    throw std::invalid_argument("data length " + std::to_string(data_.size()) + " does not match shape " +
                                shape_str(shape_));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) throw std::out_of_range("index rank mismatch");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    if (i >= shape_[axis]) throw std::out_of_range("index out of range");
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
double Tensor::at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel())
    throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ComplexTensor ComplexTensor::from_real(const Tensor& t) {
  ComplexTensor c(t.shape());
  c.re = t.vec();
  return c;
}

namespace {
void require_same(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same(a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same(a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(const Tensor& a, double s) {
  Tensor out = a;
  for (auto& v : out.vec()) v *= s;
  return out;
}

Tensor& operator+=(Tensor& a, const Tensor& b) {
  require_same(a, b);
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
  return a;
}

double sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.vec()) s += v;
  return s;
}

double mean(const Tensor& t) { return sum(t) / static_cast<double>(t.numel()); }

double dot(const Tensor& a, const Tensor& b) {
  require_same(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const Tensor& t) { return std::sqrt(dot(t, t)); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same(a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace quadkit
