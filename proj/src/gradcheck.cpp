#include "quadkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "quadkit/rng.hpp"

namespace quadkit::ad {

namespace {
double eval(const LossBuilder& loss) {
  Tape tape(false);
  return loss(tape).value()[0];
}
}  // namespace

GradCheckResult gradcheck(const LossBuilder& loss, const std::vector<Parameter*>& leaves,
                          const GradCheckOptions& opt) {
  for (Parameter* p : leaves) p->zero_grad();
  {
    Tape tape;
    Var out = loss(tape);
    tape.backward(out);
  }
  Rng rng(opt.seed);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  GradCheckResult res;
  for (Parameter* p : leaves) {
    const std::size_t n = p->value.numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > opt.max_coords) {
      for (std::size_t i = 0; i < opt.max_coords; ++i) std::swap(coords[i], coords[i + rng.below(n - i)]);
      coords.resize(opt.max_coords);
    }
    for (std::size_t i : coords) {
      const double orig = p->value[i];
      p->value[i] = orig + opt.eps;
      const double up = eval(loss);
      p->value[i] = orig - opt.eps;
      const double down = eval(loss);
      p->value[i] = orig;
      const double num = (up - down) / (2.0 * opt.eps);
      const double ana = p->grad[i];
      diff2 += (ana - num) * (ana - num);
      a2 += ana * ana;
      n2 += num * num;
    }
    res.coords += coords.size();
  }
  res.rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
  return res;
}

}  // namespace quadkit::ad
