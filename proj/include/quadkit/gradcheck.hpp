#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "quadkit/autograd.hpp"

namespace quadkit::ad {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates probed per leaf; leaves with more elements are subsampled.
  std::size_t max_coords = 48;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  /// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8) over all
  /// probed coordinates.
  double rel_error = 0.0;
  std::size_t coords = 0;
};

/// Scalar loss built from the given leaves through tape.param().
using LossBuilder = std::function<Var(Tape&)>;

/// Compares the tape gradient of `loss` w.r.t. every leaf against central
/// differences. Leaf gradients are zeroed first and left holding the analytic
/// gradient afterwards.
GradCheckResult gradcheck(const LossBuilder& loss, const std::vector<Parameter*>& leaves,
                          const GradCheckOptions& opt = {});

}  // namespace quadkit::ad
