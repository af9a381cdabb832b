#pragma once

// Differentiable tensor ops recorded on an ad::Tape. Each op computes its
// value eagerly and registers the exact adjoint.

#include <optional>
#include <vector>

#include "quadkit/autograd.hpp"

namespace quadkit::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a * s where s holds a single element.
Var mul_scalar(Var a, Var s);
/// Adds v (length x.dim(axis)) along `axis` of x.
Var add_along(Var x, Var v, std::size_t axis);

/// x * sigmoid(x)
Var silu(Var x);
Var tanh(Var x);
/// x / sqrt(mean(x^2 along axis) + eps).
Var rms_norm(Var x, std::size_t axis, double eps = 1e-6);

Var reshape(Var x, Shape shape);
Var permute(Var x, const std::vector<std::size_t>& perm);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
/// out[..., i, ...] = x[..., index[i], ...] along `axis`.
Var gather(Var x, std::size_t axis, const std::vector<std::size_t>& index);

/// (M, K) x (K, N)
Var matmul(Var a, Var b);
/// x (M, K) W (K, N) + b (N)
Var linear(Var x, Var w, std::optional<Var> b);

/// x (N, Cin, H, W), w (Cout, Cin, k, k), b (Cout)
Var conv2d(Var x, Var w, std::optional<Var> b, std::size_t stride, std::size_t pad);
/// x (T, Cin, H, W), w (Cout, Cin, 3, 3, 3), b (Cout); same padding, stride 1.
Var conv3d(Var x, Var w, std::optional<Var> b);
/// Nearest-neighbor 2x upsampling of (N, C, H, W).
Var upsample2x(Var x);
/// Mean over the two trailing axes: (N, C, H, W) -> (N, C).
Var mean_spatial(Var x);

/// (N, C, H, W) -> (N, 2C, H, W/2 + 1): real parts in channels [0, C),
/// imaginary parts in [C, 2C).
Var rdft2_stack(Var x);
/// Inverse of rdft2_stack for an even output width.
Var irdft2_unstack(Var spec, std::size_t width);

/// Single-head attention per batch item: x (B, L, C) -> softmax(QK^T/sqrt(dk)) V,
/// with Q = x wq, K = x wk, V = x wv.
Var attention(Var x, Var wq, Var wk, Var wv);

struct ScanVars {
  Var w_delta, b_delta, w_b, w_c, a_log, d_skip;
};
/// Selective state-space scan over x (B, L, C).
Var selective_scan(Var x, const ScanVars& p);

/// m * gamma + (1 - m) * phi with a binary mask per leading row.
Var mask_select(Var gamma, Var phi, const std::vector<int>& mask);

/// sum(x * weights) as a single-element tensor.
Var weighted_sum(Var x, const Tensor& weights);
/// mean((x - target)^2) as a single-element tensor.
Var mse(Var x, const Tensor& target);

}  // namespace quadkit::ad
