#pragma once

// Finite-difference gradient checks of every differentiable block on small
// random instances.

#include <cstdint>
#include <string>
#include <vector>

namespace quadkit::gradsuite {

struct BlockCheck {
  std::string block;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t trials = 0;

  bool passed() const { return max_rel_error <= tolerance; }
};

/// mask_embed, conv3d_bg, temporal_attention, fuse, gated_self_attention,
/// ffc_unit, ffc_residual, s6_scan, multidir_ssm, enhancer_forward, full_loss.
const std::vector<std::string>& block_names();

/// Worst relative error over `trials` random instances of one block.
BlockCheck check_block(const std::string& block, std::size_t trials, std::uint64_t seed);

std::vector<BlockCheck> run_suite(std::size_t trials, std::uint64_t seed);

}  // namespace quadkit::gradsuite
