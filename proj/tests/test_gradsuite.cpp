#include <gtest/gtest.h>

#include "quadkit/gradsuite.hpp"

using namespace quadkit::gradsuite;

TEST(GradSuite, EveryBlockPassesOnFewTrials) {
  const auto results = run_suite(3, 11);
  ASSERT_EQ(results.size(), block_names().size());
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed()) << r.block << " rel err " << r.max_rel_error;
    EXPECT_EQ(r.trials, 3u);
  }
}

TEST(GradSuite, TolerancesAndUnknownBlock) {
  EXPECT_EQ(check_block("mask_embed", 1, 0).tolerance, 1e-4);
  EXPECT_EQ(check_block("full_loss", 1, 0).tolerance, 1e-3);
  EXPECT_THROW(check_block("no_such_block", 1, 0), std::invalid_argument);
}
