#include <gtest/gtest.h>

#include <cmath>

#include "mannprune/evaluation.hpp"
#include "mannprune/experiment.hpp"
#include "mannprune/motion.hpp"

using namespace mannprune;

namespace {

std::shared_ptr<const SkeletonSchema> compact() {
  return std::make_shared<const SkeletonSchema>(build_schema(SkeletonLayout::compact()));
}

MotionClip blank_clip(std::size_t frames) {
  MotionClip c;
  c.schema = compact();
  c.id = "hand";
  c.label = "hand";
  c.frames = Matrix<float>(frames, c.schema->dim());
  return c;
}

NetworkConfig default_config() { return network_for_schema(build_schema()); }

}  // namespace

TEST(Skating, TermAtKnownHeights) {
  const double H = 2.5, v = 3.0;
  EXPECT_NEAR(skating_term(v, 0.0, H), v, 1e-12);
  EXPECT_NEAR(skating_term(v, H, H), 0.0, 1e-12);
  EXPECT_NEAR(skating_term(v, H / 2, H), v * (2.0 - std::sqrt(2.0)), 1e-6);
}

TEST(Skating, HandBuiltClipPerLegMeans) {
  auto clip = blank_clip(4);
  const auto& feet = clip.schema->feet;
  ASSERT_EQ(feet.size(), 4u);
  const double H = 2.5;
  // Leg 0: planted and sliding at 2 on every frame.
  for (std::size_t t = 0; t < 4; ++t) clip.frames(t, feet[0].speed) = 2.0f;
  // Leg 1: one frame at H/2 moving -4 (speed magnitude counts), one at exactly H, two in the air.
  clip.frames(0, feet[1].height) = 1.25f;
  clip.frames(0, feet[1].speed) = -4.0f;
  clip.frames(1, feet[1].height) = 2.5f;
  clip.frames(1, feet[1].speed) = 100.0f;
  clip.frames(2, feet[1].height) = 10.0f;
  clip.frames(3, feet[1].height) = 10.0f;
  // Leg 2: always above the threshold.
  for (std::size_t t = 0; t < 4; ++t) {
    clip.frames(t, feet[2].height) = 5.0f;
    clip.frames(t, feet[2].speed) = 7.0f;
  }
  // Leg 3: planted, still.
  const auto r = foot_skate(clip, H);
  ASSERT_EQ(r.legs.size(), 4u);
  EXPECT_NEAR(r.legs[0].mean, 2.0, 1e-12);
  EXPECT_EQ(r.legs[0].contact_frames, 4u);
  EXPECT_EQ(r.legs[1].contact_frames, 1u);  // h == H is not contact
  EXPECT_NEAR(r.legs[1].mean, 4.0 * (2.0 - std::sqrt(2.0)), 1e-6);
  EXPECT_EQ(r.legs[2].contact_frames, 0u);
  EXPECT_EQ(r.legs[2].mean, 0.0);
  EXPECT_EQ(r.legs[3].mean, 0.0);
  EXPECT_NEAR(r.aggregate, (2.0 + 4.0 * (2.0 - std::sqrt(2.0))) / 4.0, 1e-6);
  EXPECT_EQ(r.frames, 4u);
}

TEST(Skating, ThresholdChangesContactSet) {
  auto clip = blank_clip(2);
  const auto& f = clip.schema->feet[0];
  clip.frames(0, f.height) = 3.0f;
  clip.frames(0, f.speed) = 1.0f;
  EXPECT_EQ(foot_skate(clip, 2.5).legs[0].contact_frames, 1u);
  EXPECT_EQ(foot_skate(clip, 4.0).legs[0].contact_frames, 2u);
  EXPECT_NEAR(foot_skate(clip, 4.0).legs[0].mean, 0.5 * (2.0 - std::exp2(0.75)), 1e-6);
  EXPECT_THROW(foot_skate(clip, 0.0), ConfigError);
}

TEST(Cost, DefaultArchitectureNumbers) {
  const auto c = cost_at_sparsity(default_config(), 0.0);
  EXPECT_EQ(c.total_params, 5551080u);
  EXPECT_EQ(c.nonzero_params, c.total_params);
  EXPECT_NEAR(c.size_megabits, 178.0, 0.03 * 178.0);
  EXPECT_NEAR(c.mflops_total, 11.10, 0.03 * 11.10);
  EXPECT_NEAR(c.size_megabytes * 8.0, c.size_megabits, 1e-9);
}

TEST(Cost, SizeShrinksWithPrunedFraction) {
  const auto cfg = default_config();
  const auto dense = cost_at_sparsity(cfg, 0.0);
  const double fraction = static_cast<double>(dense.prunable_params) / static_cast<double>(dense.total_params);
  EXPECT_GT(fraction, 0.99);
  for (int i = 1; i <= 9; ++i) {
    const double s = i / 10.0;
    const auto c = cost_at_sparsity(cfg, s);
    EXPECT_EQ(c.masked_params, prune_count(s, dense.prunable_params));
    EXPECT_NEAR(c.size_megabits / dense.size_megabits, 1.0 - s, 0.03 * (1.0 - s)) << s;
  }
}

TEST(Cost, FlopsAffineInSparsityWithFixedFloor) {
  const auto cfg = default_config();
  const auto c0 = cost_at_sparsity(cfg, 0.0);
  const auto c9 = cost_at_sparsity(cfg, 0.9);
  EXPECT_GT(c0.mflops_fixed, 0.0);
  EXPECT_DOUBLE_EQ(c0.mflops_fixed, c9.mflops_fixed);
  for (int i = 1; i < 9; ++i) {
    const double s = i / 10.0;
    const double expected = c0.mflops_total + (c9.mflops_total - c0.mflops_total) * s / 0.9;
    EXPECT_NEAR(cost_at_sparsity(cfg, s).mflops_total, expected, 1e-5 * c0.mflops_total) << s;
  }
  EXPECT_GT(c9.mflops_total, c0.mflops_fixed);
}

TEST(Cost, MaskedNetworkMatchesShapeOnlyCost) {
  NetworkConfig c = network_for_schema(*compact(), 24, 3);
  Rng rng(3);
  auto net = init_network<float>(c, rng);
  for (PruneScope scope : {PruneScope::global, PruneScope::local}) {
    PruneConfig pc;
    pc.scope = scope;
    auto st = PruneState::create(net, pc);
    st.masks = compute_masks(net, 0.6, pc);
    st.refresh_sparsity();
    const auto a = cost_report(net, &st);
    const auto b = cost_at_sparsity(c, 0.6, pc);
    EXPECT_EQ(a.nonzero_params, b.nonzero_params);
    EXPECT_EQ(a.masked_params, b.masked_params);
    EXPECT_DOUBLE_EQ(a.mflops_total, b.mflops_total);
  }
}

TEST(Cost, FlopsOnTinyNetworkByHand) {
  NetworkConfig c;
  c.d_in = 2;
  c.d_out = 1;
  c.h_size = 3;
  c.n_experts = 2;
  c.g_hidden = 2;
  c.gating_indices = {0};
  // Expert weights: 2*(3*2 + 3*3 + 1*3) = 36 per expert. Gating weights: 2*(2*1 + 2*2 + 2*2) = 20.
  // Biases: 2*(3 + 3 + 1) + (2 + 2 + 2) = 20. Mixing: 2*2*(3 + 3 + 1) = 28. ELU: 2*3 + 2*2 = 10. Softmax: 8.
  const auto r = cost_at_sparsity(c, 0.0);
  EXPECT_NEAR(r.mflops_total * 1e6, 72 + 20 + 20 + 28 + 10 + 8, 1e-9);
  EXPECT_NEAR(r.mflops_prunable * 1e6, 72 + 20, 1e-9);
}

TEST(Bench, DenseAndCsrAgree) {
  Rng rng(5);
  auto net = init_network<float>(network_for_schema(*compact(), 32, 3), rng);
  const auto report = bench_inference(net, {0.0, 0.5, 0.9}, 100);
  ASSERT_EQ(report.rows.size(), 3u);
  for (const auto& row : report.rows) {
    EXPECT_LE(row.max_abs_diff, 1e-5);
    EXPECT_GT(row.dense_ns, 0.0);
    EXPECT_GT(row.csr_ns, 0.0);
    EXPECT_EQ(row.layers.size(), 3u);
  }
  EXPECT_LT(report.rows[2].nnz, report.rows[0].nnz);
  EXPECT_THROW(bench_inference(net, {0.5}, 99), ConfigError);
}

TEST(Comparison, MatchedSparsityWithinTolerance) {
  const auto large = network_for_schema(build_schema(), 512, 8);
  for (std::size_t h : {128u, 256u, 362u}) {
    const double s = matched_sparsity(large, h);
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
    const auto check = check_pair(large, {h, s}, {}, 0.02);
    EXPECT_LE(check.relative_gap, 1e-4);
  }
  EXPECT_THROW(check_pair(large, {256, 0.1}, {}, 0.02), ConfigError);
  EXPECT_THROW(check_pair(large, {256, 1.0}, {}, 0.02), ConfigError);
}

TEST(Evaluation, GroundTruthRolloutSkatesLikeData) {
  const auto s = compact();
  EvalConfig ev;
  const auto gt = evaluation_clip(GaitType::walk, ev, s);
  EXPECT_EQ(gt.frames.rows, ev.rollout_frames + 1);
  EXPECT_EQ(foot_skate(gt).aggregate, 0.0);
}

TEST(Cost, FreshNetworkIsDenseAt32Bits) {
  Rng rng(2);
  const auto net = init_network<float>(network_for_schema(*compact(), 16, 2), rng);
  const auto c = cost_report(net);
  EXPECT_EQ(c.sparsity, 0.0);
  EXPECT_EQ(c.nonzero_params, c.total_params);
  EXPECT_DOUBLE_EQ(c.size_megabits * 1e6, 32.0 * static_cast<double>(c.total_params));
}

TEST(Cost, NinetyPercentLeavesTenthOfPrunable) {
  const auto c = cost_at_sparsity(default_config(), 0.9);
  const double n = static_cast<double>(c.prunable_params);
  EXPECT_NEAR((n - static_cast<double>(c.masked_params)) / n, 0.1, 1.0 / n);
}

TEST(Bench, EmptyMatrixStillTimed) {
  const auto b = bench_matvec(Matrix<float>(16, 16), 100);
  EXPECT_EQ(b.nnz, 0u);
  EXPECT_GT(b.dense_ns, 0.0);
  EXPECT_GT(b.csr_ns, 0.0);
  const std::vector<float> x(16, 1.0f);
  EXPECT_EQ(csr_matvec(csr_from_dense(Matrix<float>(16, 16)), std::span<const float>(x)), std::vector<float>(16, 0.0f));
}

TEST(Bench, NinetyPercentSparse512RecordsRatio) {
  Rng rng(9);
  Matrix<float> m(512, 512);
  for (auto& v : m.data) v = rng.uniform() < 0.9 ? 0.0f : static_cast<float>(rng.normal());
  const auto b = bench_matvec(m, 100);
  EXPECT_GT(b.dense_ns, 0.0);
  EXPECT_GT(b.csr_ns, 0.0);
  // The ratio depends on the machine, so it is recorded rather than asserted.
  ::testing::Test::RecordProperty("dense_over_csr", std::to_string(b.speedup));
}

TEST(Comparison, EmptyPairListGivesEmptyTable) {
  ComparisonProtocol p;
  p.large = network_for_schema(*compact(), 16, 2);
  EXPECT_TRUE(compare_equal_params(p, MotionDataset{}).empty());
}

TEST(Comparison, ThreePairsGiveSixFiniteRows) {
  const auto s = compact();
  std::vector<MotionClip> clips;
  for (const auto& g : gait_suite(1, 1.0)) clips.push_back(generate_gait(g, s));
  const auto data = build_dataset(clips);
  ComparisonProtocol p;
  p.large = network_for_schema(*s, 24, 2);
  p.large.g_hidden = 8;
  for (std::size_t h : {8u, 12u, 16u}) p.pairs.push_back({h, matched_sparsity(p.large, h)});
  p.train.epochs = 1;
  p.train.learning_rate = 1e-3;
  p.eval.rollout_frames = 20;
  const auto rows = compare_equal_params(p, data);
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].model, i % 2 == 0 ? "dense" : "sparse");
    EXPECT_TRUE(std::isfinite(rows[i].val_mse));
    EXPECT_TRUE(std::isfinite(rows[i].skating_mean));
  }
  for (std::size_t i = 0; i < rows.size(); i += 2) {
    const double gap = std::abs(static_cast<double>(rows[i].nonzero) - static_cast<double>(rows[i + 1].nonzero));
    EXPECT_LE(gap, 0.02 * static_cast<double>(rows[i].nonzero));
  }
}
