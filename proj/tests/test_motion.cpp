#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mannprune/evaluation.hpp"
#include "mannprune/experiment.hpp"
#include "mannprune/motion.hpp"
#include "mannprune/training.hpp"

using namespace mannprune;

namespace {

std::shared_ptr<const SkeletonSchema> compact() {
  return std::make_shared<const SkeletonSchema>(build_schema(SkeletonLayout::compact()));
}

std::vector<MotionClip> suite_clips(std::shared_ptr<const SkeletonSchema> s, double seconds, std::uint64_t seed = 1) {
  std::vector<MotionClip> out;
  for (const auto& g : gait_suite(seed, seconds)) out.push_back(generate_gait(g, s));
  return out;
}

}  // namespace

TEST(Schema, DefaultDogDimensions) {
  const auto s = build_schema();
  EXPECT_EQ(s.joint_count(), 33u);
  EXPECT_EQ(s.dim(), 4 + 12 * 33 + 4 + 4 + 12u);
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.gating_columns.size(), 12u);
  EXPECT_EQ(s.control_columns.size(), 12u);
  EXPECT_EQ(s.feet.size(), 4u);
  EXPECT_EQ(s.columns[s.feet[2].height], "LH_height");
  EXPECT_EQ(s.feet[0].joint, "LF_foot");
  EXPECT_EQ(s.columns[s.gating_columns[0]], "LF_foot_vx");
}

TEST(Schema, CompactDimensionsAndParents) {
  const auto s = build_schema(SkeletonLayout::compact());
  EXPECT_EQ(s.joint_count(), 16u);
  EXPECT_EQ(s.dim(), 216u);
  EXPECT_EQ(s.parents[0], -1);
  for (std::size_t j = 1; j < s.joint_count(); ++j) EXPECT_LT(s.parents[j], static_cast<int>(j));
}

TEST(Schema, ValidateCatchesOverlap) {
  auto s = build_schema(SkeletonLayout::compact());
  s.ranges.back().begin -= 1;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Gait, DeterministicForSameSeed) {
  const auto s = compact();
  const auto spec = GaitSpec::preset(GaitType::trot, 9, 1.5);
  const auto a = generate_gait(spec, s);
  const auto b = generate_gait(spec, s);
  EXPECT_EQ(a.frames, b.frames);
  auto other = spec;
  other.seed = 10;
  EXPECT_NE(generate_gait(other, s).frames, a.frames);
  EXPECT_EQ(a.frames.rows, 90u);
}

TEST(Gait, StanceFeetArePlanted) {
  const auto s = compact();
  for (const auto& clip : suite_clips(s, 3.0)) {
    std::size_t stance = 0, swing = 0;
    for (std::size_t t = 0; t < clip.frames.rows; ++t)
      for (const auto& f : s->feet) {
        const float h = clip.frames(t, f.height), v = clip.frames(t, f.speed);
        EXPECT_GE(h, 0.0f);
        if (h == 0.0f) {
          ++stance;
          EXPECT_EQ(v, 0.0f) << clip.label << " frame " << t;
        } else {
          ++swing;
        }
      }
    EXPECT_GT(stance, 0u) << clip.label;
    if (clip.label != "idle") { EXPECT_GT(swing, 0u) << clip.label; }
  }
}

TEST(Gait, GroundTruthSkatingNearZero) {
  for (auto layout : {SkeletonLayout::compact(), SkeletonLayout{}}) {
    const auto s = std::make_shared<const SkeletonSchema>(build_schema(layout));
    for (const auto& clip : suite_clips(s, 4.0, 3)) EXPECT_LT(foot_skate(clip).aggregate, 0.02) << clip.label;
  }
}

TEST(Gait, SpecValidation) {
  auto g = GaitSpec::preset(GaitType::walk);
  g.duty[1] = 1.0;
  EXPECT_THROW(g.validate(), ConfigError);
  g = GaitSpec::preset(GaitType::walk);
  g.phase[0] = -0.1;
  EXPECT_THROW(g.validate(), ConfigError);
  EXPECT_THROW(gait_from_string("canter"), ConfigError);
  g = GaitSpec::preset(GaitType::walk, 0, 0.01);
  EXPECT_THROW(generate_gait(g, compact()), ConfigError);
}

TEST(Dataset, PairCountsAndSplit) {
  const auto s = compact();
  std::vector<MotionClip> clips;
  for (double sec : {1.0, 2.5, 0.5}) clips.push_back(generate_gait(GaitSpec::preset(GaitType::walk, 1, sec), s));
  const auto ds = build_dataset(clips, 0.9);
  std::size_t expected = 0, val = 0;
  for (const auto& c : clips) {
    expected += c.frames.rows - 1;
    val += static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(c.frames.rows - 1)));
  }
  EXPECT_EQ(ds.pair_count(), expected);
  EXPECT_EQ(ds.val_pairs.size(), val);
  EXPECT_EQ(ds.x_train.rows, ds.train_pairs.size());
  EXPECT_EQ(ds.y_val.rows, ds.val_pairs.size());
  // Validation pairs are the tail of each clip.
  for (const auto& p : ds.val_pairs)
    for (const auto& q : ds.train_pairs)
      if (p.clip == q.clip) { EXPECT_GT(p.frame, q.frame); }
}

TEST(Dataset, NormalizedTrainingSetIsStandardized) {
  const auto ds = build_dataset(suite_clips(compact(), 2.0));
  for (std::size_t c = 0; c < ds.x_train.cols; ++c) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < ds.x_train.rows; ++r) m += ds.x_train(r, c);
    m /= static_cast<double>(ds.x_train.rows);
    for (std::size_t r = 0; r < ds.x_train.rows; ++r) v += (ds.x_train(r, c) - m) * (ds.x_train(r, c) - m);
    v /= static_cast<double>(ds.x_train.rows);
    EXPECT_NEAR(m, 0.0, 1e-3);
    if (ds.stats.in_std[c] > 1e-5f) { EXPECT_NEAR(v, 1.0, 1e-3); }
  }
}

TEST(Dataset, RejectsBadClips) {
  const auto s = compact();
  EXPECT_THROW(build_dataset({}), ConfigError);
  auto dog = std::make_shared<const SkeletonSchema>(build_schema());
  std::vector<MotionClip> mixed{generate_gait(GaitSpec::preset(GaitType::walk), s),
                                generate_gait(GaitSpec::preset(GaitType::walk), dog)};
  EXPECT_THROW(build_dataset(mixed), ConfigError);
}

TEST(Rollout, LengthOmegaAndControl) {
  const auto s = compact();
  const auto gt = generate_gait(GaitSpec::preset(GaitType::turn, 2, 1.0), s);
  Rng rng(3);
  auto net = init_network<float>(network_for_schema(*s, 16, 3), rng);
  const std::size_t T = 30;
  const auto control = control_series(gt, T);
  const auto r = rollout(net, gt.frames.row(0), control, T, s);
  EXPECT_EQ(r.clip.frames.rows, T + 1);
  ASSERT_EQ(r.omegas.size(), T);
  for (const auto& w : r.omegas) EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-6);
  for (std::size_t t = 1; t <= T; ++t)
    for (std::size_t k = 0; k < s->control_columns.size(); ++k)
      EXPECT_EQ(r.clip.frames(t, s->control_columns[k]), gt.frames(t, s->control_columns[k]));
  EXPECT_THROW(control_series(gt, gt.frames.rows), ShapeError);
}

TEST(Rollout, DivergenceNamesFrame) {
  const auto s = compact();
  const auto gt = generate_gait(GaitSpec::preset(GaitType::walk, 2, 1.0), s);
  Rng rng(3);
  auto net = init_network<float>(network_for_schema(*s, 8, 2), rng);
  net.norm = Normalization<float>::identity(s->dim(), s->dim());
  net.norm.out_std[0] = std::numeric_limits<float>::infinity();
  try {
    rollout(net, gt.frames.row(0), control_series(gt, 10), 10, s);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos);
  }
}

TEST(Rollout, TrainedTinyNetStaysSane) {
  const auto s = compact();
  const auto ds = build_dataset(suite_clips(s, 12.0));
  Rng rng(4);
  auto net = init_network<float>(network_for_schema(*s, 32, 2), rng);
  attach_normalization(net, ds);
  TrainConfig tc;
  tc.epochs = 3;
  tc.learning_rate = 1e-3;
  tc.restart_period = 3;
  tc.seed = 4;
  train(net, ds, tc);
  EvalConfig ev;
  const auto gt = evaluation_clip(GaitType::walk, ev, s);
  const auto r = rollout(net, gt.frames.row(0), control_series(gt, 240), 240, s);
  EXPECT_TRUE(all_finite<float>(r.clip.frames.data));
  for (std::size_t t = 0; t < r.clip.frames.rows; ++t)
    for (const auto& f : s->feet) {
      EXPECT_GE(r.clip.frames(t, f.height), -1.0f);
      EXPECT_LE(r.clip.frames(t, f.height), 50.0f);
    }
}

namespace {

MotionClip random_clip(std::size_t frames, std::uint64_t seed) {
  MotionClip c;
  c.schema = compact();
  c.id = "r" + std::to_string(seed);
  c.label = "random";
  c.frames = Matrix<float>(frames, c.schema->dim());
  Rng rng(seed);
  for (auto& v : c.frames.data) v = static_cast<float>(rng.normal());
  return c;
}

}  // namespace

TEST(Gait, IdleIsStationary) {
  const auto s = compact();
  const auto clip = generate_gait(GaitSpec::preset(GaitType::idle, 4, 2.0), s);
  for (std::size_t t = 0; t < clip.frames.rows; ++t) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(clip.frames(t, c), 0.0f) << t;
    EXPECT_EQ(clip.frames(t, 3), clip.frames(0, 3));
    for (const auto& f : s->feet) {
      EXPECT_EQ(clip.frames(t, f.height), 0.0f);
      EXPECT_EQ(clip.frames(t, f.speed), 0.0f);
    }
  }
}

TEST(Gait, TrotContactFollowsPhaseSchedule) {
  const auto s = compact();
  const auto spec = GaitSpec::preset(GaitType::trot, 2, 3.0);
  const auto clip = generate_gait(spec, s);
  const double cadence = spec.speed_cm_s / spec.stride_cm;
  std::size_t checked = 0;
  for (std::size_t t = 0; t < clip.frames.rows; ++t) {
    const double time = static_cast<double>(t) / s->frame_rate;
    for (std::size_t leg = 0; leg < 4; ++leg) {
      const double c = cadence * time + spec.phase[leg];
      const double phi = c - std::floor(c);
      const float h = clip.frames(t, s->feet[leg].height);
      if (phi < spec.duty[leg]) {
        EXPECT_EQ(h, 0.0f) << "frame " << t << " leg " << leg;
        ++checked;
      } else if (phi - spec.duty[leg] > 1e-6 && 1.0 - phi > 1e-6) {
        EXPECT_GT(h, 0.0f) << "frame " << t << " leg " << leg;
        ++checked;
      }
    }
    // Diagonal pairs move together.
    EXPECT_EQ(clip.frames(t, s->feet[0].height) == 0.0f, clip.frames(t, s->feet[3].height) == 0.0f);
    EXPECT_EQ(clip.frames(t, s->feet[1].height) == 0.0f, clip.frames(t, s->feet[2].height) == 0.0f);
  }
  // Only frames landing exactly on a stance/swing boundary are skipped.
  EXPECT_GT(checked, 4 * clip.frames.rows * 95 / 100);
}

TEST(Dataset, PairsNeverSpanClips) {
  EXPECT_EQ(build_dataset({random_clip(2, 1)}).pair_count(), 1u);
  const auto ds = build_dataset({random_clip(10, 2), random_clip(5, 3)});
  EXPECT_EQ(ds.pair_count(), 13u);
  for (const auto* pairs : {&ds.train_pairs, &ds.val_pairs})
    for (const auto& p : *pairs) EXPECT_LT(p.frame + 1, ds.clips[p.clip].frames.rows);
}

TEST(Rollout, ZeroFramesReturnsSeedOnly) {
  const auto s = compact();
  const auto gt = generate_gait(GaitSpec::preset(GaitType::walk, 2, 1.0), s);
  Rng rng(3);
  const auto net = init_network<float>(network_for_schema(*s, 8, 2), rng);
  const auto r = rollout(net, gt.frames.row(0), control_series(gt, 0), 0, s);
  ASSERT_EQ(r.clip.frames.rows, 1u);
  EXPECT_TRUE(r.omegas.empty());
  for (std::size_t c = 0; c < s->dim(); ++c) EXPECT_EQ(r.clip.frames(0, c), gt.frames(0, c));
}
