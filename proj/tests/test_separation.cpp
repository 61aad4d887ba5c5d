#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "imap/separation.hpp"
#include "imap/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace imap;
using namespace imap::separation;
using imap::testing::code_of;

namespace {

constexpr Metric kAll[] = {Metric::kChi, Metric::kDbi, Metric::kFisher, Metric::kSilhouette};

struct Instance {
  std::vector<float> points;
  std::vector<std::uint32_t> labels;
  std::size_t d = 0;
  std::size_t k = 0;
};

// Integer coordinates, multiples of 5, so the exact-rotation test stays exact.
Instance random_instance(std::uint64_t seed, bool integral) {
  CounterRng rng(stream_key(seed, "separation"));
  Instance in;
  in.k = 2 + rng.below(5);
  in.d = 2 + rng.below(7);
  const std::size_t n = in.k + rng.below(200 - in.k + 1);
  std::vector<std::vector<double>> centre(in.k, std::vector<double>(in.d));
  for (auto& c : centre) {
    for (auto& v : c) v = 4.0 * rng.normal();
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::uint32_t>(i < in.k ? i : rng.below(in.k));
    in.labels.push_back(c);
    for (std::size_t j = 0; j < in.d; ++j) {
      const double v = centre[c][j] + rng.normal();
      in.points.push_back(integral ? static_cast<float>(5 * std::lround(20 * v)) : static_cast<float>(v));
    }
  }
  return in;
}

double score(const Instance& in, Metric m) {
  return separation_score(in.points, in.d, in.labels, in.k, m);
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST(SeparationTest, OneDimensionalExample) {
  const std::vector<float> pts{0, 2, 10, 12};
  const std::vector<std::uint32_t> lab{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(separation_score(pts, 1, lab, 2, Metric::kChi), 50.0);
  EXPECT_DOUBLE_EQ(separation_score(pts, 1, lab, 2, Metric::kFisher), 25.0);
  EXPECT_DOUBLE_EQ(frame_separation_score(pts, 1, 2, 2, Metric::kChi), 50.0);
}

TEST(SeparationTest, EqualMeansScoreZero) {
  const std::vector<float> pts{-1, 1, -2, 2};
  const std::vector<std::uint32_t> lab{0, 0, 1, 1};
  EXPECT_EQ(separation_score(pts, 1, lab, 2, Metric::kChi), 0.0);
  EXPECT_EQ(separation_score(pts, 1, lab, 2, Metric::kFisher), 0.0);
}

TEST(SeparationTest, ZeroWithinScatterSentinel) {
  const std::vector<float> pts{1, 1, 3, 3};
  const std::vector<std::uint32_t> lab{0, 0, 1, 1};
  EXPECT_EQ(separation_score(pts, 1, lab, 2, Metric::kChi), kPerfectSeparation);
  EXPECT_EQ(separation_score(pts, 1, lab, 2, Metric::kFisher), kPerfectSeparation);
  EXPECT_EQ(separation_score(pts, 1, lab, 2, Metric::kDbi), 0.0);
  const std::vector<double> scores{3.0, kPerfectSeparation, 1e300};
  EXPECT_EQ(rank_heads(scores, Metric::kChi), (std::vector<int>{1, 2, 0}));
}

TEST(SeparationTest, ErrorsOnDegenerateInput) {
  const std::vector<float> pts{0, 1};
  EXPECT_EQ(code_of([&] { separation_score(pts, 1, std::vector<std::uint32_t>{0, 0}, 1, Metric::kChi); }),
            ErrorCode::kSingleFrame);
  EXPECT_EQ(code_of([&] { separation_score(pts, 1, std::vector<std::uint32_t>{0, 0}, 2, Metric::kChi); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { separation_score(pts, 1, std::vector<std::uint32_t>{0}, 2, Metric::kChi); }),
            ErrorCode::kShapeMismatch);
}

TEST(SeparationTest, MatchesNaiveOracles) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto in = random_instance(seed, false);
    EXPECT_LT(rel(score(in, Metric::kChi), oracle::chi(in.points, in.d, in.labels, in.k)), 1e-10);
    EXPECT_LT(rel(score(in, Metric::kFisher), oracle::fisher(in.points, in.d, in.labels, in.k)), 1e-10);
    EXPECT_LT(rel(score(in, Metric::kDbi), oracle::dbi(in.points, in.d, in.labels, in.k)), 1e-10);
    EXPECT_LT(rel(score(in, Metric::kSilhouette), oracle::silhouette(in.points, in.d, in.labels, in.k)),
              1e-10);
  }
}

TEST(SeparationTest, ChiFisherIdentity) {
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    const auto in = random_instance(seed, false);
    const double n = static_cast<double>(in.labels.size());
    const double k = static_cast<double>(in.k);
    EXPECT_LT(rel(score(in, Metric::kChi), score(in, Metric::kFisher) * (n - k) / (k - 1)), 1e-12);
  }
}

TEST(SeparationTest, SingletonClusterPointsScoreZeroInSilhouette) {
  // Cluster 1 is a single point; only cluster 0's two points contribute.
  const std::vector<float> pts{0, 1, 5};
  const std::vector<std::uint32_t> lab{0, 0, 1};
  // a = 1, b = 5 and 4 -> (4/5 + 3/4) / 3.
  EXPECT_NEAR(separation_score(pts, 1, lab, 2, Metric::kSilhouette), (0.8 + 0.75) / 3, 1e-15);
}

TEST(SeparationTest, InvariantUnderTranslationRotationScale) {
  for (std::uint64_t seed = 200; seed < 230; ++seed) {
    const auto in = random_instance(seed, true);
    CounterRng rng(seed);
    auto moved = in;
    // Exact rotation by the (3, 4, 5) angle in a random coordinate plane, a
    // signed axis permutation, and an integer translation.
    const std::size_t a = rng.below(in.d);
    const std::size_t b = (a + 1 + rng.below(in.d - 1)) % in.d;
    for (std::size_t i = 0; i < in.labels.size(); ++i) {
      float* p = moved.points.data() + i * in.d;
      const float x = p[a], y = p[b];
      p[a] = (3 * x - 4 * y) / 5;
      p[b] = (4 * x + 3 * y) / 5;
      std::reverse(p, p + in.d);
      p[0] = -p[0];
      for (std::size_t j = 0; j < in.d; ++j) p[j] += static_cast<float>(17 * j) - 40.0f;
    }
    auto scaled = in;
    for (auto& v : scaled.points) v *= 3.0f;
    for (Metric m : kAll) {
      EXPECT_LT(rel(score(in, m), score(moved, m)), 1e-10) << metric_name(m);
      EXPECT_LT(rel(score(in, m), score(scaled, m)), 1e-10) << metric_name(m);
    }
  }
}

TEST(SeparationTest, ChiGrowsWithSpacing) {
  CounterRng rng(5);
  const auto noise = imap::testing::normal_floats(rng, 3 * 40 * 4);
  double prev = -1.0;
  for (double spacing : {1.0, 3.0, 9.0}) {
    std::vector<float> pts = noise;
    for (std::size_t p = 0; p < 120; ++p) pts[p * 4] += static_cast<float>(spacing * (p / 40));
    const double chi = frame_separation_score(pts, 4, 3, 40, Metric::kChi);
    EXPECT_GT(chi, prev);
    prev = chi;
  }
}

TEST(SeparationTest, LargeSilhouetteIsDeterministicSubsample) {
  CounterRng rng(8);
  const std::size_t frame = kSilhouettePointsPerCluster + 40;
  auto pts = imap::testing::normal_floats(rng, 2 * frame * 2);
  for (std::size_t p = frame; p < 2 * frame; ++p) pts[p * 2] += 3.0f;
  const double a = frame_separation_score(pts, 2, 2, frame, Metric::kSilhouette);
  const double b = frame_separation_score(pts, 2, 2, frame, Metric::kSilhouette);
  EXPECT_EQ(a, b);
  EXPECT_GT(a, 0.3);
  EXPECT_LT(a, 1.0);
}

TEST(RankHeadsTest, OrientationAndTies) {
  const std::vector<double> s{2.0, 5.0, 2.0, 1.0};
  EXPECT_EQ(rank_heads(s, Metric::kChi), (std::vector<int>{1, 0, 2, 3}));
  EXPECT_EQ(rank_heads(s, Metric::kDbi), (std::vector<int>{3, 0, 2, 1}));
}

TEST(SelectMotionHeadsTest, PlantedHeadsAreTopK) {
  auto spec = synth::preset_spec("planted-motion");
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto dump = synth::generate_planted_dump(spec, seed);
    const auto& m = dump.source.manifest();
    for (const auto& [key, heads] : dump.truth.motion_heads) {
      const auto rec = dump.source.load(key.timestep, key.layer);
      const auto rep = select_motion_heads(rec, Metric::kChi, static_cast<int>(heads.size()), m.frames_F,
                                           m.height_H, m.width_W);
      auto got = rep.selected;
      std::sort(got.begin(), got.end());
      EXPECT_EQ(got, heads) << "seed " << seed;
    }
  }
}

TEST(SelectMotionHeadsTest, KBeyondHeadCountReturnsAll) {
  const auto dump = synth::generate_planted_dump(synth::preset_spec("planted-motion"), 1);
  const auto& m = dump.source.manifest();
  const auto rec = dump.source.load(m.timesteps[0], m.layers[0]);
  const auto rep = select_motion_heads(rec, Metric::kDbi, 100, m.frames_F, m.height_H, m.width_W);
  EXPECT_EQ(rep.k, m.num_heads);
  EXPECT_EQ(rep.selected, rank_heads(rep.scores, Metric::kDbi));
  EXPECT_EQ(code_of([&] { select_motion_heads(rec, Metric::kChi, 0, m.frames_F, m.height_H, m.width_W); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { select_motion_heads(rec, Metric::kChi, 1, 1, m.height_H, m.width_W); }),
            ErrorCode::kSingleFrame);
}

TEST(RandomHeadsTest, PermutationAndDeterminism) {
  auto all = random_heads(9, 9, 4);
  EXPECT_EQ(random_heads(9, 9, 4), all);
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 9; ++i) EXPECT_EQ(all[static_cast<std::size_t>(i)], i);
  EXPECT_EQ(code_of([] { random_heads(3, 4, 0); }), ErrorCode::kInvalidArgument);
}

TEST(RandomHeadsTest, InclusionFrequencyIsBinomial) {
  std::vector<int> hits(48, 0);
  const int draws = 100;
  for (int seed = 0; seed < draws; ++seed) {
    const auto pick = random_heads(48, 5, static_cast<std::uint64_t>(seed));
    EXPECT_EQ(std::set<int>(pick.begin(), pick.end()).size(), 5u);
    for (int h : pick) ++hits[static_cast<std::size_t>(h)];
  }
  const double p = 5.0 / 48.0;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (int h : hits) EXPECT_LE(std::abs(h - draws * p), 3 * sigma + 1);
}
