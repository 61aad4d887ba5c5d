#include <gtest/gtest.h>

#include <cmath>

#include <json.hpp>

#include "imap/saliency.hpp"
#include "imap/spectral.hpp"
#include "imap/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace imap;
using namespace imap::synth;
using imap::testing::code_of;
using imap::testing::TempDir;

namespace {

std::vector<std::filesystem::path> files_in(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) out.push_back(e.path().filename());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(SynthSpecTest, PresetsAndGeometry) {
  for (const char* p : {"combined", "planted-spectrum", "planted-motion", "planted-surrogate"}) {
    const auto s = preset_spec(p);
    EXPECT_EQ(s.preset, p);
    EXPECT_NO_THROW(check_spec(s));
  }
  EXPECT_EQ(code_of([] { preset_spec("nope"); }), ErrorCode::kSpecError);

  auto s = preset_spec("planted-motion");
  apply_geometry(s, "3,2,5,16,6,2,3");
  EXPECT_EQ(s.frames, 3);
  EXPECT_EQ(s.width, 5);
  EXPECT_EQ(s.heads, 6);
  EXPECT_EQ(s.timesteps, 3);
  EXPECT_EQ(code_of([&] { apply_geometry(s, "1,2,3"); }), ErrorCode::kSpecError);
  EXPECT_EQ(code_of([&] { apply_geometry(s, "1,2,3,4,5,6,x"); }), ErrorCode::kSpecError);

  auto small = preset_spec("combined");
  small.head_dim = 40;  // needs 68 + 1 for the planted spectrum
  EXPECT_EQ(code_of([&] { check_spec(small); }), ErrorCode::kSpecError);
  auto neg = preset_spec("planted-motion");
  neg.spacing = -1;
  EXPECT_EQ(code_of([&] { check_spec(neg); }), ErrorCode::kSpecError);
  auto one = preset_spec("planted-motion");
  one.frames = 1;
  EXPECT_EQ(code_of([&] { generate_planted_dump(one, 0); }), ErrorCode::kSpecError);
}

TEST(SynthTest, MovingSquareSlides) {
  const auto m = moving_square(4, 4, 4);
  for (std::size_t f = 0; f < 4; ++f) {
    std::size_t count = 0;
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 4; ++x) count += m.at(f, y, x);
    }
    EXPECT_EQ(count, 4u);
  }
  EXPECT_TRUE(m.at(0, 1, 0));
  EXPECT_TRUE(m.at(3, 1, 3));
  EXPECT_FALSE(m.at(3, 1, 0));
  const auto tiny = moving_square(2, 1, 1);
  EXPECT_EQ(tiny.cells, (std::vector<std::uint8_t>{1, 1}));
}

TEST(SynthTest, ByteIdenticalPerSeed) {
  TempDir a("synth_a"), b("synth_b"), c("synth_c");
  const auto spec = preset_spec("combined");
  write_planted_dump(a.path(), generate_planted_dump(spec, 42));
  write_planted_dump(b.path(), generate_planted_dump(spec, 42));
  write_planted_dump(c.path(), generate_planted_dump(spec, 43));
  const auto names = files_in(a.path());
  ASSERT_EQ(names, files_in(b.path()));
  bool any_diff = false;
  for (const auto& n : names) {
    EXPECT_EQ(read_file_bytes(a.path() / n), read_file_bytes(b.path() / n)) << n;
    if (n.extension() == ".bin") any_diff = any_diff || read_file_bytes(a.path() / n) != read_file_bytes(c.path() / n);
  }
  EXPECT_TRUE(any_diff);
}

TEST(SynthTest, AddingAHeadKeepsOtherHeads) {
  auto spec = preset_spec("planted-motion");
  const auto base = generate_planted_dump(spec, 7);
  spec.heads += 1;
  const auto more = generate_planted_dump(spec, 7);
  const auto& r0 = base.source.records().begin()->second;
  const auto& r1 = more.source.records().begin()->second;
  // Noise heads (not chosen as motion heads in either dump) are unchanged.
  const auto& mh0 = base.truth.motion_heads.begin()->second;
  const auto& mh1 = more.truth.motion_heads.begin()->second;
  for (int h = 0; h < 8; ++h) {
    const bool motion = std::count(mh0.begin(), mh0.end(), h) || std::count(mh1.begin(), mh1.end(), h);
    if (motion) continue;
    const auto a = r0.q_vis.head(static_cast<std::size_t>(h));
    const auto b = r1.q_vis.head(static_cast<std::size_t>(h));
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << h;
  }
}

TEST(SynthTest, PlantedAttentionMatrixIsExact) {
  const auto dump = generate_planted_dump(preset_spec("planted-spectrum"), 3);
  const auto& m = dump.source.manifest();
  const auto rec = dump.source.load(m.timesteps[0], 1);
  const spectral::AttentionOperator op(rec, 2, dumpio::AttentionKind::kJoint);
  const auto a = oracle::dense_attention(op.queries(), op.keys(), op.dim(), op.head_dim());
  const double eps = 1.0 - dump.truth.planted_lambda2.at({1, 2});
  const double n = static_cast<double>(op.dim());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      EXPECT_NEAR(a(i, j), (i == j ? 1.0 - eps : 0.0) + eps / n, 1e-6);
    }
  }
  EXPECT_NEAR(oracle::second_modulus(a), 1.0 - eps, 1e-4);
}

TEST(SynthTest, PlantedEpsRanges) {
  const auto spec = preset_spec("combined");
  const auto dump = generate_planted_dump(spec, 9);
  for (const auto& [key, lam] : dump.truth.planted_lambda2) {
    const double eps = 1.0 - lam;
    if (is_informative_layer(spec, key.first)) {
      EXPECT_GE(eps, spec.eps_min);
      EXPECT_LE(eps, spec.eps_max);
    } else {
      EXPECT_GE(eps, spec.eps_uninformative_min);
      EXPECT_LE(eps, spec.eps_uninformative_max);
    }
  }
  EXPECT_FALSE(is_informative_layer(spec, 2));
  EXPECT_TRUE(is_informative_layer(spec, 1));
  for (const auto& [key, heads] : dump.truth.motion_heads) {
    EXPECT_TRUE(is_informative_layer(spec, key.layer) || heads.empty());
  }
}

TEST(SynthTest, SurrogateMarginAndRecovery) {
  for (const char* preset : {"planted-surrogate", "combined"}) {
    const auto spec = preset_spec(preset);
    const auto dump = generate_planted_dump(spec, 5);
    const auto& m = dump.source.manifest();
    const auto geo = saliency::geometry_of(m);
    ASSERT_FALSE(dump.truth.surrogate_index.empty());
    for (const auto& [key, token] : dump.truth.surrogate_index) {
      const auto rec = dump.source.load(key.timestep, key.layer);
      const auto h = static_cast<std::size_t>(key.head);
      const auto row = *m.concept_index(key.concept_name);
      const auto kc = rec.k_con.row(h, row);
      const auto fs = geo.frame_size();
      double best = -1e300, second = -1e300;
      std::size_t arg = 0;
      for (std::size_t p = key.frame * fs; p < (key.frame + 1) * fs; ++p) {
        double s = 0;
        for (std::size_t j = 0; j < kc.size(); ++j) s += static_cast<double>(rec.q_vis.row(h, p)[j]) * kc[j];
        if (s > best) {
          second = best;
          best = s;
          arg = p;
        } else {
          second = std::max(second, s);
        }
      }
      EXPECT_EQ(arg, token);
      EXPECT_GE(best - second, spec.surrogate_margin * (1 - 1e-6));
      const auto got = saliency::qk_match_surrogates(rec.q_vis.head(h), rec.q_vis.dim, kc, geo,
                                                     saliency::SurrogateMode::kQkFrame);
      EXPECT_EQ(got[static_cast<std::size_t>(key.frame)], token);
    }
  }
}

TEST(SynthTest, SurrogatesSitInsideTheMotionMask) {
  const auto dump = generate_planted_dump(preset_spec("combined"), 8);
  for (const auto& [key, token] : dump.truth.surrogate_index) {
    EXPECT_EQ(dump.truth.motion_mask.cells[token], 1) << key.timestep << "/" << key.layer;
  }
}

TEST(SynthTest, F16DumpIsRoundedAndFinite) {
  auto spec = preset_spec("planted-motion");
  spec.dtype = DType::kF16;
  TempDir dir("synth16");
  const auto dump = generate_planted_dump(spec, 2);
  write_planted_dump(dir.path(), dump);
  const dumpio::DirectorySource disk(dir.path());
  for (const auto& [key, rec] : dump.source.records()) {
    EXPECT_EQ(disk.load(key.timestep, key.layer), rec);
    for (float v : rec.h_vis.data) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(TruthIoTest, RoundTripAndRejections) {
  TempDir dir("truth");
  const auto dump = generate_planted_dump(preset_spec("combined"), 4);
  write_truth(dir / "t.json", dump.truth);
  EXPECT_EQ(read_truth(dir / "t.json"), dump.truth);
  EXPECT_EQ(truth_from_json(truth_to_json(dump.truth)), dump.truth);

  const auto doc = nlohmann::json::parse(truth_to_json(dump.truth));
  auto missing = doc;
  missing.erase("motion_mask");
  EXPECT_EQ(code_of([&] { truth_from_json(missing.dump()); }), ErrorCode::kSchemaViolation);

  auto bad_head = doc;
  bad_head["num_heads"] = 1;
  EXPECT_EQ(code_of([&] { truth_from_json(bad_head.dump()); }), ErrorCode::kSchemaViolation);

  EXPECT_EQ(code_of([&] { truth_from_json("[]"); }), ErrorCode::kSchemaViolation);
  EXPECT_EQ(code_of([&] { read_truth(dir / "none.json"); }), ErrorCode::kMissingFile);
}
