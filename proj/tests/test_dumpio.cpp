#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "imap/dumpio.hpp"
#include "imap/error.hpp"
#include "imap/half.hpp"
#include "imap/synth.hpp"
#include "test_util.hpp"

using namespace imap;
using namespace imap::dumpio;
using imap::testing::code_of;
using imap::testing::TempDir;

namespace {

DumpManifest small_manifest(AttentionKind kind = AttentionKind::kJoint) {
  DumpManifest m;
  m.attention_kind = kind;
  m.timesteps = {5};
  m.layers = {0};
  m.num_heads = 2;
  m.frames_F = 2;
  m.height_H = 2;
  m.width_W = 2;
  m.head_dim_d = 4;
  m.text_token_count = 3;
  m.concepts = {"cat", "dog"};
  return m;
}

LayerRecord random_record(const DumpManifest& m, std::uint64_t seed) {
  LayerRecord r = make_empty_record(m);
  CounterRng rng(seed);
  for (HeadTensor* t : {&r.q_vis, &r.k_vis, &r.q_txt, &r.k_txt, &r.k_con, &r.h_vis}) {
    for (auto& v : t->data) v = static_cast<float>(rng.normal());
  }
  if (r.h_con) {
    for (auto& v : r.h_con->data) v = static_cast<float>(rng.normal());
  }
  return r;
}

}  // namespace

TEST(DumpIoTest, MinimalManifestHasEightTokens) {
  TempDir dir("manifest");
  auto m = small_manifest();
  m.concepts = {"c"};
  const auto written = write_dump(dir.path(), m, {{{5, 0}, make_empty_record(m)}});
  const auto reread = read_manifest(dir.path());
  EXPECT_EQ(reread.tokens(), 8u);
  EXPECT_EQ(reread, written);
  EXPECT_EQ(read_manifest(dir / "manifest.json"), written);
}

TEST(DumpIoTest, MissingRecordFileIsMissingFile) {
  TempDir dir("missing");
  const auto m = small_manifest();
  write_dump(dir.path(), m, {{{5, 0}, make_empty_record(m)}});
  std::filesystem::remove(dir / record_file_name(5, 0));
  EXPECT_EQ(code_of([&] { read_manifest(dir.path()); }), ErrorCode::kMissingFile);
  EXPECT_EQ(code_of([&] { read_manifest(dir / "nope"); }), ErrorCode::kMissingFile);
}

TEST(DumpIoTest, SchemaAndGeometryErrors) {
  const auto good = nlohmann::json::parse(manifest_to_json(small_manifest()));

  auto without = good;
  without.erase("head_dim_d");
  EXPECT_EQ(code_of([&] { manifest_from_json(without.dump()); }), ErrorCode::kSchemaViolation);

  auto wrong_type = good;
  wrong_type["num_heads"] = "two";
  EXPECT_EQ(code_of([&] { manifest_from_json(wrong_type.dump()); }), ErrorCode::kSchemaViolation);

  auto zero = good;
  zero["width_W"] = 0;
  EXPECT_EQ(code_of([&] { manifest_from_json(zero.dump()); }), ErrorCode::kGeometryError);

  auto huge = good;
  huge["frames_F"] = 100000;
  huge["height_H"] = 100000;
  EXPECT_EQ(code_of([&] { manifest_from_json(huge.dump()); }), ErrorCode::kGeometryError);

  auto stray = good;
  stray["records"] = nlohmann::json::array({{{"timestep", 99}, {"layer", 0}, {"path", "x.bin"}}});
  EXPECT_EQ(code_of([&] { manifest_from_json(stray.dump()); }), ErrorCode::kSchemaViolation);

  EXPECT_EQ(code_of([&] { manifest_from_json("{not json"); }), ErrorCode::kSchemaViolation);
}

TEST(DumpIoTest, ZeroRecordDecodesToZeros) {
  const auto m = small_manifest();
  const auto zero = make_empty_record(m);
  EXPECT_EQ(decode_record(m, encode_record(m, zero)), zero);
}

TEST(DumpIoTest, F32RecordRoundTripsBitwise) {
  TempDir dir("roundtrip");
  const auto m0 = small_manifest();
  const auto rec = random_record(m0, 3);
  const auto m = write_dump(dir.path(), m0, {{{5, 0}, rec}});
  const auto back = read_record(read_manifest(dir.path()), 5, 0);
  ASSERT_EQ(back.q_vis.data.size(), rec.q_vis.data.size());
  EXPECT_EQ(std::memcmp(back.q_vis.data.data(), rec.q_vis.data.data(), rec.q_vis.data.size() * 4), 0);
  EXPECT_EQ(back, rec);

  const auto first = read_file_bytes(dir / record_file_name(5, 0));
  write_record(m, 5, 0, rec);
  EXPECT_EQ(read_file_bytes(dir / record_file_name(5, 0)), first);
}

TEST(DumpIoTest, F16RecordWithinQuantization) {
  auto m = small_manifest();
  m.dtype = DType::kF16;
  const auto rec = random_record(m, 4);
  const auto back = decode_record(m, encode_record(m, rec));
  for (std::size_t i = 0; i < rec.h_vis.data.size(); ++i) {
    const float v = rec.h_vis.data[i];
    EXPECT_EQ(back.h_vis.data[i], half_to_float(float_to_half(v)));
    EXPECT_LE(std::abs(back.h_vis.data[i] - v), std::abs(v) * 0x1.0p-11f + 0x1.0p-25f);
  }
}

TEST(DumpIoTest, NanIsRejectedAtWrite) {
  const auto m = small_manifest();
  auto rec = random_record(m, 5);
  rec.k_txt.data[2] = std::numeric_limits<float>::infinity();
  EXPECT_EQ(code_of([&] { encode_record(m, rec); }), ErrorCode::kNonFiniteData);
}

TEST(DumpIoTest, DecodeErrors) {
  const auto m = small_manifest();
  const auto rec = random_record(m, 6);

  // Drop h_vis: rebuild without it.
  std::vector<Chunk> chunks;
  auto add = [&](const char* n, const HeadTensor& t) {
    chunks.push_back({n, {static_cast<std::uint32_t>(t.heads), static_cast<std::uint32_t>(t.rows),
                          static_cast<std::uint32_t>(t.dim)}, t.data});
  };
  add("q_vis", rec.q_vis);
  add("k_vis", rec.k_vis);
  add("q_txt", rec.q_txt);
  add("k_txt", rec.k_txt);
  add("k_con", rec.k_con);
  add("h_con", *rec.h_con);
  EXPECT_EQ(code_of([&] { decode_record(m, encode_chunks(kDumpMagic, chunks, DType::kF32)); }),
            ErrorCode::kChunkMissing);

  // Wrong shape for h_vis.
  chunks.push_back({"h_vis", {2, 7, 4}, std::vector<float>(56, 0.0f)});
  EXPECT_EQ(code_of([&] { decode_record(m, encode_chunks(kDumpMagic, chunks, DType::kF32)); }),
            ErrorCode::kShapeMismatch);

  // Short payload.
  auto bytes = encode_record(m, rec);
  bytes.resize(bytes.size() - 8);
  EXPECT_EQ(code_of([&] { decode_record(m, bytes); }), ErrorCode::kCorruptPayload);

  // Wrong magic.
  auto magic = encode_record(m, rec);
  magic[0] = std::byte('X');
  EXPECT_EQ(code_of([&] { decode_record(m, magic); }), ErrorCode::kCorruptPayload);

  // Dtype differs from manifest.
  auto m16 = m;
  m16.dtype = DType::kF16;
  EXPECT_EQ(code_of([&] { decode_record(m16, encode_record(m, rec)); }), ErrorCode::kSchemaViolation);
}

TEST(DumpIoTest, NonFinitePayloadOnRead) {
  const auto m = small_manifest();
  auto bytes = encode_record(m, make_empty_record(m));
  // First payload float of q_vis: magic + name + dtype + ndim + 3 dims + len.
  const std::size_t off = 8 + 16 + 2 + 12 + 8;
  const float inf = std::numeric_limits<float>::infinity();
  std::memcpy(bytes.data() + off, &inf, 4);
  EXPECT_EQ(code_of([&] { decode_record(m, bytes); }), ErrorCode::kNonFiniteData);
}

TEST(DumpIoTest, GoldenEndianFixture) {
  const auto bytes = read_file_bytes(std::filesystem::path(IMAP_GOLDEN_DIR) / "endian_fixture.bin");
  const auto scan = scan_chunks(bytes, kDumpMagic);
  ASSERT_TRUE(scan.ok()) << scan.error;
  ASSERT_EQ(scan.chunks.size(), 2u);
  EXPECT_EQ(decode_payload(bytes, scan.chunks[0]), (std::vector<float>{1.0f, -2.5f, 0.15625f, 1024.0f}));
  EXPECT_EQ(scan.chunks[1].dtype, DType::kF16);
  EXPECT_EQ(decode_payload(bytes, scan.chunks[1]), (std::vector<float>{1.0f, -0.5f}));
}

TEST(DumpIoTest, TokenIndexConvention) {
  auto m = small_manifest();
  m.frames_F = 3;
  m.height_H = 4;
  m.width_W = 5;
  CounterRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = rng.below(3), y = rng.below(4), x = rng.below(5);
    auto rec = make_empty_record(m);
    const std::size_t p = f * 4 * 5 + y * 5 + x;
    rec.h_vis.row(1, p)[2] = 7.0f;
    const auto back = decode_record(m, encode_record(m, rec));
    std::size_t hits = 0, where = 0;
    for (std::size_t i = 0; i < back.h_vis.rows; ++i) {
      if (back.h_vis.row(1, i)[2] == 7.0f) {
        ++hits;
        where = i;
      }
    }
    ASSERT_EQ(hits, 1u);
    EXPECT_EQ(where / 20, f);
    EXPECT_EQ((where % 20) / 5, y);
    EXPECT_EQ(where % 5, x);
  }
}

TEST(DumpIoTest, ValidateSynthDumpAllPass) {
  TempDir dir("validate");
  synth::write_planted_dump(dir.path(), synth::generate_planted_dump(synth::preset_spec("combined"), 3));
  const auto report = validate_dump(dir.path());
  EXPECT_TRUE(report.ok);
  EXPECT_EQ(report.records.size(), 12u);
  for (const auto& r : report.records) {
    for (const auto& c : r.chunks) EXPECT_EQ(c.status, CheckStatus::kPass) << c.name;
  }
  EXPECT_EQ(read_manifest(dir.path()), synth::generate_planted_dump(synth::preset_spec("combined"), 3)
                                           .source.manifest());
}

TEST(DumpIoTest, ValidateFlagsExactlyTheTruncatedRecord) {
  TempDir dir("truncated");
  auto m = small_manifest();
  m.timesteps = {1, 2};
  m.layers = {0, 1};
  std::map<RecordKey, LayerRecord> recs;
  for (int t : m.timesteps) {
    for (int l : m.layers) recs[{t, l}] = random_record(m, static_cast<std::uint64_t>(t * 10 + l));
  }
  write_dump(dir.path(), m, recs);
  const auto victim = dir / record_file_name(2, 0);
  auto bytes = read_file_bytes(victim);
  bytes.resize(bytes.size() / 2);
  write_file_bytes(victim, bytes);

  const auto report = validate_dump(dir.path());
  EXPECT_FALSE(report.ok);
  ASSERT_EQ(report.failed_records(), 1u);
  for (const auto& r : report.records) {
    EXPECT_EQ(r.ok, !(r.key == RecordKey{2, 0}));
  }
}

TEST(DumpIoTest, CrossDumpMarksHconAbsent) {
  TempDir dir("cross");
  const auto m = small_manifest(AttentionKind::kCross);
  const auto rec = random_record(m, 8);
  EXPECT_FALSE(rec.h_con.has_value());
  write_dump(dir.path(), m, {{{5, 0}, rec}});
  const auto report = validate_dump(dir.path());
  EXPECT_TRUE(report.ok);
  const auto& last = report.records.at(0).chunks.back();
  EXPECT_EQ(last.name, "h_con");
  EXPECT_EQ(last.status, CheckStatus::kAbsent);
  EXPECT_EQ(last.detail, "absent (cross mode)");
  EXPECT_EQ(read_record(read_manifest(dir.path()), 5, 0), rec);
}

TEST(DumpIoTest, ValidateMissingManifestIsAReportEntry) {
  TempDir dir("empty");
  const auto report = validate_dump(dir.path());
  EXPECT_FALSE(report.ok);
  ASSERT_EQ(report.manifest_issues.size(), 1u);
  EXPECT_NE(report.manifest_issues[0].find("MissingFile"), std::string::npos);
}

TEST(DumpIoTest, MemorySourceMatchesDirectorySource) {
  TempDir dir("sources");
  const auto dump = synth::generate_planted_dump(synth::preset_spec("planted-surrogate"), 9);
  synth::write_planted_dump(dir.path(), dump);
  DirectorySource disk(dir.path());
  for (const auto& [key, rec] : dump.source.records()) {
    EXPECT_EQ(disk.load(key.timestep, key.layer), rec);
  }
  EXPECT_EQ(code_of([&] { dump.source.load(12345, 0); }), ErrorCode::kMissingFile);
}
