#pragma once

// Attention dump format. A dump is a directory holding `manifest.json` and one
// chunked binary file (magic IMAPDMP1) per captured (timestep, layer).

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imap/chunkio.hpp"
#include "imap/tensor.hpp"

namespace imap::dumpio {

inline constexpr std::string_view kDumpMagic = "IMAPDMP1";
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr int kFormatVersion = 1;

enum class AttentionKind { kJoint, kCross };

struct RecordKey {
  int timestep = 0;
  int layer = 0;
  auto operator<=>(const RecordKey&) const = default;
};

struct DumpManifest {
  int format_version = kFormatVersion;
  AttentionKind attention_kind = AttentionKind::kJoint;
  std::vector<int> timesteps;
  std::vector<int> layers;
  int num_heads = 0;
  int frames_F = 0;
  int height_H = 0;
  int width_W = 0;
  int head_dim_d = 0;
  int text_token_count = 0;
  std::vector<std::string> concepts;
  int temporal_compression = 1;
  int spatial_patch = 1;
  DType dtype = DType::kF32;
  std::map<RecordKey, std::string> records;

  // Directory the record paths resolve against. Not serialized.
  std::filesystem::path directory;

  std::size_t tokens() const {
    return static_cast<std::size_t>(frames_F) * height_H * width_W;
  }
  std::size_t concept_count() const { return concepts.size(); }
  std::optional<std::size_t> concept_index(const std::string& name) const;

  bool operator==(const DumpManifest& o) const;
};

struct LayerRecord {
  HeadTensor q_vis;  // [heads, P, d]
  HeadTensor k_vis;
  HeadTensor q_txt;  // [heads, T, d]
  HeadTensor k_txt;
  HeadTensor k_con;  // [heads, C, d]
  HeadTensor h_vis;  // [heads, P, d]
  std::optional<HeadTensor> h_con;  // absent for cross-attention dumps

  bool operator==(const LayerRecord&) const = default;
};

// Chunk names, in the order the writer emits them.
inline constexpr std::array<std::string_view, 7> kChunkNames = {
    "q_vis", "k_vis", "q_txt", "k_txt", "k_con", "h_vis", "h_con"};

// Returns a record of zeros shaped for `manifest`.
LayerRecord make_empty_record(const DumpManifest& manifest);

// Throws GeometryError / SchemaViolation when the manifest is internally
// inconsistent. Does not touch the filesystem.
void check_manifest(const DumpManifest& manifest);

// Throws ShapeMismatch if any tensor disagrees with the manifest geometry.
void check_record_shape(const DumpManifest& manifest, const LayerRecord& record);

std::string manifest_to_json(const DumpManifest& manifest);
DumpManifest manifest_from_json(const std::string& text);

// `path` may name the dump directory or the manifest file itself. Resolves
// every record against the filesystem.
DumpManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DumpManifest& manifest);

std::vector<std::byte> encode_record(const DumpManifest& manifest, const LayerRecord& record);
LayerRecord decode_record(const DumpManifest& manifest, std::span<const std::byte> bytes);

LayerRecord read_record(const DumpManifest& manifest, int timestep, int layer);
void write_record(const DumpManifest& manifest, int timestep, int layer, const LayerRecord& record);

// Default record file name for (timestep, layer).
std::string record_file_name(int timestep, int layer);

// ---- validation ----

enum class CheckStatus { kPass, kFail, kAbsent };

struct ChunkCheck {
  std::string name;
  CheckStatus status = CheckStatus::kPass;
  std::string detail;
};

struct RecordCheck {
  RecordKey key;
  std::string path;
  bool ok = true;
  std::vector<ChunkCheck> chunks;
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> manifest_issues;
  std::vector<RecordCheck> records;

  std::size_t failed_records() const;
  std::string to_json() const;
};

ValidationReport validate_dump(const std::filesystem::path& path);

// ---- record sources ----

// Read access to a dump's records. Implementations must be safe for
// concurrent `load` calls.
class RecordSource {
 public:
  virtual ~RecordSource() = default;
  virtual const DumpManifest& manifest() const = 0;
  virtual LayerRecord load(int timestep, int layer) const = 0;
};

class DirectorySource : public RecordSource {
 public:
  explicit DirectorySource(const std::filesystem::path& path) : manifest_(read_manifest(path)) {}
  const DumpManifest& manifest() const override { return manifest_; }
  LayerRecord load(int timestep, int layer) const override {
    return read_record(manifest_, timestep, layer);
  }

 private:
  DumpManifest manifest_;
};

class MemorySource : public RecordSource {
 public:
  MemorySource(DumpManifest manifest, std::map<RecordKey, LayerRecord> records);
  const DumpManifest& manifest() const override { return manifest_; }
  LayerRecord load(int timestep, int layer) const override;
  const std::map<RecordKey, LayerRecord>& records() const { return records_; }

 private:
  DumpManifest manifest_;
  std::map<RecordKey, LayerRecord> records_;
};

// Writes manifest and every record into `directory` (created if needed),
// assigning default record file names.
DumpManifest write_dump(const std::filesystem::path& directory, DumpManifest manifest,
                        const std::map<RecordKey, LayerRecord>& records);

}  // namespace imap::dumpio
