#include "imap/dumpio.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "imap/error.hpp"

namespace imap::dumpio {

using nlohmann::json;

namespace {

[[noreturn]] void schema(const std::string& msg) { throw Error(ErrorCode::kSchemaViolation, msg); }

template <typename T>
T field(const json& doc, const char* key) {
  if (!doc.contains(key)) schema(std::string("manifest field '") + key + "' is missing");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    schema(std::string("manifest field '") + key + "' has the wrong type");
  }
}

bool strictly_ascending(const std::vector<int>& v) {
  return std::adjacent_find(v.begin(), v.end(), std::greater_equal<int>()) == v.end();
}

std::filesystem::path manifest_path_for(const std::filesystem::path& path) {
  std::error_code ec;
  if (std::filesystem::is_directory(path, ec)) return path / kManifestName;
  return path;
}

// Parses and checks the manifest document without looking at record files.
DumpManifest load_manifest_document(const std::filesystem::path& path) {
  const auto file = manifest_path_for(path);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(file, ec)) {
    throw Error(ErrorCode::kMissingFile, "no manifest at " + file.string());
  }
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  DumpManifest m = manifest_from_json(ss.str());
  m.directory = file.parent_path();
  return m;
}

HeadTensor take_chunk(const DumpManifest& manifest, std::span<const std::byte> bytes,
                      const ChunkHeader& header, std::size_t rows) {
  const auto heads = static_cast<std::size_t>(manifest.num_heads);
  const auto d = static_cast<std::size_t>(manifest.head_dim_d);
  if (header.dims.size() != 3 || header.dims[0] != heads || header.dims[1] != rows ||
      header.dims[2] != d) {
    std::ostringstream os;
    os << "chunk '" << header.name << "' has shape [";
    for (std::size_t i = 0; i < header.dims.size(); ++i) os << (i ? "," : "") << header.dims[i];
    os << "], expected [" << heads << "," << rows << "," << d << "]";
    throw Error(ErrorCode::kShapeMismatch, os.str());
  }
  if (header.dtype != manifest.dtype) {
    schema("chunk '" + header.name + "' dtype differs from the manifest dtype");
  }
  HeadTensor t(heads, rows, d);
  t.data = decode_payload(bytes, header);
  return t;
}

std::size_t expected_rows(const DumpManifest& m, std::string_view name) {
  if (name == "q_vis" || name == "k_vis" || name == "h_vis") return m.tokens();
  if (name == "q_txt" || name == "k_txt") return static_cast<std::size_t>(m.text_token_count);
  return m.concept_count();
}

}  // namespace

std::optional<std::size_t> DumpManifest::concept_index(const std::string& name) const {
  auto it = std::find(concepts.begin(), concepts.end(), name);
  if (it == concepts.end()) return std::nullopt;
  return static_cast<std::size_t>(it - concepts.begin());
}

bool DumpManifest::operator==(const DumpManifest& o) const {
  return format_version == o.format_version && attention_kind == o.attention_kind &&
         timesteps == o.timesteps && layers == o.layers && num_heads == o.num_heads &&
         frames_F == o.frames_F && height_H == o.height_H && width_W == o.width_W &&
         head_dim_d == o.head_dim_d && text_token_count == o.text_token_count &&
         concepts == o.concepts && temporal_compression == o.temporal_compression &&
         spatial_patch == o.spatial_patch && dtype == o.dtype && records == o.records;
}

LayerRecord make_empty_record(const DumpManifest& m) {
  const auto heads = static_cast<std::size_t>(m.num_heads);
  const auto d = static_cast<std::size_t>(m.head_dim_d);
  const auto P = m.tokens();
  const auto T = static_cast<std::size_t>(m.text_token_count);
  const auto C = m.concept_count();
  LayerRecord r{HeadTensor(heads, P, d), HeadTensor(heads, P, d), HeadTensor(heads, T, d),
                HeadTensor(heads, T, d), HeadTensor(heads, C, d), HeadTensor(heads, P, d),
                std::nullopt};
  if (m.attention_kind == AttentionKind::kJoint) r.h_con = HeadTensor(heads, C, d);
  return r;
}

void check_manifest(const DumpManifest& m) {
  if (m.format_version != kFormatVersion) {
    schema("unsupported format_version " + std::to_string(m.format_version));
  }
  for (auto [value, name] : {std::pair{m.frames_F, "frames_F"}, {m.height_H, "height_H"},
                             {m.width_W, "width_W"}, {m.head_dim_d, "head_dim_d"},
                             {m.num_heads, "num_heads"},
                             {m.temporal_compression, "temporal_compression"},
                             {m.spatial_patch, "spatial_patch"}}) {
    if (value <= 0) {
      throw Error(ErrorCode::kGeometryError, std::string(name) + " must be positive");
    }
  }
  if (m.text_token_count < 0) {
    throw Error(ErrorCode::kGeometryError, "text_token_count must be non-negative");
  }
  const std::uint64_t P = static_cast<std::uint64_t>(m.frames_F) * m.height_H * m.width_W;
  if (P > std::numeric_limits<std::uint32_t>::max() ||
      P * static_cast<std::uint64_t>(m.head_dim_d) * m.num_heads >
          std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::kGeometryError, "token count P=F*H*W overflows the chunk format");
  }
  if (!strictly_ascending(m.timesteps)) schema("timesteps must be strictly ascending");
  if (!strictly_ascending(m.layers)) schema("layers must be strictly ascending");
  for (const auto& [key, path] : m.records) {
    if (!std::binary_search(m.timesteps.begin(), m.timesteps.end(), key.timestep) ||
        !std::binary_search(m.layers.begin(), m.layers.end(), key.layer)) {
      schema("record (" + std::to_string(key.timestep) + "," + std::to_string(key.layer) +
             ") is outside timesteps x layers");
    }
    if (path.empty()) schema("record path is empty");
  }
}

void check_record_shape(const DumpManifest& m, const LayerRecord& r) {
  auto check = [&](const HeadTensor& t, std::string_view name) {
    const auto rows = expected_rows(m, name);
    if (t.heads != static_cast<std::size_t>(m.num_heads) || t.rows != rows ||
        t.dim != static_cast<std::size_t>(m.head_dim_d) ||
        t.data.size() != t.heads * t.rows * t.dim) {
      throw Error(ErrorCode::kShapeMismatch,
                  "record tensor '" + std::string(name) + "' disagrees with manifest geometry");
    }
  };
  check(r.q_vis, "q_vis");
  check(r.k_vis, "k_vis");
  check(r.q_txt, "q_txt");
  check(r.k_txt, "k_txt");
  check(r.k_con, "k_con");
  check(r.h_vis, "h_vis");
  if (r.h_con) {
    check(*r.h_con, "h_con");
  } else if (m.attention_kind == AttentionKind::kJoint) {
    throw Error(ErrorCode::kShapeMismatch, "joint-attention record requires h_con");
  }
}

std::string manifest_to_json(const DumpManifest& m) {
  json doc;
  doc["format_version"] = m.format_version;
  doc["attention_kind"] = m.attention_kind == AttentionKind::kJoint ? "joint" : "cross";
  doc["timesteps"] = m.timesteps;
  doc["layers"] = m.layers;
  doc["num_heads"] = m.num_heads;
  doc["frames_F"] = m.frames_F;
  doc["height_H"] = m.height_H;
  doc["width_W"] = m.width_W;
  doc["head_dim_d"] = m.head_dim_d;
  doc["text_token_count"] = m.text_token_count;
  doc["concepts"] = m.concepts;
  doc["temporal_compression"] = m.temporal_compression;
  doc["spatial_patch"] = m.spatial_patch;
  doc["dtype"] = m.dtype == DType::kF16 ? "f16" : "f32";
  json records = json::array();
  for (const auto& [key, path] : m.records) {
    records.push_back({{"timestep", key.timestep}, {"layer", key.layer}, {"path", path}});
  }
  doc["records"] = records;
  return doc.dump(2) + "\n";
}

DumpManifest manifest_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    schema(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) schema("manifest must be a JSON object");

  DumpManifest m;
  m.format_version = field<int>(doc, "format_version");
  const auto kind = field<std::string>(doc, "attention_kind");
  if (kind == "joint") {
    m.attention_kind = AttentionKind::kJoint;
  } else if (kind == "cross") {
    m.attention_kind = AttentionKind::kCross;
  } else {
    schema("attention_kind must be 'joint' or 'cross'");
  }
  m.timesteps = field<std::vector<int>>(doc, "timesteps");
  m.layers = field<std::vector<int>>(doc, "layers");
  m.num_heads = field<int>(doc, "num_heads");
  m.frames_F = field<int>(doc, "frames_F");
  m.height_H = field<int>(doc, "height_H");
  m.width_W = field<int>(doc, "width_W");
  m.head_dim_d = field<int>(doc, "head_dim_d");
  m.text_token_count = field<int>(doc, "text_token_count");
  m.concepts = field<std::vector<std::string>>(doc, "concepts");
  m.temporal_compression = field<int>(doc, "temporal_compression");
  m.spatial_patch = field<int>(doc, "spatial_patch");
  const auto dtype = field<std::string>(doc, "dtype");
  if (dtype == "f32") {
    m.dtype = DType::kF32;
  } else if (dtype == "f16") {
    m.dtype = DType::kF16;
  } else {
    schema("dtype must be 'f32' or 'f16'");
  }
  const auto records = field<json>(doc, "records");
  if (!records.is_array()) schema("records must be an array");
  for (const auto& entry : records) {
    if (!entry.is_object()) schema("record entries must be objects");
    RecordKey key{field<int>(entry, "timestep"), field<int>(entry, "layer")};
    if (!m.records.emplace(key, field<std::string>(entry, "path")).second) {
      schema("duplicate record entry");
    }
  }
  check_manifest(m);
  return m;
}

DumpManifest read_manifest(const std::filesystem::path& path) {
  DumpManifest m = load_manifest_document(path);
  for (const auto& [key, rel] : m.records) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(m.directory / rel, ec)) {
      throw Error(ErrorCode::kMissingFile, "record file missing: " + (m.directory / rel).string());
    }
  }
  return m;
}

void write_manifest(const DumpManifest& m) {
  check_manifest(m);
  const std::string text = manifest_to_json(m);
  const auto* begin = reinterpret_cast<const std::byte*>(text.data());
  write_file_bytes(m.directory / kManifestName, std::span(begin, text.size()));
}

std::vector<std::byte> encode_record(const DumpManifest& m, const LayerRecord& r) {
  check_record_shape(m, r);
  auto chunk = [](std::string_view name, const HeadTensor& t) {
    return Chunk{std::string(name),
                 {static_cast<std::uint32_t>(t.heads), static_cast<std::uint32_t>(t.rows),
                  static_cast<std::uint32_t>(t.dim)},
                 t.data};
  };
  std::vector<Chunk> chunks = {chunk("q_vis", r.q_vis), chunk("k_vis", r.k_vis),
                               chunk("q_txt", r.q_txt), chunk("k_txt", r.k_txt),
                               chunk("k_con", r.k_con), chunk("h_vis", r.h_vis)};
  if (r.h_con) chunks.push_back(chunk("h_con", *r.h_con));
  return encode_chunks(kDumpMagic, chunks, m.dtype);
}

LayerRecord decode_record(const DumpManifest& m, std::span<const std::byte> bytes) {
  const ChunkScan scan = scan_chunks(bytes, kDumpMagic);
  if (!scan.ok()) throw Error(ErrorCode::kCorruptPayload, scan.error);

  auto find = [&](std::string_view name) -> const ChunkHeader* {
    for (const auto& h : scan.chunks) {
      if (h.name == name) return &h;
    }
    return nullptr;
  };
  auto required = [&](std::string_view name) -> HeadTensor {
    const ChunkHeader* h = find(name);
    if (!h) throw Error(ErrorCode::kChunkMissing, "chunk '" + std::string(name) + "' is missing");
    return take_chunk(m, bytes, *h, expected_rows(m, name));
  };

  LayerRecord r;
  r.q_vis = required("q_vis");
  r.k_vis = required("k_vis");
  r.q_txt = required("q_txt");
  r.k_txt = required("k_txt");
  r.k_con = required("k_con");
  r.h_vis = required("h_vis");
  if (m.attention_kind == AttentionKind::kJoint) {
    r.h_con = required("h_con");
  } else if (const ChunkHeader* h = find("h_con")) {
    r.h_con = take_chunk(m, bytes, *h, m.concept_count());
  }
  return r;
}

std::string record_file_name(int timestep, int layer) {
  return "t" + std::to_string(timestep) + "_l" + std::to_string(layer) + ".bin";
}

LayerRecord read_record(const DumpManifest& m, int timestep, int layer) {
  auto it = m.records.find({timestep, layer});
  if (it == m.records.end()) {
    throw Error(ErrorCode::kMissingFile, "manifest has no record for timestep " +
                                             std::to_string(timestep) + ", layer " +
                                             std::to_string(layer));
  }
  return decode_record(m, read_file_bytes(m.directory / it->second));
}

void write_record(const DumpManifest& m, int timestep, int layer, const LayerRecord& r) {
  auto it = m.records.find({timestep, layer});
  if (it == m.records.end()) {
    throw Error(ErrorCode::kInvalidArgument, "manifest has no record slot for timestep " +
                                                 std::to_string(timestep) + ", layer " +
                                                 std::to_string(layer));
  }
  write_file_bytes(m.directory / it->second, encode_record(m, r));
}

// ---- validation ----

std::size_t ValidationReport::failed_records() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const RecordCheck& r) { return !r.ok; }));
}

std::string ValidationReport::to_json() const {
  json doc;
  doc["ok"] = ok;
  doc["manifest_issues"] = manifest_issues;
  json recs = json::array();
  for (const auto& r : records) {
    json chunks = json::array();
    for (const auto& c : r.chunks) {
      const char* status = c.status == CheckStatus::kPass   ? "pass"
                           : c.status == CheckStatus::kFail ? "fail"
                                                            : "absent";
      chunks.push_back({{"name", c.name}, {"status", status}, {"detail", c.detail}});
    }
    recs.push_back({{"timestep", r.key.timestep},
                    {"layer", r.key.layer},
                    {"path", r.path},
                    {"ok", r.ok},
                    {"chunks", chunks}});
  }
  doc["records"] = recs;
  doc["failed_records"] = failed_records();
  return doc.dump(2) + "\n";
}

ValidationReport validate_dump(const std::filesystem::path& path) {
  ValidationReport report;
  DumpManifest m;
  try {
    m = load_manifest_document(path);
  } catch (const Error& e) {
    report.ok = false;
    report.manifest_issues.push_back(std::string(e.category()) + ": " + e.what());
    return report;
  }

  for (const auto& [key, rel] : m.records) {
    RecordCheck rc;
    rc.key = key;
    rc.path = rel;
    std::vector<std::byte> bytes;
    try {
      bytes = read_file_bytes(m.directory / rel);
    } catch (const Error& e) {
      rc.ok = false;
      rc.chunks.push_back({"file", CheckStatus::kFail, std::string(e.category()) + ": " + e.what()});
      report.records.push_back(std::move(rc));
      continue;
    }
    const ChunkScan scan = scan_chunks(bytes, kDumpMagic);
    for (std::string_view name : kChunkNames) {
      ChunkCheck cc{std::string(name), CheckStatus::kPass, ""};
      const ChunkHeader* header = nullptr;
      for (const auto& h : scan.chunks) {
        if (h.name == name) header = &h;
      }
      if (header) {
        try {
          take_chunk(m, bytes, *header, expected_rows(m, name));
        } catch (const Error& e) {
          cc.status = CheckStatus::kFail;
          cc.detail = std::string(e.category()) + ": " + e.what();
        }
      } else if (name == "h_con" && m.attention_kind == AttentionKind::kCross) {
        cc.status = CheckStatus::kAbsent;
        cc.detail = "absent (cross mode)";
      } else {
        cc.status = CheckStatus::kFail;
        cc.detail = scan.ok() ? "ChunkMissing: chunk is missing"
                              : "CorruptPayload: " + scan.error;
      }
      if (cc.status == CheckStatus::kFail) rc.ok = false;
      rc.chunks.push_back(std::move(cc));
    }
    if (!scan.ok() && rc.ok) {
      // framing error after all required chunks, e.g. trailing garbage
      rc.ok = false;
      rc.chunks.push_back({"framing", CheckStatus::kFail, "CorruptPayload: " + scan.error});
    }
    report.records.push_back(std::move(rc));
  }
  report.ok = report.manifest_issues.empty() && report.failed_records() == 0;
  return report;
}

// ---- sources ----

MemorySource::MemorySource(DumpManifest manifest, std::map<RecordKey, LayerRecord> records)
    : manifest_(std::move(manifest)), records_(std::move(records)) {
  for (const auto& [key, rec] : records_) {
    manifest_.records.try_emplace(key, record_file_name(key.timestep, key.layer));
  }
  check_manifest(manifest_);
  for (const auto& [key, rec] : records_) check_record_shape(manifest_, rec);
}

LayerRecord MemorySource::load(int timestep, int layer) const {
  auto it = records_.find({timestep, layer});
  if (it == records_.end()) {
    throw Error(ErrorCode::kMissingFile, "no in-memory record for timestep " +
                                             std::to_string(timestep) + ", layer " +
                                             std::to_string(layer));
  }
  return it->second;
}

DumpManifest write_dump(const std::filesystem::path& directory, DumpManifest manifest,
                        const std::map<RecordKey, LayerRecord>& records) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + directory.string());
  manifest.directory = directory;
  manifest.records.clear();
  for (const auto& [key, rec] : records) {
    manifest.records[key] = record_file_name(key.timestep, key.layer);
  }
  check_manifest(manifest);
  for (const auto& [key, rec] : records) write_record(manifest, key.timestep, key.layer, rec);
  write_manifest(manifest);
  return manifest;
}

}  // namespace imap::dumpio
