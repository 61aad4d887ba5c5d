#include "imap/mapio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "imap/chunkio.hpp"
#include "imap/error.hpp"

namespace imap::mapio {

using nlohmann::json;

namespace {

std::string chunk_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "map_%04zu", i);
  return buf;
}

json provenance_doc(const saliency::Provenance& p) {
  json heads = json::array();
  for (const auto& [key, hs] : p.heads) {
    heads.push_back({{"timestep", key.timestep}, {"layer", key.layer}, {"heads", hs}});
  }
  json lambda = json::array();
  for (const auto& [layer, value] : p.layer_lambda2) {
    lambda.push_back({{"layer", layer}, {"lambda2", value}});
  }
  json doc{{"mode", saliency::to_string(p.mode)},
           {"timesteps", p.timesteps},
           {"layers", p.layers},
           {"heads", heads},
           {"normalization", saliency::to_string(p.normalization)},
           {"assembly", saliency::to_string(p.assembly)},
           {"surrogate", saliency::to_string(p.surrogate)},
           {"head_strategy", saliency::to_string(p.head_strategy)},
           {"metric", separation::metric_name(p.metric)},
           {"top_k", p.top_k},
           {"softmax", p.softmax},
           {"head_map_count", p.head_map_count},
           {"layer_lambda2", lambda}};
  doc["layer_threshold"] = p.layer_threshold ? json(*p.layer_threshold) : json(nullptr);
  return doc;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& map_path) {
  return std::filesystem::path(map_path.string() + ".json");
}

std::string provenance_to_json(const saliency::Provenance& provenance) {
  return provenance_doc(provenance).dump(2);
}

void write_map_file(const std::filesystem::path& path,
                    const std::vector<saliency::SaliencyVolume>& volumes, int temporal_compression,
                    int spatial_patch) {
  std::vector<Chunk> chunks;
  json concepts = json::array();
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    const auto& v = volumes[i].values;
    chunks.push_back({chunk_name(i),
                      {static_cast<std::uint32_t>(v.frames), static_cast<std::uint32_t>(v.height),
                       static_cast<std::uint32_t>(v.width)},
                      v.values});
    concepts.push_back({{"chunk", chunk_name(i)},
                        {"concept", volumes[i].concept_name},
                        {"provenance", provenance_doc(volumes[i].provenance)}});
  }
  write_file_bytes(path, encode_chunks(kMapMagic, chunks, DType::kF32));

  json side{{"format", "IMAPMAP1"},
            {"temporal_compression", temporal_compression},
            {"spatial_patch", spatial_patch},
            {"volumes", concepts}};
  const std::string text = side.dump(2) + "\n";
  write_file_bytes(sidecar_path(path),
                   std::span(reinterpret_cast<const std::byte*>(text.data()), text.size()));
}

MapFile read_map_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const auto scan = scan_chunks(bytes, kMapMagic);
  if (!scan.ok()) throw Error(ErrorCode::kCorruptPayload, path.string() + ": " + scan.error);

  const auto side_bytes = read_file_bytes(sidecar_path(path));
  json side;
  try {
    side = json::parse(std::string(reinterpret_cast<const char*>(side_bytes.data()), side_bytes.size()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, "map sidecar is not valid JSON: " + std::string(e.what()));
  }
  MapFile out;
  try {
    out.temporal_compression = side.at("temporal_compression").get<int>();
    out.spatial_patch = side.at("spatial_patch").get<int>();
    const auto& vols = side.at("volumes");
    if (vols.size() != scan.chunks.size()) {
      throw Error(ErrorCode::kSchemaViolation, "sidecar and map file disagree on volume count");
    }
    for (std::size_t i = 0; i < scan.chunks.size(); ++i) {
      const auto& h = scan.chunks[i];
      if (h.dims.size() != 3) throw Error(ErrorCode::kShapeMismatch, "map chunk must be 3-D");
      saliency::SaliencyVolume sv;
      sv.concept_name = vols[i].at("concept").get<std::string>();
      sv.values = Volume(h.dims[0], h.dims[1], h.dims[2]);
      sv.values.values = decode_payload(bytes, h);
      out.volumes.push_back(std::move(sv));
    }
    out.provenance_json = side.dump();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, "map sidecar field error: " + std::string(e.what()));
  }
  return out;
}

}  // namespace imap::mapio
