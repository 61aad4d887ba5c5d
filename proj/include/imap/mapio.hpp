#pragma once

// Saliency map files: chunked f32 volumes under magic IMAPMAP1, one chunk per
// concept, plus a JSON sidecar (`<file>.json`) with concept names, latent
// geometry and provenance.

#include <filesystem>
#include <string>
#include <vector>

#include "imap/saliency.hpp"

namespace imap::mapio {

inline constexpr std::string_view kMapMagic = "IMAPMAP1";

struct MapFile {
  std::vector<saliency::SaliencyVolume> volumes;
  int temporal_compression = 1;
  int spatial_patch = 1;
  std::string provenance_json;  // as stored in the sidecar
};

std::filesystem::path sidecar_path(const std::filesystem::path& map_path);

std::string provenance_to_json(const saliency::Provenance& provenance);

void write_map_file(const std::filesystem::path& path,
                    const std::vector<saliency::SaliencyVolume>& volumes, int temporal_compression,
                    int spatial_patch);

MapFile read_map_file(const std::filesystem::path& path);

}  // namespace imap::mapio
