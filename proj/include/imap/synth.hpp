#pragma once

// Deterministic synthetic dumps with planted ground truth: attention heads
// with a known second eigenvalue, a boosted surrogate token per frame, motion
// heads whose embeddings cluster by frame, and a moving square region.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "imap/dumpio.hpp"

namespace imap::synth {

struct SynthSpec {
  std::string preset = "combined";
  int frames = 4;
  int height = 4;
  int width = 4;
  int head_dim = 80;
  int heads = 8;
  int layers = 3;
  int timesteps = 4;
  int text_tokens = 4;
  std::vector<std::string> concepts{"motion"};
  int temporal_compression = 4;
  int spatial_patch = 8;
  DType dtype = DType::kF32;

  bool plant_spectrum = true;
  bool plant_surrogate = true;
  bool plant_motion = true;

  // Planted epsilon ranges; lambda2 = 1 - eps. Layers with index % 3 == 2 are
  // "uninformative" (no motion heads, low lambda2) when there are at least
  // three layers and spectra are planted.
  double eps_min = 0.05;
  double eps_max = 0.25;
  double eps_uninformative_min = 0.5;
  double eps_uninformative_max = 0.8;

  double spacing = 5.0;           // frame-mean separation in units of sigma
  double surrogate_margin = 0.5;  // QK-score lead of the planted token
  double mask_strength = 2.0;     // offset along the region direction
  int motion_heads_per_record = 2;
};

// Throws SpecError for an unknown preset name.
SynthSpec preset_spec(std::string_view preset);

// Parses "F,H,W,d,heads,layers,timesteps" into `spec`.
void apply_geometry(SynthSpec& spec, std::string_view geometry);

// Throws SpecError when the spec cannot be realized.
void check_spec(const SynthSpec& spec);

bool is_informative_layer(const SynthSpec& spec, int layer);

struct SurrogateKey {
  int timestep = 0;
  int layer = 0;
  int head = 0;
  int frame = 0;
  std::string concept_name;
  auto operator<=>(const SurrogateKey&) const = default;
};

struct MaskVolume {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> cells;  // 0 or 1, frame-major

  bool at(std::size_t f, std::size_t y, std::size_t x) const {
    return cells[(f * height + y) * width + x] != 0;
  }
  bool operator==(const MaskVolume&) const = default;
};

struct PlantedTruth {
  std::uint64_t seed = 0;
  int num_heads = 0;
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::map<SurrogateKey, std::uint32_t> surrogate_index;
  std::map<dumpio::RecordKey, std::vector<int>> motion_heads;  // sorted
  MaskVolume motion_mask;
  std::map<std::pair<int, int>, double> planted_lambda2;  // (layer, head)

  bool operator==(const PlantedTruth&) const = default;
};

struct PlantedDump {
  dumpio::MemorySource source;
  PlantedTruth truth;
};

// Moving square of side max(1, H/2) x max(1, W/2), sliding left to right.
MaskVolume moving_square(std::size_t frames, std::size_t height, std::size_t width);

PlantedDump generate_planted_dump(const SynthSpec& spec, std::uint64_t seed);

inline constexpr const char* kTruthName = "truth.json";

// Writes the dump plus truth.json into `directory`.
void write_planted_dump(const std::filesystem::path& directory, const PlantedDump& dump);

std::string truth_to_json(const PlantedTruth& truth);
PlantedTruth truth_from_json(const std::string& text);
void write_truth(const std::filesystem::path& path, const PlantedTruth& truth);
PlantedTruth read_truth(const std::filesystem::path& path);

}  // namespace imap::synth
