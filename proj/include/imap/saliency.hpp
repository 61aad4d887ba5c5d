#pragma once

// Text-surrogate selection, Gram-column saliency, and the aggregated concept
// maps (all-heads map and the motion-head restricted IMAP), plus the
// cross-attention and concept-attention baselines.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "imap/dumpio.hpp"
#include "imap/separation.hpp"
#include "imap/spectral.hpp"
#include "imap/tensor.hpp"

namespace imap::saliency {

struct Geometry {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t frame_size() const { return height * width; }
  std::size_t tokens() const { return frames * height * width; }
};

Geometry geometry_of(const dumpio::DumpManifest& manifest);

enum class SurrogateMode { kQkFrame, kQkVideo, kHiNorm };
enum class Assembly { kFrameSliced, kFullColumn };
enum class Normalization { kMinMax, kNone };
enum class MapMode { kAuto, kImap, kCrossAttn, kConceptAttn };
enum class HeadStrategy { kSeparation, kRandom, kAll };

std::string_view to_string(SurrogateMode m);
std::string_view to_string(Assembly a);
std::string_view to_string(Normalization n);
std::string_view to_string(MapMode m);
std::string_view to_string(HeadStrategy s);

// ---- per-head primitives ----

// Per frame, the visual token maximizing <q_p, k_c> (global index). Video mode
// takes one argmax over all tokens and repeats it. Ties go to the lower index.
std::vector<std::uint32_t> qk_match_surrogates(std::span<const float> q_vis, std::size_t d,
                                               std::span<const float> concept_key,
                                               const Geometry& geo, SurrogateMode mode);

// Per frame, the visual token with the largest embedding norm.
std::vector<std::uint32_t> hinorm_surrogates(std::span<const float> h_vis, std::size_t d,
                                             const Geometry& geo);

// One Gram column per surrogate, assembled to a [F, H, W] volume.
// frame_sliced: frame i uses <h_p, h_{s_i}> for its own tokens.
// full_column: mean over i of the whole column <h_., h_{s_i}>.
Volume gram_column_map(std::span<const float> h_vis, std::size_t d,
                       std::span<const std::uint32_t> surrogates, const Geometry& geo,
                       Assembly assembly);

// minmax: affine rescale to [0, 1]; a constant volume becomes all zeros.
Volume normalize_map(const Volume& volume, Normalization method);

// Per-voxel softmax across concepts (max-subtracted).
std::vector<Volume> softmax_over_concepts(const std::vector<Volume>& volumes);

// ---- aggregation ----

struct LayerSpec {
  bool automatic = true;
  double threshold = spectral::kDefaultThreshold;
  std::vector<int> explicit_layers;
};

struct MapRequest {
  std::vector<std::string> concepts;
  MapMode mode = MapMode::kImap;
  LayerSpec layers;
  std::optional<std::vector<int>> timesteps;  // unset: default window
  int top_k = separation::kDefaultTopK;
  HeadStrategy head_strategy = HeadStrategy::kSeparation;
  std::uint64_t random_seed = 0;
  separation::Metric metric = separation::Metric::kChi;
  Normalization per_head_normalization = Normalization::kMinMax;
  bool apply_softmax_over_concepts = false;
  Assembly assembly = Assembly::kFrameSliced;
  SurrogateMode surrogate = SurrogateMode::kQkFrame;
  spectral::Lambda2Options lambda2;
};

struct Provenance {
  MapMode mode = MapMode::kImap;
  std::vector<int> timesteps;
  std::vector<int> layers;
  std::map<dumpio::RecordKey, std::vector<int>> heads;  // sorted heads used per record
  Normalization normalization = Normalization::kMinMax;
  Assembly assembly = Assembly::kFrameSliced;
  SurrogateMode surrogate = SurrogateMode::kQkFrame;
  HeadStrategy head_strategy = HeadStrategy::kSeparation;
  separation::Metric metric = separation::Metric::kChi;
  int top_k = 0;
  bool softmax = false;
  std::optional<double> layer_threshold;
  std::map<int, double> layer_lambda2;  // filled when layers were auto-selected
  std::size_t head_map_count = 0;
};

struct SaliencyVolume {
  std::string concept_name;
  Volume values;
  Provenance provenance;
};

// The earliest 30% of the dump's timesteps are dropped (at least one kept).
std::vector<int> default_timesteps(const std::vector<int>& timesteps);

// Dispatches on request.mode.
std::vector<SaliencyVolume> compute_map(const dumpio::RecordSource& source,
                                        const MapRequest& request);

std::vector<SaliencyVolume> cross_attention_map(const dumpio::RecordSource& source,
                                                const MapRequest& request);
std::vector<SaliencyVolume> concept_attention_map(const dumpio::RecordSource& source,
                                                  const MapRequest& request);

}  // namespace imap::saliency
