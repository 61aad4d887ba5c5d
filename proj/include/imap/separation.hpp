#pragma once

// Frame-wise cluster separation of visual-token embeddings and motion-head
// selection.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imap/dumpio.hpp"

namespace imap::separation {

enum class Metric { kChi, kDbi, kFisher, kSilhouette };

std::string_view metric_name(Metric metric);
std::optional<Metric> parse_metric(std::string_view name);

// True when a larger score means better separation.
constexpr bool higher_is_better(Metric metric) { return metric != Metric::kDbi; }

// Sentinel for zero within-cluster scatter under chi/fisher. Sorts above all
// finite scores.
inline constexpr double kPerfectSeparation = std::numeric_limits<double>::infinity();

inline constexpr int kDefaultTopK = 5;
inline constexpr std::size_t kSilhouettePointsPerCluster = 512;

// points: [n, d] row-major; labels[i] in [0, clusters). Every cluster must be
// non-empty and there must be at least two of them.
double separation_score(std::span<const float> points, std::size_t d,
                        std::span<const std::uint32_t> labels, std::size_t clusters,
                        Metric metric);

// Frames as clusters: token p belongs to frame p / frame_size.
double frame_separation_score(std::span<const float> points, std::size_t d, std::size_t frames,
                              std::size_t frame_size, Metric metric);

struct HeadSeparationReport {
  Metric metric = Metric::kChi;
  std::vector<double> scores;  // indexed by head
  std::vector<int> selected;   // best first
  int k = 0;
};

// Ranks heads best-first under the metric's orientation; ties by lower index.
std::vector<int> rank_heads(std::span<const double> scores, Metric metric);

HeadSeparationReport select_motion_heads(const dumpio::LayerRecord& record, Metric metric, int k,
                                         int frames, int height, int width);

// Uniform sample of k heads without replacement, in draw order.
std::vector<int> random_heads(int num_heads, int k, std::uint64_t seed);

std::string report_to_json(const HeadSeparationReport& report, int timestep, int layer);

}  // namespace imap::separation
