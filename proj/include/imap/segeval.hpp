#pragma once

// Label prediction from concept maps and the segmentation metrics: mIoU,
// video consistency (mVC_n) and point-location accuracy.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imap/tensor.hpp"

namespace imap::segeval {

inline constexpr std::uint16_t kIgnoreIndex = 65535;

struct LabelVolume {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> labels;  // frame-major
  std::vector<std::string> class_names;
  std::uint16_t ignore_index = kIgnoreIndex;

  LabelVolume() = default;
  LabelVolume(std::size_t f, std::size_t h, std::size_t w, std::uint16_t fill = 0)
      : frames(f), height(h), width(w), labels(f * h * w, fill) {}

  std::size_t frame_size() const { return height * width; }
  std::size_t index(std::size_t f, std::size_t y, std::size_t x) const {
    return (f * height + y) * width + x;
  }
  std::uint16_t at(std::size_t f, std::size_t y, std::size_t x) const { return labels[index(f, y, x)]; }
  std::uint16_t& at(std::size_t f, std::size_t y, std::size_t x) { return labels[index(f, y, x)]; }
  bool same_shape(const LabelVolume& o) const {
    return frames == o.frames && height == o.height && width == o.width;
  }
};

enum class Interp { kNearest, kBilinear };

// Temporal nearest replication by `temporal_compression`; spatial block
// replication (nearest) or corner-aligned bilinear by `spatial_patch`.
Volume upsample(const Volume& volume, int temporal_compression, int spatial_patch, Interp interp);

// Per-voxel argmax over concept volumes; ties go to the lower concept index.
LabelVolume predict_labels(const std::vector<Volume>& volumes,
                           std::vector<std::string> class_names = {});

struct IouResult {
  double miou = 0.0;
  std::map<std::uint16_t, double> per_class;  // classes with nonzero union
};

// Voxels whose ground truth or prediction equals the ignore index are skipped.
IouResult miou(const LabelVolume& pred, const LabelVolume& gt);

struct MvcResult {
  double value = 0.0;
  std::size_t windows = 0;  // windows that contributed at least one class
};

MvcResult mvc(const LabelVolume& pred, const LabelVolume& gt, int window);

struct VideoPair {
  const LabelVolume* pred;
  const LabelVolume* gt;
};

// Intersections and unions summed over every video before the per-class ratio.
IouResult miou_videos(std::span<const VideoPair> videos);

// Mean over videos of the per-video mVC, in input order. Videos with no
// contributing window are skipped.
MvcResult mvc_videos(std::span<const VideoPair> videos, int window);

struct LatentPoint {
  std::size_t frame = 0;
  std::size_t y = 0;
  std::size_t x = 0;
};

// Centre of the latent cell in pixel/video-frame coordinates.
LatentPoint latent_to_pixel(LatentPoint latent, int temporal_compression, int spatial_patch);

// Argmax position of every frame of a latent volume (ties: lowest index).
std::vector<LatentPoint> frame_peaks(const Volume& volume);

struct PointQuery {
  std::string concept_name;
  LatentPoint peak;  // latent coordinates
};

// Fraction of peaks that land inside their concept's ground-truth mask.
double point_accuracy(std::span<const PointQuery> queries, const LabelVolume& gt,
                      int temporal_compression, int spatial_patch);

struct MetricReport {
  std::optional<IouResult> iou;
  std::map<int, MvcResult> mvc;
  std::optional<double> point_accuracy;
  std::vector<std::string> class_names;

  std::string to_json() const;
};

// `dir` holds labels.json (frames, height, width, class_names, ignore_index)
// and labels.u16 (raw little-endian u16, frame-major).
LabelVolume read_labels(const std::filesystem::path& dir);
void write_labels(const std::filesystem::path& dir, const LabelVolume& labels);

}  // namespace imap::segeval
