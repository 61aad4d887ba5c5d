#pragma once

// Heatmap colorization, frame overlays and the 12-frame three-panel grid.
// Images are written as binary PPM (P6) or PGM (P5), maxval 255.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "imap/tensor.hpp"

namespace imap::render {

struct FrameImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // [height, width, 3]

  FrameImage() = default;
  FrameImage(std::size_t w, std::size_t h, std::array<std::uint8_t, 3> fill = {0, 0, 0});

  std::uint8_t* pixel(std::size_t x, std::size_t y) { return rgb.data() + (y * width + x) * 3; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const {
    return rgb.data() + (y * width + x) * 3;
  }
  bool operator==(const FrameImage&) const = default;
};

enum class Colormap { kGray, kFire };

inline constexpr double kDefaultStrength = 0.6;
inline constexpr std::size_t kGridFrames = 12;
inline constexpr std::size_t kGutter = 2;

// Round half up.
std::uint8_t to_byte(double v);

const std::array<std::array<std::uint8_t, 3>, 256>& fire_table();

// `slice` is [height, width]; values are clamped to [0, 1].
FrameImage colorize(std::span<const float> slice, std::size_t height, std::size_t width,
                    Colormap colormap);

FrameImage overlay(const FrameImage& frame, std::span<const float> slice,
                   double strength = kDefaultStrength);

// Twelve indices spread evenly over [0, n).
std::vector<std::size_t> sample_indices(std::size_t n);

// Three panels (frames, heatmaps, overlays), each 4 rows x 3 columns.
FrameImage grid(std::span<const FrameImage> frames, std::span<const FrameImage> heatmaps,
                std::span<const FrameImage> overlays);

std::vector<std::byte> encode_ppm(const FrameImage& image);
// Single-channel output; takes the red channel.
std::vector<std::byte> encode_pgm(const FrameImage& image);
FrameImage decode_ppm(std::span<const std::byte> bytes);

void write_ppm(const std::filesystem::path& path, const FrameImage& image);
void write_pgm(const std::filesystem::path& path, const FrameImage& image);
FrameImage read_ppm(const std::filesystem::path& path);

// Every *.ppm in `dir`, in lexicographic file-name order.
std::vector<FrameImage> read_frame_directory(const std::filesystem::path& dir);

struct RenderOptions {
  Colormap colormap = Colormap::kFire;
  double strength = kDefaultStrength;
  bool grid = false;
};

struct RenderSummary {
  std::vector<std::filesystem::path> files;
};

// Upsamples each concept volume to pixel resolution and writes
// `<out>/<concept>/heatmap_NNNN`, `overlay_NNNN.ppm` (when frames are given)
// and `grid.ppm` (when requested).
RenderSummary render_volumes(const std::vector<std::pair<std::string, Volume>>& volumes,
                             int temporal_compression, int spatial_patch,
                             const std::vector<FrameImage>& frames,
                             const std::filesystem::path& out, const RenderOptions& options);

}  // namespace imap::render
