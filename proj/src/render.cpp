#include "imap/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "imap/chunkio.hpp"
#include "imap/error.hpp"
#include "imap/segeval.hpp"

namespace imap::render {

namespace {

std::array<std::array<std::uint8_t, 3>, 256> build_fire() {
  std::array<std::array<std::uint8_t, 3>, 256> t{};
  for (int i = 0; i < 256; ++i) {
    const int v = 3 * i;
    t[static_cast<std::size_t>(i)] = {static_cast<std::uint8_t>(std::clamp(v, 0, 255)),
                                      static_cast<std::uint8_t>(std::clamp(v - 255, 0, 255)),
                                      static_cast<std::uint8_t>(std::clamp(v - 510, 0, 255))};
  }
  return t;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::vector<std::byte> encode_netpbm(const char* magic, const FrameImage& image, bool gray) {
  char header[64];
  const int len = std::snprintf(header, sizeof header, "%s\n%zu %zu\n255\n", magic, image.width,
                                image.height);
  std::vector<std::byte> out;
  const std::size_t px = image.width * image.height;
  out.reserve(static_cast<std::size_t>(len) + px * (gray ? 1 : 3));
  for (int i = 0; i < len; ++i) out.push_back(std::byte(header[i]));
  if (gray) {
    for (std::size_t i = 0; i < px; ++i) out.push_back(std::byte(image.rgb[i * 3]));
  } else {
    for (auto b : image.rgb) out.push_back(std::byte(b));
  }
  return out;
}

void check_tiles(std::span<const FrameImage> tiles, std::size_t w, std::size_t h, const char* what) {
  if (tiles.size() != kGridFrames) {
    throw Error(ErrorCode::kTileMismatch, std::string("grid needs 12 ") + what + ", got " +
                                              std::to_string(tiles.size()));
  }
  for (const auto& t : tiles) {
    if (t.width != w || t.height != h) {
      throw Error(ErrorCode::kTileMismatch, std::string("grid ") + what + " differ in size");
    }
  }
}

}  // namespace

FrameImage::FrameImage(std::size_t w, std::size_t h, std::array<std::uint8_t, 3> fill)
    : width(w), height(h), rgb(w * h * 3) {
  for (std::size_t i = 0; i < w * h; ++i) std::copy(fill.begin(), fill.end(), rgb.begin() + i * 3);
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

const std::array<std::array<std::uint8_t, 3>, 256>& fire_table() {
  static const auto table = build_fire();
  return table;
}

FrameImage colorize(std::span<const float> slice, std::size_t height, std::size_t width,
                    Colormap colormap) {
  if (slice.size() != height * width) throw Error(ErrorCode::kShapeMismatch, "slice size mismatch");
  FrameImage img(width, height);
  const auto& fire = fire_table();
  for (std::size_t i = 0; i < slice.size(); ++i) {
    const std::uint8_t level = to_byte(255.0 * clamp01(slice[i]));
    if (colormap == Colormap::kGray) {
      std::fill_n(img.rgb.begin() + i * 3, 3, level);
    } else {
      std::copy(fire[level].begin(), fire[level].end(), img.rgb.begin() + i * 3);
    }
  }
  return img;
}

FrameImage overlay(const FrameImage& frame, std::span<const float> slice, double strength) {
  if (slice.size() != frame.width * frame.height) {
    throw Error(ErrorCode::kShapeMismatch, "overlay map does not match frame size");
  }
  const auto& fire = fire_table();
  FrameImage out(frame.width, frame.height);
  for (std::size_t i = 0; i < slice.size(); ++i) {
    const double v = clamp01(slice[i]);
    const double w = strength * v;
    const auto& c = fire[to_byte(255.0 * v)];
    for (std::size_t ch = 0; ch < 3; ++ch) {
      out.rgb[i * 3 + ch] = to_byte((1.0 - w) * frame.rgb[i * 3 + ch] + w * c[ch]);
    }
  }
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "cannot sample frames from an empty sequence");
  std::vector<std::size_t> out(kGridFrames);
  const std::size_t last = kGridFrames - 1;
  for (std::size_t i = 0; i < kGridFrames; ++i) {
    // round(i * (n - 1) / 11), half up, in exact integer arithmetic
    out[i] = (2 * i * (n - 1) + last) / (2 * last);
  }
  return out;
}

FrameImage grid(std::span<const FrameImage> frames, std::span<const FrameImage> heatmaps,
                std::span<const FrameImage> overlays) {
  if (frames.empty()) throw Error(ErrorCode::kTileMismatch, "grid needs 12 frames, got 0");
  const std::size_t tw = frames[0].width;
  const std::size_t th = frames[0].height;
  check_tiles(frames, tw, th, "frames");
  check_tiles(heatmaps, tw, th, "heatmaps");
  check_tiles(overlays, tw, th, "overlays");

  constexpr std::size_t rows = 4;
  constexpr std::size_t cols = 3;
  const std::size_t panel_w = cols * tw + (cols - 1) * kGutter;
  const std::size_t panel_h = rows * th + (rows - 1) * kGutter;
  FrameImage out(3 * panel_w + 2 * kGutter, panel_h);

  const std::span<const FrameImage> panels[3] = {frames, heatmaps, overlays};
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t i = 0; i < kGridFrames; ++i) {
      const std::size_t ox = p * (panel_w + kGutter) + (i % cols) * (tw + kGutter);
      const std::size_t oy = (i / cols) * (th + kGutter);
      const FrameImage& tile = panels[p][i];
      for (std::size_t y = 0; y < th; ++y) {
        std::copy_n(tile.pixel(0, y), tw * 3, out.pixel(ox, oy + y));
      }
    }
  }
  return out;
}

std::vector<std::byte> encode_ppm(const FrameImage& image) { return encode_netpbm("P6", image, false); }
std::vector<std::byte> encode_pgm(const FrameImage& image) { return encode_netpbm("P5", image, true); }

FrameImage decode_ppm(std::span<const std::byte> bytes) {
  std::size_t pos = 0;
  auto bad = [](const std::string& m) { return Error(ErrorCode::kSchemaViolation, "PPM: " + m); };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      const auto c = static_cast<char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && static_cast<char>(bytes[pos]) != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    std::size_t v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(static_cast<char>(bytes[pos]) - '0');
      ++pos;
      any = true;
      if (v > (1u << 20)) throw bad("dimension too large");
    }
    if (!any) throw bad("expected a number");
    return v;
  };
  if (bytes.size() < 2 || static_cast<char>(bytes[0]) != 'P' || static_cast<char>(bytes[1]) != '6') {
    throw bad("not a binary P6 file");
  }
  pos = 2;
  const std::size_t w = number();
  const std::size_t h = number();
  const std::size_t maxval = number();
  if (maxval != 255) throw bad("only maxval 255 is supported");
  if (w == 0 || h == 0) throw bad("dimensions must be positive");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw bad("missing separator before pixel data");
  }
  ++pos;
  if (bytes.size() - pos != w * h * 3) throw bad("pixel data length mismatch");
  FrameImage img(w, h);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = std::to_integer<std::uint8_t>(bytes[pos + i]);
  return img;
}

void write_ppm(const std::filesystem::path& path, const FrameImage& image) {
  write_file_bytes(path, encode_ppm(image));
}

void write_pgm(const std::filesystem::path& path, const FrameImage& image) {
  write_file_bytes(path, encode_pgm(image));
}

FrameImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file_bytes(path)); }

std::vector<FrameImage> read_frame_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::kMissingFile, "frame directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<FrameImage> out;
  for (const auto& f : files) out.push_back(read_ppm(f));
  return out;
}

RenderSummary render_volumes(const std::vector<std::pair<std::string, Volume>>& volumes,
                             int temporal_compression, int spatial_patch,
                             const std::vector<FrameImage>& frames,
                             const std::filesystem::path& out, const RenderOptions& options) {
  if (options.grid && frames.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "grid rendering needs input frames");
  }
  RenderSummary summary;
  for (const auto& [name, volume] : volumes) {
    const Volume up = segeval::upsample(volume, temporal_compression, spatial_patch,
                                        segeval::Interp::kBilinear);
    const std::size_t fs = up.frame_size();
    const std::size_t n = frames.empty() ? up.frames : frames.size();
    for (const auto& f : frames) {
      if (f.width != up.width || f.height != up.height) {
        throw Error(ErrorCode::kShapeMismatch,
                    "frame is " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                        " but the upsampled map is " + std::to_string(up.width) + "x" +
                        std::to_string(up.height));
      }
    }
    const auto dir = out / name;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string());

    std::vector<FrameImage> heat(n);
    std::vector<FrameImage> over(frames.empty() ? 0 : n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t src = i * up.frames / n;
      const std::span<const float> slice(up.values.data() + src * fs, fs);
      heat[i] = colorize(slice, up.height, up.width, options.colormap);
      char buf[32];
      const bool gray = options.colormap == Colormap::kGray;
      std::snprintf(buf, sizeof buf, "heatmap_%04zu.%s", i, gray ? "pgm" : "ppm");
      if (gray) write_pgm(dir / buf, heat[i]); else write_ppm(dir / buf, heat[i]);
      summary.files.push_back(dir / buf);
      if (!frames.empty()) {
        over[i] = overlay(frames[i], slice, options.strength);
        std::snprintf(buf, sizeof buf, "overlay_%04zu.ppm", i);
        write_ppm(dir / buf, over[i]);
        summary.files.push_back(dir / buf);
      }
    }
    if (options.grid) {
      std::vector<FrameImage> tf, th, to;
      for (auto i : sample_indices(n)) {
        tf.push_back(frames[i]);
        th.push_back(heat[i]);
        to.push_back(over[i]);
      }
      write_ppm(dir / "grid.ppm", grid(tf, th, to));
      summary.files.push_back(dir / "grid.ppm");
    }
  }
  return summary;
}

}  // namespace imap::render
