#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace imap {

// Per-head stack of row vectors, laid out [heads, rows, dim] row-major.
struct HeadTensor {
  std::size_t heads = 0;
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  HeadTensor() = default;
  HeadTensor(std::size_t h, std::size_t r, std::size_t d)
      : heads(h), rows(r), dim(d), data(h * r * d, 0.0f) {}

  std::span<const float> head(std::size_t h) const {
    return {data.data() + h * rows * dim, rows * dim};
  }
  std::span<float> head(std::size_t h) { return {data.data() + h * rows * dim, rows * dim}; }

  std::span<const float> row(std::size_t h, std::size_t r) const {
    return {data.data() + (h * rows + r) * dim, dim};
  }
  std::span<float> row(std::size_t h, std::size_t r) {
    return {data.data() + (h * rows + r) * dim, dim};
  }

  bool operator==(const HeadTensor&) const = default;
};

// Scalar field over the latent grid, [frames, height, width]. Token p sits at
// p = f*H*W + y*W + x.
struct Volume {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  Volume() = default;
  Volume(std::size_t f, std::size_t h, std::size_t w, float fill = 0.0f)
      : frames(f), height(h), width(w), values(f * h * w, fill) {}

  std::size_t size() const { return values.size(); }
  std::size_t frame_size() const { return height * width; }
  std::size_t index(std::size_t f, std::size_t y, std::size_t x) const {
    return (f * height + y) * width + x;
  }
  float& at(std::size_t f, std::size_t y, std::size_t x) { return values[index(f, y, x)]; }
  float at(std::size_t f, std::size_t y, std::size_t x) const { return values[index(f, y, x)]; }
  bool same_shape(const Volume& o) const {
    return frames == o.frames && height == o.height && width == o.width;
  }

  bool operator==(const Volume&) const = default;
};

}  // namespace imap
