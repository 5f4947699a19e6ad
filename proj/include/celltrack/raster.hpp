#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace celltrack {

// Row-major 2-D grid with interleaved channels. Pixel centers sit at integer
// coordinates, (0, 0) being the top-left pixel.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, int channels = 1, T fill = T{})
      : width_(width),
        height_(height),
        channels_(channels),
        data_(checked_size(width, height, channels), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_;
  }
  bool same_extent(int w, int h) const { return w == width_ && h == height_; }
  template <typename U>
  bool same_extent(const Raster<U>& o) const {
    return same_extent(o.width(), o.height());
  }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  T& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  void fill(T v) { data_.assign(data_.size(), v); }

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ &&
           a.channels_ == b.channels_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_size(int w, int h, int c) {
    if (w < 1 || h < 1 || c < 1)
      throw std::invalid_argument("Raster: width, height and channels must be >= 1");
    return static_cast<std::size_t>(w) * h * c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using BinaryMask = Raster<std::uint8_t>;  // values in {0, 1}
using LabelMap = Raster<std::uint32_t>;   // 0 = background
using ProbMap = Raster<float>;            // per-channel class scores in [0, 1]
using ImageF = Raster<float>;             // grayscale intensity in [0, 1]

}  // namespace celltrack
