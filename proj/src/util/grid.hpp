#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace carfluents {

/// Dense row-major W x H grid.
template <typename T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int width, int height, T fill = T{})
      : w_(width), h_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return w_; }
  int height() const { return h_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  T& at(int x, int y) {
    assert(in_bounds(x, y));
    return data_[static_cast<std::size_t>(y) * w_ + x];
  }
  const T& at(int x, int y) const {
    assert(in_bounds(x, y));
    return data_[static_cast<std::size_t>(y) * w_ + x];
  }

  bool in_bounds(int x, int y) const { return x >= 0 && x < w_ && y >= 0 && y < h_; }
  bool same_size(const Grid2D& other) const { return w_ == other.w_ && h_ == other.h_; }

  void fill(T value) { data_.assign(data_.size(), value); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

 private:
  int w_ = 0;
  int h_ = 0;
  std::vector<T> data_;
};

/// W x H grid of C-channel float vectors, layout (y*W + x)*C + c.
/// Matches the on-disk tensor layout (y-major, then x, then channel).
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(int width, int height, int channels)
      : w_(width), h_(height), c_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, 0.0f) {}

  int width() const { return w_; }
  int height() const { return h_; }
  int channels() const { return c_; }
  bool empty() const { return data_.empty(); }

  std::span<float> cell(int x, int y) {
    return {data_.data() + offset(x, y), static_cast<std::size_t>(c_)};
  }
  std::span<const float> cell(int x, int y) const {
    return {data_.data() + offset(x, y), static_cast<std::size_t>(c_)};
  }

  float& at(int x, int y, int c) { return data_[offset(x, y) + c]; }
  float at(int x, int y, int c) const { return data_[offset(x, y) + c]; }

  std::vector<float>& raw() { return data_; }
  const std::vector<float>& raw() const { return data_; }

 private:
  std::size_t offset(int x, int y) const {
    assert(x >= 0 && x < w_ && y >= 0 && y < h_);
    return (static_cast<std::size_t>(y) * w_ + x) * c_;
  }

  int w_ = 0;
  int h_ = 0;
  int c_ = 0;
  std::vector<float> data_;
};

struct Vec2f {
  float u = 0.0f;
  float v = 0.0f;
};

using FlowGrid = Grid2D<Vec2f>;

}  // namespace carfluents
