#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lfndf {

/// Row-major H x W x C image, channels interleaved, float samples in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  float& at(int col, int row, int ch = 0) {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
  }
  float at(int col, int row, int ch = 0) const {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
  }
  const float* pixel(int col, int row) const {
    return data_.data() + (static_cast<std::size_t>(row) * width_ + col) * channels_;
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Rec.601 luma of an RGB image; single-channel images are returned unchanged.
Image to_grayscale(const Image& image);

/// H x W disparity values with a per-pixel validity mask.
///
/// Values are stored as float32, the precision of the PFM files they are
/// exchanged through, so a write/read round trip is value-exact.
class DisparityMap {
 public:
  DisparityMap() = default;
  DisparityMap(int width, int height, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }

  float& at(int col, int row) { return values_[index(col, row)]; }
  float at(int col, int row) const { return values_[index(col, row)]; }
  bool valid(int col, int row) const { return valid_[index(col, row)] != 0; }
  void set_valid(int col, int row, bool v) { valid_[index(col, row)] = v ? 1 : 0; }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }
  std::span<std::uint8_t> mask() { return valid_; }
  std::span<const std::uint8_t> mask() const { return valid_; }

  /// True when every valid entry is finite.
  bool finite() const;

  bool operator==(const DisparityMap&) const = default;

 private:
  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * width_ + col;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> values_;
  std::vector<std::uint8_t> valid_;
};

}  // namespace lfndf
