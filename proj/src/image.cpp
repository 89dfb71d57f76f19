#include "lfndf/image.hpp"

#include <cmath>
#include <stdexcept>

namespace lfndf {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels < 1 || channels > 4) {
    throw std::invalid_argument("Image: bad dimensions");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image to_grayscale(const Image& image) {
  if (image.channels() == 1) return image;
  Image out(image.width(), image.height(), 1);
  for (int row = 0; row < image.height(); ++row) {
    for (int col = 0; col < image.width(); ++col) {
      const float* p = image.pixel(col, row);
      out.at(col, row) = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
    }
  }
  return out;
}

DisparityMap::DisparityMap(int width, int height, float fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw std::invalid_argument("DisparityMap: bad dimensions");
  values_.assign(static_cast<std::size_t>(width) * height, fill);
  valid_.assign(values_.size(), 1);
}

bool DisparityMap::finite() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (valid_[i] && !std::isfinite(values_[i])) return false;
  }
  return true;
}

}  // namespace lfndf
