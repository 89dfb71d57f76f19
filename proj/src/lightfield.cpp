#include "lfndf/lightfield.hpp"

#include <stdexcept>
#include <string>

namespace lfndf {

LightField::LightField(int rows, int cols, std::vector<Image> views, double disparity_scale)
    : rows_(rows), cols_(cols), disparity_scale_(disparity_scale), views_(std::move(views)) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("LightField: empty view grid");
  if (views_.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument("LightField: " + std::to_string(views_.size()) +
                                " views for a " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " grid");
  }
  const Image& first = views_.front();
  if (first.empty()) throw std::invalid_argument("LightField: empty view image");
  for (const Image& img : views_) {
    if (img.width() != first.width() || img.height() != first.height() ||
        img.channels() != first.channels()) {
      throw std::invalid_argument("LightField: views differ in size or channel count");
    }
  }
}

const Image& LightField::view(ViewCoordinate vc) const {
  if (!contains(vc)) {
    throw std::out_of_range("view (" + std::to_string(vc.u) + ", " + std::to_string(vc.v) +
                            ") outside the " + std::to_string(rows_) + "x" +
                            std::to_string(cols_) + " grid");
  }
  return views_[index_of(vc)];
}

std::vector<ViewCoordinate> LightField::surrounding_views() const {
  std::vector<ViewCoordinate> out;
  out.reserve(views_.size() - 1);
  const ViewCoordinate c = center();
  for (int i = 0; i < view_count(); ++i) {
    ViewCoordinate vc = coordinate_of(i);
    if (vc != c) out.push_back(vc);
  }
  return out;
}

LightField LightField::to_grayscale() const {
  std::vector<Image> gray;
  gray.reserve(views_.size());
  for (const Image& img : views_) gray.push_back(lfndf::to_grayscale(img));
  return LightField(rows_, cols_, std::move(gray), disparity_scale_);
}

const Image& view_image(const LightField& lf, ViewCoordinate vc) { return lf.view(vc); }

}  // namespace lfndf
