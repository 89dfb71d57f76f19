#pragma once

#include <compare>
#include <vector>

#include "lfndf/image.hpp"

namespace lfndf {

/// Position of a sub-aperture view in the grid: u is the column, v the row.
struct ViewCoordinate {
  int u = 0;
  int v = 0;

  auto operator<=>(const ViewCoordinate&) const = default;
};

/// A 4D two-plane light field stored as a grid of sub-aperture images.
///
/// Views are indexed row-major, index = v * cols + u. All views share the
/// same size and channel count, and every sample lies in [0, 1]. The
/// reference (center) view is ((cols - 1) / 2, (rows - 1) / 2).
class LightField {
 public:
  LightField() = default;
  LightField(int rows, int cols, std::vector<Image> views, double disparity_scale = 1.0);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int view_count() const { return rows_ * cols_; }
  int width() const { return views_.front().width(); }
  int height() const { return views_.front().height(); }
  int channels() const { return views_.front().channels(); }
  double disparity_scale() const { return disparity_scale_; }

  ViewCoordinate center() const { return {(cols_ - 1) / 2, (rows_ - 1) / 2}; }
  bool contains(ViewCoordinate vc) const {
    return vc.u >= 0 && vc.u < cols_ && vc.v >= 0 && vc.v < rows_;
  }
  int index_of(ViewCoordinate vc) const { return vc.v * cols_ + vc.u; }
  ViewCoordinate coordinate_of(int index) const { return {index % cols_, index / cols_}; }

  /// Throws std::out_of_range outside the grid.
  const Image& view(ViewCoordinate vc) const;
  const Image& center_view() const { return views_[index_of(center())]; }
  const std::vector<Image>& views() const { return views_; }

  /// Every view except the center, in ascending row-major order.
  std::vector<ViewCoordinate> surrounding_views() const;

  LightField to_grayscale() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  double disparity_scale_ = 1.0;
  std::vector<Image> views_;
};

const Image& view_image(const LightField& lf, ViewCoordinate vc);

}  // namespace lfndf
