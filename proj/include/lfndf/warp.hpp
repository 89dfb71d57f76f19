#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "lfndf/image.hpp"
#include "lfndf/lightfield.hpp"

namespace lfndf {

inline constexpr int kMaxChannels = 3;

/// Interpolation cell of a continuous pixel position: the top-left lattice
/// point of the 2x2 neighbourhood used for blending.
struct SampleCell {
  int col = 0;
  int row = 0;
  bool in_bounds = false;
};

/// Bilinear sample with exact partial derivatives along col and row.
struct PixelSample {
  std::array<double, kMaxChannels> value{};
  std::array<double, kMaxChannels> d_col{};
  std::array<double, kMaxChannels> d_row{};
  bool in_bounds = false;
};

/// In bounds iff col in [0, W-1] and row in [0, H-1]. The cell is
/// floor(position), clamped so the last column/row uses the cell to its left;
/// derivatives on cell edges therefore take the right-limit.
SampleCell locate(const Image& img, double col, double row);

/// Blend inside a given cell. Positions outside the cell extrapolate the
/// same bilinear polynomial. An out-of-bounds cell yields zeros.
PixelSample sample_in_cell(const Image& img, double col, double row, SampleCell cell);

PixelSample bilinear_sample(const Image& img, double col, double row);

/// Samples of one view at disparity-shifted positions, channel-interleaved.
/// Out-of-bounds entries carry value 0 and derivative 0.
struct WarpBatch {
  int channels = 1;
  std::vector<double> value;
  std::vector<double> d_disparity;  // d value / d disparity
  std::vector<std::uint8_t> in_bounds;
  std::vector<SampleCell> cells;

  std::size_t size() const { return in_bounds.size(); }
};

/// Pixel position in the reference view (col, row).
struct PixelPos {
  double col = 0.0;
  double row = 0.0;
};

/// Samples view `vc` at xs + Delta * d with Delta = (u - u0, v - v0). With
/// `cells` given, each sample is blended in that cell instead of its own.
WarpBatch warp_view(const LightField& lf, ViewCoordinate vc, std::span<const PixelPos> xs,
                    std::span<const double> d, std::span<const SampleCell> cells = {});

/// Mean-of-views synthesis of the reference view: per pixel the mean of the
/// views whose mask and in-bounds flags are both set. Pixels with no
/// contributing view are marked invalid and hold 0.
struct CenterSynthesis {
  int channels = 1;
  std::vector<double> value;
  std::vector<std::uint8_t> valid;
};

CenterSynthesis aggregate_center(std::span<const WarpBatch> warps,
                                 std::span<const std::vector<std::uint8_t>> masks);

}  // namespace lfndf
