#include "lfndf/warp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lfndf {

SampleCell locate(const Image& img, double col, double row) {
  SampleCell cell;
  const int W = img.width();
  const int H = img.height();
  cell.in_bounds = std::isfinite(col) && std::isfinite(row) && col >= 0.0 && row >= 0.0 &&
                   col <= W - 1 && row <= H - 1;
  if (!cell.in_bounds) return cell;
  cell.col = std::min(static_cast<int>(col), std::max(W - 2, 0));
  cell.row = std::min(static_cast<int>(row), std::max(H - 2, 0));
  return cell;
}

PixelSample sample_in_cell(const Image& img, double col, double row, SampleCell cell) {
  PixelSample s;
  s.in_bounds = cell.in_bounds;
  if (!cell.in_bounds) return s;
  const int C = img.channels();
  const int x0 = cell.col;
  const int y0 = cell.row;
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = col - x0;
  const double fy = row - y0;
  const float* p00 = img.pixel(x0, y0);
  const float* p10 = img.pixel(x1, y0);
  const float* p01 = img.pixel(x0, y1);
  const float* p11 = img.pixel(x1, y1);
  for (int ch = 0; ch < C; ++ch) {
    const double a = p00[ch], b = p10[ch], c = p01[ch], d = p11[ch];
    s.value[ch] = (1.0 - fx) * (1.0 - fy) * a + fx * (1.0 - fy) * b + (1.0 - fx) * fy * c +
                  fx * fy * d;
    s.d_col[ch] = (1.0 - fy) * (b - a) + fy * (d - c);
    s.d_row[ch] = (1.0 - fx) * (c - a) + fx * (d - b);
  }
  return s;
}

PixelSample bilinear_sample(const Image& img, double col, double row) {
  if (img.empty()) throw std::invalid_argument("bilinear_sample: empty image");
  return sample_in_cell(img, col, row, locate(img, col, row));
}

WarpBatch warp_view(const LightField& lf, ViewCoordinate vc, std::span<const PixelPos> xs,
                    std::span<const double> d, std::span<const SampleCell> cells) {
  if (xs.size() != d.size()) throw std::invalid_argument("warp_view: |xs| != |d|");
  if (!cells.empty() && cells.size() != xs.size()) {
    throw std::invalid_argument("warp_view: |cells| != |xs|");
  }
  const Image& img = lf.view(vc);
  const ViewCoordinate c0 = lf.center();
  const double du = vc.u - c0.u;
  const double dv = vc.v - c0.v;
  const int C = img.channels();

  WarpBatch out;
  out.channels = C;
  out.value.assign(xs.size() * C, 0.0);
  out.d_disparity.assign(xs.size() * C, 0.0);
  out.in_bounds.assign(xs.size(), 0);
  out.cells.resize(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double col = xs[i].col + du * d[i];
    const double row = xs[i].row + dv * d[i];
    const SampleCell cell = cells.empty() ? locate(img, col, row) : cells[i];
    out.cells[i] = cell;
    if (!cell.in_bounds) continue;
    const PixelSample s = sample_in_cell(img, col, row, cell);
    out.in_bounds[i] = 1;
    for (int ch = 0; ch < C; ++ch) {
      out.value[i * C + ch] = s.value[ch];
      out.d_disparity[i * C + ch] = du * s.d_col[ch] + dv * s.d_row[ch];
    }
  }
  return out;
}

CenterSynthesis aggregate_center(std::span<const WarpBatch> warps,
                                 std::span<const std::vector<std::uint8_t>> masks) {
  if (warps.size() != masks.size()) {
    throw std::invalid_argument("aggregate_center: one mask per view required");
  }
  CenterSynthesis out;
  if (warps.empty()) return out;
  const std::size_t n = warps.front().size();
  const int C = warps.front().channels;
  out.channels = C;
  out.value.assign(n * C, 0.0);
  out.valid.assign(n, 0);
  std::vector<int> count(n, 0);
  for (std::size_t v = 0; v < warps.size(); ++v) {
    if (warps[v].size() != n || masks[v].size() != n) {
      throw std::invalid_argument("aggregate_center: views cover different pixel sets");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!masks[v][i] || !warps[v].in_bounds[i]) continue;
      ++count[i];
      for (int ch = 0; ch < C; ++ch) out.value[i * C + ch] += warps[v].value[i * C + ch];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] == 0) continue;
    out.valid[i] = 1;
    for (int ch = 0; ch < C; ++ch) out.value[i * C + ch] /= count[i];
  }
  return out;
}

}  // namespace lfndf
