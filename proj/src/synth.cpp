#include "lfndf/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>

namespace lfndf {

namespace {

constexpr int kWaves = 32;
constexpr double kMinWavelength = 40.0;
constexpr double kMaxWavelength = 120.0;

// Sum of random plane waves with unit variance, squashed into (0.05, 0.95).
// Wavelengths of 40 px and up keep bilinear resampling error near 4e-3 at
// half-pixel shifts.
class Texture {
 public:
  Texture(std::uint64_t seed, int layer, int channel) {
    std::seed_seq seq{static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(layer),
                      static_cast<std::uint64_t>(channel)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < kWaves; ++i) {
      const double lambda =
          kMinWavelength * std::pow(kMaxWavelength / kMinWavelength, unit(rng));
      const double theta = 2.0 * std::numbers::pi * unit(rng);
      const double k = 2.0 * std::numbers::pi / lambda;
      waves_[i] = {k * std::cos(theta), k * std::sin(theta), 2.0 * std::numbers::pi * unit(rng),
                   std::sqrt(2.0 / kWaves)};
    }
  }

  double operator()(double col, double row) const {
    double s = 0.0;
    for (const Wave& w : waves_) s += w.amp * std::cos(w.kx * col + w.ky * row + w.phase);
    return 0.5 + 0.45 * std::tanh(s);
  }

 private:
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::array<Wave, kWaves> waves_{};
};

struct Layer {
  double disparity;
  int texture;
  // Support in center-view coordinates, half-open [x0, x1) x [y0, y1).
  double x0, y0, x1, y1;

  bool covers(double col, double row) const {
    return col >= x0 && col < x1 && row >= y0 && row < y1;
  }
};

constexpr double kInf = std::numeric_limits<double>::infinity();

// Piecewise-constant scenes as depth-ordered layers, nearest first.
std::vector<Layer> layers_of(const SceneSpec& s, int height, int width) {
  std::vector<Layer> layers;
  switch (s.kind) {
    case SceneKind::constant_plane:
      layers.push_back({s.d0, 0, -kInf, -kInf, kInf, kInf});
      break;
    case SceneKind::step_occluder:
      layers.push_back({s.d_foreground, 1, -kInf, -kInf, s.step_fraction * width - 0.5, kInf});
      layers.push_back({s.d_background, 0, -kInf, -kInf, kInf, kInf});
      break;
    case SceneKind::two_layer:
      layers.push_back({s.d_foreground, 1, s.rect_x0 * width - 0.5, s.rect_y0 * height - 0.5,
                        s.rect_x1 * width - 0.5, s.rect_y1 * height - 0.5});
      layers.push_back({s.d_background, 0, -kInf, -kInf, kInf, kInf});
      break;
    case SceneKind::slanted_plane:
      break;
  }
  std::stable_sort(layers.begin(), layers.end(),
                   [](const Layer& a, const Layer& b) { return a.disparity > b.disparity; });
  return layers;
}

struct Hit {
  int texture;
  double col;
  double row;
  double disparity;
};

// Finds the surface point seen at view pixel (pcol, prow) from offset delta.
std::optional<Hit> trace(const SceneSpec& s, const std::vector<Layer>& layers, int height,
                         int width, double du, double dv, double pcol, double prow) {
  if (s.kind == SceneKind::slanted_plane) {
    // Solve x + delta * (d0 + g . (x - c)) = p for x.
    const double cx = (width - 1) * 0.5;
    const double cy = (height - 1) * 0.5;
    const double base = s.d0 - s.gx * cx - s.gy * cy;
    const double rx = pcol - du * base;
    const double ry = prow - dv * base;
    const double a = 1.0 + du * s.gx, b = du * s.gy;
    const double c = dv * s.gx, d = 1.0 + dv * s.gy;
    const double det = a * d - b * c;
    const double x = (d * rx - b * ry) / det;
    const double y = (a * ry - c * rx) / det;
    return Hit{0, x, y, s.d0 + s.gx * (x - cx) + s.gy * (y - cy)};
  }
  for (const Layer& l : layers) {
    const double x = pcol - du * l.disparity;
    const double y = prow - dv * l.disparity;
    if (l.covers(x, y)) return Hit{l.texture, x, y, l.disparity};
  }
  return std::nullopt;
}

double max_abs_disparity(const SceneSpec& s, int height, int width) {
  switch (s.kind) {
    case SceneKind::constant_plane:
      return std::abs(s.d0);
    case SceneKind::slanted_plane: {
      const double hx = std::abs(s.gx) * (width - 1) * 0.5;
      const double hy = std::abs(s.gy) * (height - 1) * 0.5;
      return std::abs(s.d0) + hx + hy;
    }
    default:
      return std::max(std::abs(s.d_foreground), std::abs(s.d_background));
  }
}

}  // namespace

SceneKind parse_scene_kind(std::string_view name) {
  if (name == "constant" || name == "constant_plane") return SceneKind::constant_plane;
  if (name == "slanted" || name == "slanted_plane") return SceneKind::slanted_plane;
  if (name == "step" || name == "step_occluder") return SceneKind::step_occluder;
  if (name == "two_layer") return SceneKind::two_layer;
  throw std::invalid_argument("unknown scene kind: " + std::string(name));
}

std::string_view to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::constant_plane:
      return "constant_plane";
    case SceneKind::slanted_plane:
      return "slanted_plane";
    case SceneKind::step_occluder:
      return "step_occluder";
    case SceneKind::two_layer:
      return "two_layer";
  }
  return "unknown";
}

double texture_value(const SceneSpec& spec, int layer, int channel, double col, double row) {
  return Texture(spec.texture_seed, layer, channel)(col, row);
}

double scene_disparity(const SceneSpec& spec, int height, int width, double col, double row) {
  const auto layers = layers_of(spec, height, width);
  const auto hit = trace(spec, layers, height, width, 0.0, 0.0, col, row);
  return hit ? hit->disparity : 0.0;
}

DisparityMap scene_ground_truth(const SceneSpec& spec, int height, int width, int out_height,
                                int out_width) {
  const auto layers = layers_of(spec, height, width);
  DisparityMap gt(out_width, out_height);
  for (int r = 0; r < out_height; ++r) {
    for (int c = 0; c < out_width; ++c) {
      // Pixel center of the output grid in reference-view pixel units.
      const double col = (c + 0.5) * width / out_width - 0.5;
      const double row = (r + 0.5) * height / out_height - 0.5;
      const auto hit = trace(spec, layers, height, width, 0.0, 0.0, col, row);
      gt.at(c, r) = static_cast<float>(hit ? hit->disparity : 0.0);
    }
  }
  return gt;
}

SyntheticScene synth_lightfield(const SceneSpec& spec, int height, int width, int rows, int cols) {
  if (height < 1 || width < 1) throw std::invalid_argument("synth_lightfield: empty image");
  if (rows < 1 || cols < 1 || rows % 2 == 0 || cols % 2 == 0) {
    throw std::invalid_argument("synth_lightfield: view grid dimensions must be odd");
  }
  if (spec.channels != 1 && spec.channels != 3) {
    throw std::invalid_argument("synth_lightfield: channels must be 1 or 3");
  }
  if (spec.noise_sigma < 0.0) throw std::invalid_argument("synth_lightfield: noise_sigma < 0");
  const double max_delta = std::max((rows - 1) / 2, (cols - 1) / 2);
  const double shift = max_abs_disparity(spec, height, width) * max_delta;
  if (shift > spec.max_shift) {
    throw std::invalid_argument("synth_lightfield: disparity shift " + std::to_string(shift) +
                                " px exceeds the margin of " + std::to_string(spec.max_shift));
  }
  if (spec.kind == SceneKind::slanted_plane) {
    const double md = max_delta * (std::abs(spec.gx) + std::abs(spec.gy));
    if (md >= 0.5) throw std::invalid_argument("synth_lightfield: slant too steep for grid");
  }

  const auto layers = layers_of(spec, height, width);
  std::vector<Texture> textures;
  for (int layer = 0; layer < 2; ++layer) {
    for (int ch = 0; ch < spec.channels; ++ch) textures.emplace_back(spec.texture_seed, layer, ch);
  }

  const int u0 = (cols - 1) / 2;
  const int v0 = (rows - 1) / 2;
  std::mt19937_64 noise_rng(spec.noise_seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);

  std::vector<Image> views;
  views.reserve(static_cast<std::size_t>(rows) * cols);
  for (int v = 0; v < rows; ++v) {
    for (int u = 0; u < cols; ++u) {
      const double du = u - u0;
      const double dv = v - v0;
      Image img(width, height, spec.channels);
      for (int row = 0; row < height; ++row) {
        for (int col = 0; col < width; ++col) {
          const auto hit = trace(spec, layers, height, width, du, dv, col, row);
          for (int ch = 0; ch < spec.channels; ++ch) {
            double val = hit ? textures[hit->texture * spec.channels + ch](hit->col, hit->row)
                             : 0.5;
            if (spec.noise_sigma > 0.0) val = std::clamp(val + noise(noise_rng), 0.0, 1.0);
            img.at(col, row, ch) = static_cast<float>(val);
          }
        }
      }
      views.push_back(std::move(img));
    }
  }

  return {LightField(rows, cols, std::move(views), 1.0),
          scene_ground_truth(spec, height, width, height, width)};
}

}  // namespace lfndf
