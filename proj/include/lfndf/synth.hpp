#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "lfndf/image.hpp"
#include "lfndf/lightfield.hpp"

namespace lfndf {

enum class SceneKind { constant_plane, slanted_plane, step_occluder, two_layer };

SceneKind parse_scene_kind(std::string_view name);
std::string_view to_string(SceneKind kind);

/// Procedural test scene with analytic ground truth.
///
/// Disparities are in pixels per adjacent-view step. Positions are in
/// center-view pixel coordinates, where pixel (col, row) sits at integer
/// coordinates. Larger disparity is nearer; it wins when layers overlap.
struct SceneSpec {
  SceneKind kind = SceneKind::constant_plane;

  // constant_plane: d0. slanted_plane: d0 at the image center plus a
  // gradient (gx, gy) in disparity per pixel.
  double d0 = 0.0;
  double gx = 0.0;
  double gy = 0.0;

  // step_occluder: foreground covers columns < step_fraction * W.
  // two_layer: foreground covers the rectangle given as fractions of W, H.
  double d_foreground = 1.0;
  double d_background = 0.0;
  double step_fraction = 0.5;
  double rect_x0 = 0.3;
  double rect_y0 = 0.3;
  double rect_x1 = 0.7;
  double rect_y1 = 0.7;

  std::uint64_t texture_seed = 1;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 7;
  int channels = 3;

  // Largest allowed |d| * max|Delta|, in pixels.
  double max_shift = 16.0;
};

struct SyntheticScene {
  LightField light_field;
  DisparityMap ground_truth;
};

/// Renders a rows x cols grid of H x W views. View (u, v) at offset
/// Delta = (u - u0, v - v0) satisfies view(x + Delta * d(x)) = center(x)
/// wherever x is visible, with depth-ordered compositing for occluders.
SyntheticScene synth_lightfield(const SceneSpec& spec, int height, int width, int rows, int cols);

/// Ground-truth disparity at continuous center-view coordinates.
double scene_disparity(const SceneSpec& spec, int height, int width, double col, double row);

/// Analytic ground truth sampled at the pixel centers of an out_h x out_w
/// grid covering the same image; values stay in training-resolution units.
DisparityMap scene_ground_truth(const SceneSpec& spec, int height, int width, int out_height,
                                int out_width);

/// Smooth band-limited texture used for layer `layer`, evaluated at a
/// continuous position. Values lie strictly inside (0, 1).
double texture_value(const SceneSpec& spec, int layer, int channel, double col, double row);

}  // namespace lfndf
