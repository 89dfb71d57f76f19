#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lfndf/image.hpp"

namespace lfndf {

/// Architecture of the disparity field: a multiresolution grid of feature
/// tables feeding a LeakyReLU MLP with a single linear output.
struct ModelConfig {
  int levels = 6;
  int log2_table_size = 15;
  int features = 2;
  int min_resolution = 32;
  int max_resolution = 128;
  int hidden_width = 256;
  int hidden_layers = 2;
  double leaky_slope = 0.01;
  double output_scale = 1.0;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

/// Grid resolutions round(linspace(min, max, levels)). Throws
/// std::invalid_argument for levels < 1 or min > max.
std::vector<int> level_resolutions(const ModelConfig& cfg);

/// Table slot of integer grid corner (ix, iy) at a level of the given
/// resolution. Dense row-major indexing when (resolution + 1)^2 fits the
/// table, otherwise (ix * 1 XOR iy * 2654435761) mod table_size.
std::uint32_t grid_slot(int ix, int iy, int resolution, std::uint32_t table_size);

/// Closed-form trainable scalar count for a configuration.
std::size_t param_count(const ModelConfig& cfg);

/// Offsets of each parameter group inside the flat parameter vector.
struct ParamLayout {
  std::vector<std::size_t> table_offset;  // per level, table_size * features doubles
  std::vector<std::size_t> weight_offset;  // per dense layer, column-major out x in
  std::vector<std::size_t> bias_offset;    // per dense layer
  std::vector<int> layer_in;
  std::vector<int> layer_out;
  std::size_t total = 0;

  bool operator==(const ParamLayout&) const = default;
};

/// Coordinate-based disparity field F: [0,1]^2 -> R.
///
/// All trainable scalars live in one flat vector (see ParamLayout), which the
/// optimizer, gradient checks and checkpoints operate on directly. The
/// reference size (height, width) records the pixel grid whose centers map to
/// ((col + 0.5) / width, (row + 0.5) / height).
class NdfModel {
 public:
  NdfModel() = default;
  /// Hash features ~ U(-1e-4, 1e-4); dense weights ~ U(-b, b) with
  /// b = sqrt(6 / fan_in); biases zero. Deterministic in cfg.seed.
  NdfModel(const ModelConfig& cfg, int ref_height, int ref_width);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<int>& resolutions() const { return resolutions_; }
  const ParamLayout& layout() const { return layout_; }
  int ref_height() const { return ref_height_; }
  int ref_width() const { return ref_width_; }
  std::uint32_t table_size() const { return 1u << cfg_.log2_table_size; }
  int encoding_width() const { return cfg_.levels * cfg_.features; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  std::span<double> table(int level);
  std::span<const double> table(int level) const;
  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  int dense_layers() const { return static_cast<int>(layout_.layer_in.size()); }

  bool operator==(const NdfModel&) const = default;

 private:
  ModelConfig cfg_;
  std::vector<int> resolutions_;
  ParamLayout layout_;
  int ref_height_ = 0;
  int ref_width_ = 0;
  std::vector<double> params_;
};

/// Normalized 2D coordinate in [0,1]^2.
struct Coord2 {
  double x = 0.0;
  double y = 0.0;
};

/// Multiresolution grid features of one point (length levels * features).
std::vector<double> encode(const NdfModel& model, Coord2 x);

/// Hidden-unit signs of a forward pass, one byte per (unit, point) and layer.
/// Replaying a recorded pattern evaluates the network on one linear piece.
struct ActivationPattern {
  std::vector<std::vector<std::uint8_t>> positive;
};

/// Intermediates retained by forward() for the reverse pass.
struct ForwardCache {
  std::size_t count = 0;
  std::size_t padded = 0;
  std::vector<std::uint32_t> slots;  // per point, level, corner
  std::vector<double> weights;       // bilinear corner weights, same layout
  Eigen::MatrixXd input;             // encoding_width x padded
  std::vector<Eigen::MatrixXd> pre;  // per hidden layer
  std::vector<Eigen::MatrixXd> act;
  std::vector<double> output;        // count predictions

  ActivationPattern pattern() const;
};

/// Forward pass over a batch. Points are processed in fixed-size padded
/// chunks, so each prediction depends only on its own coordinate.
void forward(const NdfModel& model, std::span<const Coord2> xs, ForwardCache& cache,
             const ActivationPattern* replay = nullptr);

/// Reverse pass: adds d(sum_i cot_i * prediction_i)/d(theta) into grad, a
/// buffer of model.param_count() entries.
void backward(const NdfModel& model, const ForwardCache& cache, std::span<const double> cot,
              std::span<double> grad, const ActivationPattern* replay = nullptr);

std::vector<double> predict(const NdfModel& model, std::span<const Coord2> xs);

/// Gradient of sum_i cot_i * predict(x_i) with respect to every parameter.
/// Throws std::invalid_argument when cot and xs differ in length.
std::vector<double> model_backward(const NdfModel& model, std::span<const Coord2> xs,
                                   std::span<const double> cot);

/// Evaluates the field at the pixel centers of an out_height x out_width grid.
DisparityMap render_grid(const NdfModel& model, int out_height, int out_width);

/// Normalized pixel-center coordinate of (col, row) in a height x width grid.
inline Coord2 pixel_center(double col, double row, int height, int width) {
  return {(col + 0.5) / width, (row + 0.5) / height};
}

// Binary checkpoint: magic, version, config echo, reference size, raw params.
void save_checkpoint(const NdfModel& model, const std::filesystem::path& path);
NdfModel load_checkpoint(const std::filesystem::path& path);

}  // namespace lfndf
