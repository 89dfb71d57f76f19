#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lfndf/loss.hpp"
#include "lfndf/model.hpp"

namespace lfndf {

/// Every knob of a reconstruction run.
///
/// Serialized as flat `key = value` text; reading rejects unknown keys.
struct ReconstructionConfig {
  // Loss
  double alpha = 1.0;
  double beta = 1.0;
  int mssim_window = 11;
  double mssim_sigma = 1.5;
  double charbonnier_eps = 1e-6;
  SelectionMode selection = SelectionMode::half;

  // Field
  int levels = 6;
  int log2_table_size = 15;
  int features = 2;
  int min_resolution = 32;
  int max_resolution = 128;
  int mlp_hidden = 256;
  int mlp_layers = 2;
  double leaky_slope = 0.01;
  double output_scale = 1.0;

  // Optimization
  int patch_size = 32;
  int patches_per_step = 16;
  int iterations = 20000;
  double learning_rate = 1e-2;
  double lr_decay = 0.1;  // final lr = learning_rate * lr_decay
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-15;
  double noise_start = 1.0;
  double noise_end = 1e-2;
  double noise_fraction = 0.5;
  std::uint64_t seed = 0;
  bool grayscale = false;
  int log_interval = 100;

  ModelConfig model() const;
  LossWeights loss() const;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

ReconstructionConfig read_config(const std::filesystem::path& path);
ReconstructionConfig parse_config(const std::string& text);
std::string format_config(const ReconstructionConfig& cfg);

/// Applies one `key = value` assignment; throws std::invalid_argument for an
/// unknown key or unparsable value.
void set_config_value(ReconstructionConfig& cfg, const std::string& key, const std::string& value);

}  // namespace lfndf
