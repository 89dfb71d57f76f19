#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lfndf/image.hpp"

namespace lfndf {

/// Percentage of jointly valid pixels with |pred - gt| > threshold.
/// Throws std::invalid_argument on a size mismatch or threshold <= 0.
double badpix(const DisparityMap& pred, const DisparityMap& gt, double threshold);

/// 100 * mean squared error over jointly valid pixels.
double mse100(const DisparityMap& pred, const DisparityMap& gt);

struct MetricsReport {
  std::string scene;
  std::map<double, double> badpix;  // threshold -> percentage
  double mse100 = 0.0;
  std::size_t pixel_count = 0;
};

inline const std::vector<double> kDefaultThresholds = {0.01, 0.03, 0.07};

MetricsReport evaluate(const DisparityMap& pred, const DisparityMap& gt,
                       const std::vector<double>& thresholds = kDefaultThresholds,
                       std::string scene = {});

/// JSON object: scene, thresholds, badpix, mse100, pixel_count and an
/// optional config hash.
std::string to_json(const MetricsReport& report, const std::string& config_hash = {});

/// (column, value) pairs of one row. Throws std::out_of_range for a bad row.
std::vector<std::pair<int, double>> profile_line(const DisparityMap& map, int row);

std::string profile_csv(const std::vector<std::pair<int, double>>& profile);

}  // namespace lfndf
