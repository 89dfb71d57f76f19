#include "lfndf/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lfndf {

namespace {

void check_shapes(const DisparityMap& pred, const DisparityMap& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    std::ostringstream msg;
    msg << "disparity maps differ in size: " << pred.width() << "x" << pred.height() << " vs "
        << gt.width() << "x" << gt.height();
    throw std::invalid_argument(msg.str());
  }
}

bool joint_valid(const DisparityMap& pred, const DisparityMap& gt, std::size_t i) {
  return pred.mask()[i] && gt.mask()[i] && std::isfinite(pred.values()[i]) &&
         std::isfinite(gt.values()[i]);
}

std::string threshold_key(double t) {
  std::ostringstream s;
  s << t;
  return s.str();
}

}  // namespace

double badpix(const DisparityMap& pred, const DisparityMap& gt, double threshold) {
  check_shapes(pred, gt);
  if (!(threshold > 0.0)) throw std::invalid_argument("badpix threshold must be positive");
  std::size_t bad = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!joint_valid(pred, gt, i)) continue;
    ++count;
    const double err = std::abs(static_cast<double>(pred.values()[i]) - gt.values()[i]);
    if (err > threshold) ++bad;
  }
  if (count == 0) return 0.0;
  return 100.0 * static_cast<double>(bad) / static_cast<double>(count);
}

double mse100(const DisparityMap& pred, const DisparityMap& gt) {
  check_shapes(pred, gt);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!joint_valid(pred, gt, i)) continue;
    ++count;
    const double err = static_cast<double>(pred.values()[i]) - gt.values()[i];
    sum += err * err;
  }
  if (count == 0) return 0.0;
  return 100.0 * sum / static_cast<double>(count);
}

MetricsReport evaluate(const DisparityMap& pred, const DisparityMap& gt,
                       const std::vector<double>& thresholds, std::string scene) {
  check_shapes(pred, gt);
  MetricsReport r;
  r.scene = std::move(scene);
  for (double t : thresholds) r.badpix[t] = badpix(pred, gt, t);
  r.mse100 = mse100(pred, gt);
  for (std::size_t i = 0; i < pred.size(); ++i) r.pixel_count += joint_valid(pred, gt, i) ? 1 : 0;
  return r;
}

std::string to_json(const MetricsReport& report, const std::string& config_hash) {
  nlohmann::ordered_json j;
  j["scene"] = report.scene;
  nlohmann::ordered_json thresholds = nlohmann::ordered_json::array();
  nlohmann::ordered_json bp = nlohmann::ordered_json::object();
  for (const auto& [t, v] : report.badpix) {
    thresholds.push_back(t);
    bp[threshold_key(t)] = v;
  }
  j["thresholds"] = thresholds;
  j["badpix"] = bp;
  j["mse100"] = report.mse100;
  j["pixel_count"] = report.pixel_count;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  return j.dump(2);
}

std::vector<std::pair<int, double>> profile_line(const DisparityMap& map, int row) {
  if (row < 0 || row >= map.height()) {
    throw std::out_of_range("profile row " + std::to_string(row) + " outside [0, " +
                            std::to_string(map.height()) + ")");
  }
  std::vector<std::pair<int, double>> out;
  out.reserve(map.width());
  for (int col = 0; col < map.width(); ++col) {
    const double v = map.valid(col, row) ? map.at(col, row) : std::nan("");
    out.emplace_back(col, v);
  }
  return out;
}

std::string profile_csv(const std::vector<std::pair<int, double>>& profile) {
  std::ostringstream s;
  s.precision(9);
  s << "col,disparity\n";
  for (const auto& [col, v] : profile) s << col << ',' << v << '\n';
  return s.str();
}

}  // namespace lfndf
