#include "lfndf/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "lfndf/errors.hpp"

namespace lfndf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  in.imbue(std::locale::classic());
  T value{};
  in >> value;
  if (in.fail() || !(in >> std::ws).eof()) {
    throw std::invalid_argument("config: cannot parse '" + text + "' for key " + key);
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("config: expected a boolean for key " + key + ", got '" + text + "'");
}

std::string format_double(double v) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(17);
  out << v;
  return out.str();
}

struct Field {
  std::function<void(ReconstructionConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ReconstructionConfig&)> get;
};

template <typename T>
Field number_field(T ReconstructionConfig::*member) {
  return {[member](ReconstructionConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<T>(k, v);
          },
          [member](const ReconstructionConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

// Ordered as they are written out.
const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ReconstructionConfig;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"alpha", number_field(&C::alpha)},
      {"beta", number_field(&C::beta)},
      {"mssim_window", number_field(&C::mssim_window)},
      {"mssim_sigma", number_field(&C::mssim_sigma)},
      {"charbonnier_eps", number_field(&C::charbonnier_eps)},
      {"selection",
       {[](C& c, const std::string& k, const std::string& v) {
          if (v == "half") {
            c.selection = SelectionMode::half;
          } else if (v == "all") {
            c.selection = SelectionMode::all;
          } else {
            throw std::invalid_argument("config: " + k + " must be 'half' or 'all', got '" + v + "'");
          }
        },
        [](const C& c) { return std::string(c.selection == SelectionMode::half ? "half" : "all"); }}},
      {"levels", number_field(&C::levels)},
      {"log2_table_size", number_field(&C::log2_table_size)},
      {"features", number_field(&C::features)},
      {"min_resolution", number_field(&C::min_resolution)},
      {"max_resolution", number_field(&C::max_resolution)},
      {"mlp_hidden", number_field(&C::mlp_hidden)},
      {"mlp_layers", number_field(&C::mlp_layers)},
      {"leaky_slope", number_field(&C::leaky_slope)},
      {"output_scale", number_field(&C::output_scale)},
      {"patch_size", number_field(&C::patch_size)},
      {"patches_per_step", number_field(&C::patches_per_step)},
      {"iterations", number_field(&C::iterations)},
      {"learning_rate", number_field(&C::learning_rate)},
      {"lr_decay", number_field(&C::lr_decay)},
      {"adam_beta1", number_field(&C::adam_beta1)},
      {"adam_beta2", number_field(&C::adam_beta2)},
      {"adam_eps", number_field(&C::adam_eps)},
      {"noise_start", number_field(&C::noise_start)},
      {"noise_end", number_field(&C::noise_end)},
      {"noise_fraction", number_field(&C::noise_fraction)},
      {"seed", number_field(&C::seed)},
      {"grayscale",
       {[](C& c, const std::string& k, const std::string& v) { c.grayscale = parse_bool(k, v); },
        [](const C& c) { return std::string(c.grayscale ? "true" : "false"); }}},
      {"log_interval", number_field(&C::log_interval)},
  };
  return table;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

}  // namespace

ModelConfig ReconstructionConfig::model() const {
  ModelConfig m;
  m.levels = levels;
  m.log2_table_size = log2_table_size;
  m.features = features;
  m.min_resolution = min_resolution;
  m.max_resolution = max_resolution;
  m.hidden_width = mlp_hidden;
  m.hidden_layers = mlp_layers;
  m.leaky_slope = leaky_slope;
  m.output_scale = output_scale;
  m.seed = seed;
  return m;
}

LossWeights ReconstructionConfig::loss() const {
  LossWeights w;
  w.alpha = alpha;
  w.beta = beta;
  w.mssim_window = mssim_window;
  w.mssim_sigma = mssim_sigma;
  w.charbonnier_eps = charbonnier_eps;
  return w;
}

void ReconstructionConfig::validate() const {
  loss().validate();
  require(levels >= 1, "levels must be >= 1");
  require(log2_table_size >= 1 && log2_table_size <= 30, "log2_table_size must be in [1, 30]");
  require(features >= 1, "features must be >= 1");
  require(min_resolution >= 1 && min_resolution <= max_resolution,
          "resolutions must satisfy 1 <= min_resolution <= max_resolution");
  require(mlp_hidden >= 1, "mlp_hidden must be >= 1");
  require(mlp_layers >= 0, "mlp_layers must be >= 0");
  require(std::isfinite(leaky_slope), "leaky_slope must be finite");
  require(std::isfinite(output_scale) && output_scale != 0.0, "output_scale must be finite and nonzero");
  require(patch_size >= mssim_window, "patch_size must be >= mssim_window");
  require(patches_per_step >= 1, "patches_per_step must be >= 1");
  require(iterations >= 1, "iterations must be >= 1");
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, "learning_rate must be >= 0");
  require(std::isfinite(lr_decay) && lr_decay > 0.0, "lr_decay must be > 0");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0, 1)");
  require(adam_eps >= 0.0, "adam_eps must be >= 0");
  require(std::isfinite(noise_start) && noise_end >= 0.0 && noise_start >= noise_end,
          "noise must satisfy noise_start >= noise_end >= 0");
  require(noise_fraction >= 0.0 && noise_fraction <= 1.0, "noise_fraction must be in [0, 1]");
  require(log_interval >= 1, "log_interval must be >= 1");
}

void set_config_value(ReconstructionConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(cfg, key, value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

ReconstructionConfig parse_config(const std::string& text) {
  ReconstructionConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ReconstructionConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string format_config(const ReconstructionConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace lfndf
