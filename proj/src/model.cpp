#include "lfndf/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "lfndf/errors.hpp"

namespace lfndf {

namespace {

// Columns per GEMM call. The tail is padded so every call has the same shape
// and each column's arithmetic is independent of its batch neighbours.
constexpr std::size_t kChunk = 256;

constexpr char kMagic[8] = {'L', 'F', 'N', 'D', 'F', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

void validate(const ModelConfig& cfg) {
  if (cfg.levels < 1) throw std::invalid_argument("model: levels must be >= 1");
  if (cfg.features < 1) throw std::invalid_argument("model: features must be >= 1");
  if (cfg.log2_table_size < 1 || cfg.log2_table_size > 30) {
    throw std::invalid_argument("model: log2_table_size out of range");
  }
  if (cfg.min_resolution < 1) throw std::invalid_argument("model: resolution must be >= 1");
  if (cfg.min_resolution > cfg.max_resolution) {
    throw std::invalid_argument("model: resolutions must increase from min to max");
  }
  if (cfg.hidden_width < 1 || cfg.hidden_layers < 1) {
    throw std::invalid_argument("model: MLP needs at least one hidden layer of width >= 1");
  }
}

ParamLayout make_layout(const ModelConfig& cfg) {
  ParamLayout layout;
  const std::size_t table = (std::size_t{1} << cfg.log2_table_size) * cfg.features;
  std::size_t off = 0;
  for (int l = 0; l < cfg.levels; ++l) {
    layout.table_offset.push_back(off);
    off += table;
  }
  int in = cfg.levels * cfg.features;
  for (int k = 0; k <= cfg.hidden_layers; ++k) {
    const int out = k == cfg.hidden_layers ? 1 : cfg.hidden_width;
    layout.layer_in.push_back(in);
    layout.layer_out.push_back(out);
    layout.weight_offset.push_back(off);
    off += static_cast<std::size_t>(in) * out;
    layout.bias_offset.push_back(off);
    off += out;
    in = out;
  }
  layout.total = off;
  return layout;
}

// Corner slots and bilinear weights of one point at one level.
void level_corners(Coord2 x, int res, std::uint32_t table_size, std::uint32_t* slots,
                   double* weights) {
  const double px = std::clamp(x.x, 0.0, 1.0) * res;
  const double py = std::clamp(x.y, 0.0, 1.0) * res;
  int ix = static_cast<int>(std::floor(px));
  int iy = static_cast<int>(std::floor(py));
  ix = std::min(ix, res - 1);
  iy = std::min(iy, res - 1);
  const double fx = px - ix;
  const double fy = py - iy;
  slots[0] = grid_slot(ix, iy, res, table_size);
  slots[1] = grid_slot(ix + 1, iy, res, table_size);
  slots[2] = grid_slot(ix, iy + 1, res, table_size);
  slots[3] = grid_slot(ix + 1, iy + 1, res, table_size);
  weights[0] = (1.0 - fx) * (1.0 - fy);
  weights[1] = fx * (1.0 - fy);
  weights[2] = (1.0 - fx) * fy;
  weights[3] = fx * fy;
}

template <typename Derived>
void write_bytes(std::ostream& out, const Derived& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <typename T>
T read_bytes(std::istream& in, const std::string& what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  if (!in) throw FormatError("truncated checkpoint while reading " + what);
  return value;
}

}  // namespace

std::vector<int> level_resolutions(const ModelConfig& cfg) {
  validate(cfg);
  std::vector<int> res(cfg.levels);
  for (int l = 0; l < cfg.levels; ++l) {
    const double t = cfg.levels == 1 ? 0.0 : static_cast<double>(l) / (cfg.levels - 1);
    res[l] = static_cast<int>(std::lround(cfg.min_resolution +
                                          t * (cfg.max_resolution - cfg.min_resolution)));
  }
  return res;
}

std::uint32_t grid_slot(int ix, int iy, int resolution, std::uint32_t table_size) {
  const auto side = static_cast<std::uint64_t>(resolution) + 1;
  if (side * side <= table_size) {
    return static_cast<std::uint32_t>(static_cast<std::uint64_t>(iy) * side + ix);
  }
  const std::uint32_t h = (static_cast<std::uint32_t>(ix) * 1u) ^
                          (static_cast<std::uint32_t>(iy) * 2654435761u);
  return h & (table_size - 1);
}

std::size_t param_count(const ModelConfig& cfg) {
  validate(cfg);
  return make_layout(cfg).total;
}

NdfModel::NdfModel(const ModelConfig& cfg, int ref_height, int ref_width)
    : cfg_(cfg),
      resolutions_(level_resolutions(cfg)),
      layout_(make_layout(cfg)),
      ref_height_(ref_height),
      ref_width_(ref_width),
      params_(layout_.total, 0.0) {
  if (ref_height < 1 || ref_width < 1) throw std::invalid_argument("model: empty reference size");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> feature(-1e-4, 1e-4);
  for (int l = 0; l < cfg_.levels; ++l) {
    for (double& f : table(l)) f = feature(rng);
  }
  for (int k = 0; k < dense_layers(); ++k) {
    const double bound = std::sqrt(6.0 / layout_.layer_in[k]);
    std::uniform_real_distribution<double> w(-bound, bound);
    auto W = weight(k);
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = w(rng);
    }
  }
}

std::span<double> NdfModel::table(int level) {
  return {params_.data() + layout_.table_offset.at(level),
          static_cast<std::size_t>(table_size()) * cfg_.features};
}
std::span<const double> NdfModel::table(int level) const {
  return {params_.data() + layout_.table_offset.at(level),
          static_cast<std::size_t>(table_size()) * cfg_.features};
}
Eigen::Map<Eigen::MatrixXd> NdfModel::weight(int layer) {
  return {params_.data() + layout_.weight_offset.at(layer), layout_.layer_out[layer],
          layout_.layer_in[layer]};
}
Eigen::Map<const Eigen::MatrixXd> NdfModel::weight(int layer) const {
  return {params_.data() + layout_.weight_offset.at(layer), layout_.layer_out[layer],
          layout_.layer_in[layer]};
}
Eigen::Map<Eigen::VectorXd> NdfModel::bias(int layer) {
  return {params_.data() + layout_.bias_offset.at(layer), layout_.layer_out[layer]};
}
Eigen::Map<const Eigen::VectorXd> NdfModel::bias(int layer) const {
  return {params_.data() + layout_.bias_offset.at(layer), layout_.layer_out[layer]};
}

std::vector<double> encode(const NdfModel& model, Coord2 x) {
  const int F = model.config().features;
  std::vector<double> out(static_cast<std::size_t>(model.encoding_width()), 0.0);
  std::uint32_t slots[4];
  double w[4];
  for (int l = 0; l < model.config().levels; ++l) {
    level_corners(x, model.resolutions()[l], model.table_size(), slots, w);
    const auto table = model.table(l);
    for (int c = 0; c < 4; ++c) {
      for (int f = 0; f < F; ++f) out[l * F + f] += w[c] * table[slots[c] * F + f];
    }
  }
  return out;
}

ActivationPattern ForwardCache::pattern() const {
  ActivationPattern p;
  for (const Eigen::MatrixXd& z : pre) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) bits[i] = z.data()[i] > 0.0 ? 1 : 0;
    p.positive.push_back(std::move(bits));
  }
  return p;
}

void forward(const NdfModel& model, std::span<const Coord2> xs, ForwardCache& cache,
             const ActivationPattern* replay) {
  const ModelConfig& cfg = model.config();
  const int L = cfg.levels;
  const int F = cfg.features;
  const std::size_t n = xs.size();
  const std::size_t padded = (n + kChunk - 1) / kChunk * kChunk;
  cache.count = n;
  cache.padded = padded;
  cache.slots.resize(n * L * 4);
  cache.weights.resize(n * L * 4);
  cache.input.setZero(model.encoding_width(), static_cast<Eigen::Index>(padded));

  for (std::size_t i = 0; i < n; ++i) {
    for (int l = 0; l < L; ++l) {
      std::uint32_t* slots = &cache.slots[(i * L + l) * 4];
      double* w = &cache.weights[(i * L + l) * 4];
      level_corners(xs[i], model.resolutions()[l], model.table_size(), slots, w);
      const auto table = model.table(l);
      for (int f = 0; f < F; ++f) {
        double acc = 0.0;
        for (int c = 0; c < 4; ++c) acc += w[c] * table[slots[c] * F + f];
        cache.input(l * F + f, static_cast<Eigen::Index>(i)) = acc;
      }
    }
  }

  const int hidden = cfg.hidden_layers;
  cache.pre.resize(hidden);
  cache.act.resize(hidden);
  const double slope = cfg.leaky_slope;
  if (replay && replay->positive.size() != static_cast<std::size_t>(hidden)) {
    throw std::invalid_argument("forward: activation pattern has the wrong depth");
  }
  const Eigen::Index cols = static_cast<Eigen::Index>(padded);
  const Eigen::Index chunk = static_cast<Eigen::Index>(kChunk);
  for (int k = 0; k < hidden; ++k) {
    const Eigen::MatrixXd& in = k == 0 ? cache.input : cache.act[k - 1];
    Eigen::MatrixXd& z = cache.pre[k];
    Eigen::MatrixXd& a = cache.act[k];
    z.resize(model.layout().layer_out[k], cols);
    // Aligned copies: products on maps into arbitrary heap storage peel by
    // alignment, which changes summation order from run to run.
    const Eigen::MatrixXd W = model.weight(k);
    for (Eigen::Index s = 0; s < cols; s += chunk) {
      z.middleCols(s, chunk).noalias() = W * in.middleCols(s, chunk);
    }
    z.colwise() += model.bias(k);
    a.resize(z.rows(), z.cols());
    if (replay) {
      const auto& bits = replay->positive[k];
      if (bits.size() != static_cast<std::size_t>(z.size())) {
        throw std::invalid_argument("forward: activation pattern size mismatch");
      }
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        a.data()[i] = bits[i] ? z.data()[i] : slope * z.data()[i];
      }
    } else {
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double v = z.data()[i];
        a.data()[i] = v > 0.0 ? v : slope * v;
      }
    }
  }

  const Eigen::RowVectorXd Wout = model.weight(hidden);
  const double bout = model.bias(hidden)(0);
  Eigen::RowVectorXd y(cols);
  for (Eigen::Index s = 0; s < cols; s += chunk) {
    y.middleCols(s, chunk).noalias() = Wout * cache.act[hidden - 1].middleCols(s, chunk);
  }
  cache.output.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    cache.output[i] = cfg.output_scale * (y(static_cast<Eigen::Index>(i)) + bout);
  }
}

void backward(const NdfModel& model, const ForwardCache& cache, std::span<const double> cot,
              std::span<double> grad, const ActivationPattern* replay) {
  if (cot.size() != cache.count) {
    throw std::invalid_argument("backward: cotangent has " + std::to_string(cot.size()) +
                                " entries for " + std::to_string(cache.count) + " points");
  }
  if (grad.size() != model.param_count()) {
    throw std::invalid_argument("backward: gradient buffer has the wrong size");
  }
  const ModelConfig& cfg = model.config();
  const ParamLayout& layout = model.layout();
  const int hidden = cfg.hidden_layers;
  const Eigen::Index cols = static_cast<Eigen::Index>(cache.padded);
  const Eigen::Index chunk = static_cast<Eigen::Index>(kChunk);
  const double slope = cfg.leaky_slope;

  // Upstream gradient of the current layer's output (rows = units).
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(1, cols);
  for (std::size_t i = 0; i < cache.count; ++i) {
    g(0, static_cast<Eigen::Index>(i)) = cfg.output_scale * cot[i];
  }

  for (int k = hidden; k >= 0; --k) {
    const Eigen::MatrixXd& in = k == 0 ? cache.input : cache.act[k - 1];
    Eigen::Map<Eigen::MatrixXd> dW(grad.data() + layout.weight_offset[k], layout.layer_out[k],
                                   layout.layer_in[k]);
    Eigen::Map<Eigen::VectorXd> db(grad.data() + layout.bias_offset[k], layout.layer_out[k]);
    Eigen::MatrixXd dW_local = Eigen::MatrixXd::Zero(dW.rows(), dW.cols());
    for (Eigen::Index s = 0; s < cols; s += chunk) {
      dW_local.noalias() += g.middleCols(s, chunk) * in.middleCols(s, chunk).transpose();
    }
    dW += dW_local;
    const Eigen::VectorXd db_local = g.rowwise().sum();
    db += db_local;

    const Eigen::MatrixXd W = model.weight(k);
    Eigen::MatrixXd gin(W.cols(), cols);
    for (Eigen::Index s = 0; s < cols; s += chunk) {
      gin.middleCols(s, chunk).noalias() = W.transpose() * g.middleCols(s, chunk);
    }
    if (k > 0) {
      const Eigen::MatrixXd& z = cache.pre[k - 1];
      if (replay) {
        const auto& bits = replay->positive[k - 1];
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          if (!bits[i]) gin.data()[i] *= slope;
        }
      } else {
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          if (!(z.data()[i] > 0.0)) gin.data()[i] *= slope;
        }
      }
    }
    g = std::move(gin);
  }

  // g now holds d/d(encoding); scatter into the feature tables.
  const int L = cfg.levels;
  const int F = cfg.features;
  for (int l = 0; l < L; ++l) {
    double* table = grad.data() + layout.table_offset[l];
    for (std::size_t i = 0; i < cache.count; ++i) {
      const std::uint32_t* slots = &cache.slots[(i * L + l) * 4];
      const double* w = &cache.weights[(i * L + l) * 4];
      for (int f = 0; f < F; ++f) {
        const double gi = g(l * F + f, static_cast<Eigen::Index>(i));
        if (gi == 0.0) continue;
        for (int c = 0; c < 4; ++c) table[slots[c] * F + f] += w[c] * gi;
      }
    }
  }
}

std::vector<double> predict(const NdfModel& model, std::span<const Coord2> xs) {
  ForwardCache cache;
  forward(model, xs, cache);
  return std::move(cache.output);
}

std::vector<double> model_backward(const NdfModel& model, std::span<const Coord2> xs,
                                   std::span<const double> cot) {
  if (cot.size() != xs.size()) {
    throw std::invalid_argument("model_backward: cotangent shape does not match the batch");
  }
  ForwardCache cache;
  forward(model, xs, cache);
  std::vector<double> grad(model.param_count(), 0.0);
  backward(model, cache, cot, grad);
  return grad;
}

DisparityMap render_grid(const NdfModel& model, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) throw std::invalid_argument("render_grid: empty output");
  DisparityMap map(out_width, out_height);
  // One image row block at a time bounds the cache size.
  const int rows_per_block = std::max(1, static_cast<int>(65536 / out_width));
  std::vector<Coord2> xs;
  for (int r0 = 0; r0 < out_height; r0 += rows_per_block) {
    const int r1 = std::min(out_height, r0 + rows_per_block);
    xs.clear();
    for (int r = r0; r < r1; ++r) {
      for (int c = 0; c < out_width; ++c) xs.push_back(pixel_center(c, r, out_height, out_width));
    }
    const auto d = predict(model, xs);
    std::size_t i = 0;
    for (int r = r0; r < r1; ++r) {
      for (int c = 0; c < out_width; ++c) map.at(c, r) = static_cast<float>(d[i++]);
    }
  }
  return map;
}

void save_checkpoint(const NdfModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  const ModelConfig& c = model.config();
  out.write(kMagic, sizeof(kMagic));
  write_bytes(out, kCheckpointVersion);
  const std::int32_t ints[] = {c.levels,         c.log2_table_size, c.features,
                               c.min_resolution, c.max_resolution,  c.hidden_width,
                               c.hidden_layers,  model.ref_height(), model.ref_width()};
  for (std::int32_t v : ints) write_bytes(out, v);
  write_bytes(out, c.leaky_slope);
  write_bytes(out, c.output_scale);
  write_bytes(out, static_cast<std::uint64_t>(c.seed));
  write_bytes(out, static_cast<std::uint64_t>(model.param_count()));
  out.write(reinterpret_cast<const char*>(model.params().data()),
            static_cast<std::streamsize>(model.param_count() * sizeof(double)));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

NdfModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not an NDF checkpoint: " + path.string());
  }
  const auto version = read_bytes<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  c.levels = read_bytes<std::int32_t>(in, "levels");
  c.log2_table_size = read_bytes<std::int32_t>(in, "log2_table_size");
  c.features = read_bytes<std::int32_t>(in, "features");
  c.min_resolution = read_bytes<std::int32_t>(in, "min_resolution");
  c.max_resolution = read_bytes<std::int32_t>(in, "max_resolution");
  c.hidden_width = read_bytes<std::int32_t>(in, "hidden_width");
  c.hidden_layers = read_bytes<std::int32_t>(in, "hidden_layers");
  const auto ref_h = read_bytes<std::int32_t>(in, "ref_height");
  const auto ref_w = read_bytes<std::int32_t>(in, "ref_width");
  c.leaky_slope = read_bytes<double>(in, "leaky_slope");
  c.output_scale = read_bytes<double>(in, "output_scale");
  c.seed = read_bytes<std::uint64_t>(in, "seed");
  const auto count = read_bytes<std::uint64_t>(in, "parameter count");

  NdfModel model;
  try {
    model = NdfModel(c, ref_h, ref_w);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("corrupt checkpoint configuration: ") + e.what());
  }
  if (count != model.param_count()) {
    throw FormatError("checkpoint parameter count does not match its configuration");
  }
  auto params = model.params();
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(params.size() * sizeof(double))) {
    throw FormatError("truncated checkpoint payload: " + path.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after checkpoint payload: " + path.string());
  }
  return model;
}

}  // namespace lfndf
