#include "lfndf/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lfndf/errors.hpp"
#include "lfndf/warp.hpp"

namespace lfndf {

namespace {

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

double l2_norm(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x * x;
  return std::sqrt(s);
}

std::mt19937_64 step_rng(std::uint64_t seed, int step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step)};
  return std::mt19937_64(seq);
}

PatchSample build_patch(const LightField& lf, PatchOrigin origin, int size,
                        std::span<const double> d,
                        const std::vector<std::vector<SampleCell>>* cells) {
  const Image& ref = lf.center_view();
  const int C = ref.channels();
  PatchSample p;
  p.origin_col = origin.col;
  p.origin_row = origin.row;
  p.size = size;
  p.channels = C;
  p.disparity.assign(d.begin(), d.end());
  p.center.resize(static_cast<std::size_t>(size) * size * C);
  std::vector<PixelPos> xs(static_cast<std::size_t>(size) * size);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * size + c;
      xs[i] = {static_cast<double>(origin.col + c), static_cast<double>(origin.row + r)};
      const float* px = ref.pixel(origin.col + c, origin.row + r);
      for (int ch = 0; ch < C; ++ch) p.center[i * C + ch] = px[ch];
    }
  }
  const auto views = lf.surrounding_views();
  p.views.reserve(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    std::span<const SampleCell> frozen;
    if (cells) frozen = (*cells)[v];
    p.views.push_back({views[v], warp_view(lf, views[v], xs, d, frozen)});
  }
  return p;
}

bool same_cells(const std::vector<SampleCell>& a, const std::vector<SampleCell>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].in_bounds != b[i].in_bounds) return false;
    if (a[i].in_bounds && (a[i].col != b[i].col || a[i].row != b[i].row)) return false;
  }
  return true;
}

bool same_branches(const BranchState& a, const BranchState& b) {
  if (a.activations.positive != b.activations.positive) return false;
  if (a.l1_signs != b.l1_signs) return false;
  if (a.selections.size() != b.selections.size() || a.cells.size() != b.cells.size()) return false;
  for (std::size_t p = 0; p < a.selections.size(); ++p) {
    if (a.selections[p].selected != b.selections[p].selected) return false;
  }
  for (std::size_t p = 0; p < a.cells.size(); ++p) {
    if (a.cells[p].size() != b.cells[p].size()) return false;
    for (std::size_t v = 0; v < a.cells[p].size(); ++v) {
      if (!same_cells(a.cells[p][v], b.cells[p][v])) return false;
    }
  }
  return true;
}

std::vector<double> tv_differences(const Patch2D& d) {
  std::vector<double> out;
  for (int r = 0; r < d.height; ++r) {
    for (int c = 0; c < d.width; ++c) {
      if (c + 1 < d.width) out.push_back(d.at(c + 1, r) - d.at(c, r));
      if (r + 1 < d.height) out.push_back(d.at(c, r + 1) - d.at(c, r));
    }
  }
  return out;
}

std::vector<std::int8_t> tv_signs(const PatchBatch& batch) {
  std::vector<std::int8_t> out;
  for (const PatchSample& p : batch.patches) {
    for (double delta : tv_differences(p.disparity_patch())) out.push_back(delta > 0.0 ? 1 : -1);
  }
  return out;
}

}  // namespace

void adam_update(std::span<double> params, std::span<const double> grad, OptimizerState& state,
                 double learning_rate, double beta1, double beta2, double eps) {
  if (grad.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_update: shape mismatch");
  }
  const std::int64_t t = state.step + 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= learning_rate * mhat / (std::sqrt(vhat) + eps);
  }
  state.step = t;
  state.learning_rate = learning_rate;
}

double learning_rate_at(int step, const ReconstructionConfig& cfg) {
  if (cfg.iterations <= 1) return cfg.learning_rate;
  const double t = static_cast<double>(step) / (cfg.iterations - 1);
  return cfg.learning_rate * std::pow(cfg.lr_decay, t);
}

double noise_sigma(int step, const ReconstructionConfig& cfg) {
  const int span = static_cast<int>(std::lround(cfg.noise_fraction * cfg.iterations));
  if (step < 0 || step >= span || cfg.noise_start <= 0.0) return 0.0;
  if (step == span - 1) return span == 1 ? cfg.noise_start : cfg.noise_end;
  const double t = static_cast<double>(step) / (span - 1);
  if (cfg.noise_end > 0.0) {
    return std::exp(std::log(cfg.noise_start) + t * (std::log(cfg.noise_end) - std::log(cfg.noise_start)));
  }
  return cfg.noise_start * (1.0 - t);
}

std::vector<PatchOrigin> sample_patches(std::mt19937_64& rng, int height, int width,
                                        const ReconstructionConfig& cfg) {
  if (cfg.patch_size > height || cfg.patch_size > width || cfg.patch_size < 1) {
    throw std::invalid_argument("sample_patches: patch of " + std::to_string(cfg.patch_size) +
                                " does not fit a " + std::to_string(height) + "x" +
                                std::to_string(width) + " image");
  }
  std::uniform_int_distribution<int> col(0, width - cfg.patch_size);
  std::uniform_int_distribution<int> row(0, height - cfg.patch_size);
  std::vector<PatchOrigin> out(cfg.patches_per_step);
  for (auto& o : out) {
    o.col = col(rng);
    o.row = row(rng);
  }
  return out;
}

LossEvaluation evaluate_loss(const NdfModel& model, const LightField& lf,
                             std::span<const PatchOrigin> origins, const ReconstructionConfig& cfg,
                             std::span<const double> noise, const EvaluationOptions& options) {
  const int H = lf.center_view().height();
  const int W = lf.center_view().width();
  const int P = cfg.patch_size;
  const std::size_t n = static_cast<std::size_t>(P) * P;
  if (!noise.empty() && noise.size() != n * origins.size()) {
    throw std::invalid_argument("evaluate_loss: one noise value per patch pixel required");
  }
  LossWeights w = cfg.loss();
  w.photometric = options.photometric;
  const BranchState* replay = options.replay;

  std::vector<Coord2> xs;
  xs.reserve(n * origins.size());
  for (const PatchOrigin& o : origins) {
    if (o.col < 0 || o.row < 0 || o.col + P > W || o.row + P > H) {
      throw std::invalid_argument("evaluate_loss: patch outside the image");
    }
    for (int r = 0; r < P; ++r) {
      for (int c = 0; c < P; ++c) xs.push_back(pixel_center(o.col + c, o.row + r, H, W));
    }
  }
  ForwardCache cache;
  forward(model, xs, cache, replay ? &replay->activations : nullptr);

  std::vector<double> d(cache.output.begin(), cache.output.begin() + xs.size());
  for (std::size_t i = 0; i < noise.size(); ++i) d[i] += noise[i];

  LossEvaluation out;
  out.branches.activations = replay ? replay->activations : cache.pattern();
  const double inv = origins.empty() ? 0.0 : 1.0 / static_cast<double>(origins.size());
  std::vector<double> cot(xs.size(), 0.0);
  for (std::size_t p = 0; p < origins.size(); ++p) {
    const std::span<const double> dp(d.data() + p * n, n);
    PatchSample patch = build_patch(lf, origins[p], P, dp, replay ? &replay->cells[p] : nullptr);
    std::vector<std::vector<SampleCell>> cells;
    cells.reserve(patch.views.size());
    for (const ViewWarp& vw : patch.views) cells.push_back(vw.samples.cells);

    const ViewDistances dist = view_distances(patch, w);
    ViewSelection sel = replay ? replay->selections[p] : select_views(dist.e, cfg.selection);
    LossWeights pw = w;
    if (std::all_of(sel.count.begin(), sel.count.end(), [](int k) { return k == 0; })) {
      pw.photometric = false;  // every window leaves the image in every view
    }
    std::span<const std::int8_t> signs;
    if (replay && pw.photometric) signs = replay->l1_signs[p];
    const PatchLoss pl = training_loss(patch, dist, sel, pw, signs);
    out.loss += pl.loss * inv;
    for (std::size_t i = 0; i < n; ++i) cot[p * n + i] = pl.d_cotangent[i] * inv;

    out.branches.cells.push_back(std::move(cells));
    out.branches.selections.push_back(std::move(sel));
    out.branches.l1_signs.push_back(pl.l1_signs);
    out.batch.patches.push_back(std::move(patch));
  }

  if (options.gradient) {
    out.gradient.assign(model.param_count(), 0.0);
    backward(model, cache, cot, out.gradient, replay ? &replay->activations : nullptr);
  }
  if (options.monitor) {
    if (noise.empty()) {
      out.monitor = objective_full(out.batch, w);
    } else {
      PatchBatch clean;
      for (std::size_t p = 0; p < origins.size(); ++p) {
        const std::span<const double> dp(cache.output.data() + p * n, n);
        clean.patches.push_back(build_patch(lf, origins[p], P, dp, nullptr));
      }
      out.monitor = objective_full(clean, w);
    }
  }
  return out;
}

StepResult train_step(NdfModel& model, const LightField& lf, OptimizerState& state,
                      const ReconstructionConfig& cfg, int step, bool monitor) {
  const int H = lf.center_view().height();
  const int W = lf.center_view().width();
  if (model.ref_height() != H || model.ref_width() != W) {
    throw std::invalid_argument("train_step: model domain does not match the reference view");
  }
  if (state.m.size() != model.param_count()) {
    throw std::invalid_argument("train_step: optimizer state does not match the model");
  }
  std::mt19937_64 rng = step_rng(cfg.seed, step);
  StepResult res;
  res.origins = sample_patches(rng, H, W, cfg);
  res.sigma = noise_sigma(step, cfg);
  std::vector<double> noise;
  if (res.sigma > 0.0) {
    std::normal_distribution<double> gauss(0.0, res.sigma);
    noise.resize(res.origins.size() * cfg.patch_size * cfg.patch_size);
    for (double& x : noise) x = gauss(rng);
  }
  EvaluationOptions opts;
  opts.monitor = monitor;
  const LossEvaluation ev = evaluate_loss(model, lf, res.origins, cfg, noise, opts);

  auto diverged = [&](const std::string& what) {
    std::ostringstream msg;
    msg << what << " at step " << step << " (parameter norm " << l2_norm(model.params())
        << ", patch origins";
    for (const PatchOrigin& o : res.origins) msg << " (" << o.col << "," << o.row << ")";
    msg << ")";
    return DivergenceError(msg.str());
  };
  if (!std::isfinite(ev.loss)) throw diverged("non-finite loss");
  if (!all_finite(ev.gradient)) throw diverged("non-finite gradient");

  res.learning_rate = learning_rate_at(step, cfg);
  adam_update(model.params(), ev.gradient, state, res.learning_rate, cfg.adam_beta1,
              cfg.adam_beta2, cfg.adam_eps);
  if (!all_finite(model.params())) throw diverged("non-finite parameter");
  res.loss = ev.loss;
  res.monitor = ev.monitor;
  return res;
}

Reconstruction reconstruct(const LightField& input, const ReconstructionConfig& cfg,
                           const ProgressCallback& progress) {
  cfg.validate();
  const LightField gray = cfg.grayscale ? input.to_grayscale() : LightField();
  const LightField& lf = cfg.grayscale ? gray : input;
  const int H = lf.center_view().height();
  const int W = lf.center_view().width();
  Reconstruction out{NdfModel(cfg.model(), H, W), DisparityMap(), {}, {}};
  OptimizerState state(out.model.param_count());
  out.losses.reserve(cfg.iterations);
  for (int step = 0; step < cfg.iterations; ++step) {
    const bool log = step % cfg.log_interval == 0 || step == cfg.iterations - 1;
    const StepResult r = train_step(out.model, lf, state, cfg, step, log);
    out.losses.push_back(r.loss);
    if (log) {
      LogRecord rec{step, r.loss, r.monitor, r.sigma, r.learning_rate};
      out.log.push_back(rec);
      if (progress) progress(rec);
    }
  }
  out.disparity = render_grid(out.model, H, W);
  return out;
}

void write_log_csv(std::span<const LogRecord> log, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f.precision(10);
  f << "step,loss8,loss6,sigma,lr\n";
  for (const LogRecord& r : log) {
    f << r.step << ',' << r.loss8 << ',' << r.loss6 << ',' << r.sigma << ',' << r.learning_rate
      << '\n';
  }
  if (!f) throw IoError("failed writing " + path.string());
}

ReconstructionConfig tiny_config() {
  ReconstructionConfig cfg;
  cfg.levels = 2;
  cfg.log2_table_size = 6;
  cfg.features = 2;
  cfg.min_resolution = 4;
  cfg.max_resolution = 8;
  cfg.mlp_hidden = 8;
  cfg.mlp_layers = 2;
  cfg.patch_size = 16;
  cfg.patches_per_step = 1;
  cfg.iterations = 100;
  cfg.log_interval = 10;
  return cfg;
}

GradCheckReport grad_check(const ReconstructionConfig& cfg, const LightField& lf,
                           const GradCheckOptions& options) {
  cfg.validate();
  const int H = lf.center_view().height();
  const int W = lf.center_view().width();
  NdfModel model(cfg.model(), H, W);
  const ParamLayout& layout = model.layout();
  std::mt19937_64 rng(options.seed);
  const std::vector<PatchOrigin> origins = sample_patches(rng, H, W, cfg);
  std::vector<Coord2> xs;
  for (const PatchOrigin& o : origins) {
    for (int r = 0; r < cfg.patch_size; ++r) {
      for (int c = 0; c < cfg.patch_size; ++c) xs.push_back(pixel_center(o.col + c, o.row + r, H, W));
    }
  }

  auto group_of = [&](std::size_t i) {
    for (std::size_t k = 0; k < layout.bias_offset.size(); ++k) {
      if (i >= layout.bias_offset[k] && i < layout.bias_offset[k] + layout.layer_out[k]) return 2;
    }
    for (std::size_t k = 0; k < layout.weight_offset.size(); ++k) {
      const std::size_t size = static_cast<std::size_t>(layout.layer_in[k]) * layout.layer_out[k];
      if (i >= layout.weight_offset[k] && i < layout.weight_offset[k] + size) return 1;
    }
    return 0;
  };

  EvaluationOptions base_opts;
  base_opts.photometric = !options.tv_only;
  EvaluationOptions plain = base_opts;
  plain.gradient = false;

  // A point is usable when no hidden unit sits on its kink, no disparity
  // difference sits in the high-curvature core of the TV penalty, and no
  // stencil pushes a difference through zero.
  constexpr double kMinPre = 1e-6;
  constexpr double kMinDelta = 1e-3;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  GradCheckReport report;
  while (report.draws < options.max_draws) {
    ++report.draws;
    for (int l = 0; l < cfg.levels; ++l) {
      for (double& x : model.table(l)) x = unit(rng);
    }
    for (int k = 0; k < model.dense_layers(); ++k) {
      const double bound = std::sqrt(6.0 / layout.layer_in[k]);
      auto wk = model.weight(k);
      for (Eigen::Index i = 0; i < wk.size(); ++i) wk.data()[i] = bound * unit(rng);
      auto bk = model.bias(k);
      for (Eigen::Index i = 0; i < bk.size(); ++i) bk[i] = 0.1 * unit(rng);
    }
    // Shift the output away from integer disparities.
    model.bias(model.dense_layers() - 1)[0] += 0.35 / cfg.output_scale;

    ForwardCache cache;
    forward(model, xs, cache);
    bool ok = true;
    for (const auto& pre : cache.pre) {
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(cache.count) && ok; ++j) {
        ok = (pre.col(j).array().abs() >= kMinPre).all();
      }
    }
    if (!ok) continue;
    const LossEvaluation base = evaluate_loss(model, lf, origins, cfg, {}, base_opts);
    const std::vector<std::int8_t> base_tv = tv_signs(base.batch);
    for (const PatchSample& p : base.batch.patches) {
      for (double delta : tv_differences(p.disparity_patch())) ok = ok && std::abs(delta) >= kMinDelta;
    }
    if (ok && !options.tv_only) {
      ok = std::any_of(base.branches.selections.begin(), base.branches.selections.end(),
                       [](const ViewSelection& s) {
                         return std::any_of(s.count.begin(), s.count.end(), [](int k) { return k > 0; });
                       });
    }
    if (!ok) continue;

    EvaluationOptions frozen = base_opts;
    frozen.gradient = false;
    frozen.replay = &base.branches;
    report.groups = {{"hash features", 0, 0.0, 0.0},
                     {"MLP weights", 0, 0.0, 0.0},
                     {"MLP biases", 0, 0.0, 0.0}};
    report.max_rel_error = 0.0;
    report.branch_crossings = 0;
    auto params = model.params();
    bool flipped = false;
    for (std::size_t i = 0; i < params.size() && !flipped; ++i) {
      const double saved = params[i];
      double side[2];
      bool crossed = false;
      for (int s = 0; s < 2; ++s) {
        params[i] = saved + (s == 0 ? options.epsilon : -options.epsilon);
        const LossEvaluation ev = evaluate_loss(model, lf, origins, cfg, {}, frozen);
        side[s] = ev.loss;
        flipped = flipped || tv_signs(ev.batch) != base_tv;
        crossed = crossed ||
                  !same_branches(evaluate_loss(model, lf, origins, cfg, {}, plain).branches,
                                 base.branches);
      }
      params[i] = saved;
      if (crossed) ++report.branch_crossings;

      const double numeric = (side[0] - side[1]) / (2.0 * options.epsilon);
      const double analytic = base.gradient[i];
      const double abs_err = std::abs(analytic - numeric);
      const double rel =
          abs_err / std::max({std::abs(analytic), std::abs(numeric), options.rel_floor});
      GradCheckGroup& g = report.groups[group_of(i)];
      ++g.count;
      g.max_rel_error = std::max(g.max_rel_error, rel);
      g.max_abs_error = std::max(g.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, rel);
    }
    if (!flipped) return report;
  }
  throw std::runtime_error("grad_check: no well-conditioned parameter point in " +
                           std::to_string(options.max_draws) + " draws");
}

}  // namespace lfndf
