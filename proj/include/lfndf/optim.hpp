#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lfndf/config.hpp"
#include "lfndf/lightfield.hpp"
#include "lfndf/loss.hpp"
#include "lfndf/model.hpp"

namespace lfndf {

/// Adaptive-moment optimizer state, one slot per model parameter.
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double learning_rate = 0.0;

  explicit OptimizerState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update of params in place with the given rate.
void adam_update(std::span<double> params, std::span<const double> grad, OptimizerState& state,
                 double learning_rate, double beta1, double beta2, double eps);

/// learning_rate * lr_decay^(step / (iterations - 1)).
double learning_rate_at(int step, const ReconstructionConfig& cfg);

/// Disparity noise: log-linear from noise_start to noise_end over the first
/// round(noise_fraction * iterations) steps, zero afterwards.
double noise_sigma(int step, const ReconstructionConfig& cfg);

struct PatchOrigin {
  int col = 0;
  int row = 0;
  bool operator==(const PatchOrigin&) const = default;
};

/// Uniform patch origins with the whole patch inside the image.
/// Throws std::invalid_argument if the patch does not fit.
std::vector<PatchOrigin> sample_patches(std::mt19937_64& rng, int height, int width,
                                        const ReconstructionConfig& cfg);

/// Discrete decisions of one loss evaluation. Replaying them evaluates the
/// loss on the smooth piece containing the recorded point.
struct BranchState {
  ActivationPattern activations;
  std::vector<std::vector<std::vector<SampleCell>>> cells;  // patch, view, pixel
  std::vector<ViewSelection> selections;
  std::vector<std::vector<std::int8_t>> l1_signs;
};

struct LossEvaluation {
  double loss = 0.0;
  double monitor = 0.0;  // objective_full on the noise-free batch, if requested
  std::vector<double> gradient;
  BranchState branches;
  PatchBatch batch;
};

struct EvaluationOptions {
  bool gradient = true;
  bool monitor = false;
  const BranchState* replay = nullptr;
  bool photometric = true;  // false evaluates the TV term alone
};

/// Training loss (selected views plus TV) of the patches at `origins`, and its parameter gradient.
/// `noise` (one value per patch pixel, or empty) is added to the predicted
/// disparities before warping and is not differentiated.
LossEvaluation evaluate_loss(const NdfModel& model, const LightField& lf,
                             std::span<const PatchOrigin> origins, const ReconstructionConfig& cfg,
                             std::span<const double> noise, const EvaluationOptions& options = {});

struct StepResult {
  double loss = 0.0;
  double monitor = 0.0;
  double sigma = 0.0;
  double learning_rate = 0.0;
  std::vector<PatchOrigin> origins;
};

/// One iteration: sample patches, predict, add noise, warp, select, back-
/// propagate, update. Randomness derives from (cfg.seed, step) only.
/// Throws DivergenceError if the loss, gradient or updated parameters are
/// not finite.
StepResult train_step(NdfModel& model, const LightField& lf, OptimizerState& state,
                      const ReconstructionConfig& cfg, int step, bool monitor = false);

struct LogRecord {
  int step = 0;
  double loss8 = 0.0;
  double loss6 = 0.0;
  double sigma = 0.0;
  double learning_rate = 0.0;
};

struct Reconstruction {
  NdfModel model;
  DisparityMap disparity;
  std::vector<LogRecord> log;
  std::vector<double> losses;  // every step
};

using ProgressCallback = std::function<void(const LogRecord&)>;

/// Runs cfg.iterations train steps from a fresh model and renders the field
/// at the reference-view resolution.
Reconstruction reconstruct(const LightField& lf, const ReconstructionConfig& cfg,
                           const ProgressCallback& progress = {});

void write_log_csv(std::span<const LogRecord> log, const std::filesystem::path& path);

struct GradCheckGroup {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;  // hash features, MLP weights, MLP biases
  double max_rel_error = 0.0;
  int draws = 0;              // parameter points tried before a well-conditioned one
  std::size_t branch_crossings = 0;  // stencils that changed a discrete decision
};

struct GradCheckOptions {
  double epsilon = 1e-3;
  double rel_floor = 1e-6;  // denominator floor of the relative error
  bool tv_only = false;
  std::uint64_t seed = 1;
  int max_draws = 500;
};

/// Compares the analytic loss gradient with central finite differences over
/// every parameter at a random well-conditioned parameter point. Differences
/// are taken with the discrete decisions (activation signs, interpolation
/// cells, |.| signs, view selection) held at their values at that point.
GradCheckReport grad_check(const ReconstructionConfig& cfg, const LightField& lf,
                           const GradCheckOptions& options = {});

/// The tiny configuration used for gradient checks: two levels at
/// resolutions 4 and 8, 2^6 table entries, 8 hidden units, 16x16 patches.
ReconstructionConfig tiny_config();

}  // namespace lfndf
