#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "lfndf/lightfield.hpp"
#include "lfndf/warp.hpp"

namespace lfndf {

struct LossWeights {
  double alpha = 1.0;  // SSIM weight
  double beta = 1.0;   // TV weight
  int mssim_window = 11;
  double mssim_sigma = 1.5;
  double charbonnier_eps = 1e-6;
  bool photometric = true;  // false leaves only the TV term

  /// Throws std::invalid_argument on negative weights or an even/short window.
  void validate() const;
};

/// Channel-interleaved planar patch in double precision.
struct Patch2D {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  Patch2D() = default;
  Patch2D(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int col, int row, int ch = 0) {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  double at(int col, int row, int ch = 0) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
};

/// Local SSIM on the window centers whose full window fits in the patch
/// ("valid" placement), channel-averaged, plus its mean.
struct SsimMap {
  int width = 0;  // patch width - window + 1
  int height = 0;
  std::vector<double> values;
  double mean = 0.0;
};

/// Gaussian-window SSIM with C1 = 0.01^2, C2 = 0.03^2 (dynamic range 1).
/// Throws std::invalid_argument if the shapes differ or the patch is smaller
/// than the window.
SsimMap mssim_map(const Patch2D& a, const Patch2D& b, const LossWeights& w);

/// Gradient of sum_c center_weights[c] * SSIM_c(a, b) with respect to b,
/// where SSIM_c is the channel-averaged local value at window center c.
Patch2D mssim_gradient(const Patch2D& a, const Patch2D& b, std::span<const double> center_weights,
                       const LossWeights& w);

/// Mean over all horizontal and vertical forward differences of
/// sqrt(delta^2 + eps^2) - eps. Expects a single-channel patch of at least 2x2.
double tv_term(const Patch2D& d, const LossWeights& w);
/// Gradient of tv_term with respect to every entry of d.
std::vector<double> tv_gradient(const Patch2D& d, const LossWeights& w);

inline constexpr double kInvalidDistance = std::numeric_limits<double>::infinity();

/// Per-pixel view distance E = mean_ch |center - warped| + alpha (1 - SSIM).
/// The local SSIM window is truncated to the patch and renormalized near its
/// edges. A pixel whose window contains any invalid pixel gets
/// kInvalidDistance.
std::vector<double> view_distance(const Patch2D& center, const Patch2D& warped,
                                  std::span<const std::uint8_t> valid, const LossWeights& w);

enum class SelectionMode { half, all };

/// Per-pixel chosen views. With n finite distances at a pixel the
/// selection keeps floor(n / 2) views (all of them when n < 2) in `half`
/// mode, and all n in `all` mode. Ties go to the lower view index.
struct ViewSelection {
  int pixels = 0;
  int views = 0;
  std::vector<std::uint8_t> selected;  // pixels x views, view-minor
  std::vector<int> count;

  bool is_selected(int pixel, int view) const {
    return selected[static_cast<std::size_t>(pixel) * views + view] != 0;
  }
};

/// `distances[v][i]` is E of view v at pixel i.
ViewSelection select_views(std::span<const std::vector<double>> distances,
                           SelectionMode mode = SelectionMode::half);

/// One non-reference view warped over a patch.
struct ViewWarp {
  ViewCoordinate view;
  WarpBatch samples;
};

/// A square patch of the reference view with the disparities predicted for
/// it and every other view warped onto it.
struct PatchSample {
  int origin_col = 0;
  int origin_row = 0;
  int size = 0;
  int channels = 1;
  std::vector<double> center;     // size*size*channels
  std::vector<double> disparity;  // predicted, size*size
  std::vector<ViewWarp> views;

  Patch2D center_patch() const;
  Patch2D warped_patch(std::size_t view) const;
  Patch2D disparity_patch() const;
};

struct PatchBatch {
  std::vector<PatchSample> patches;
};

/// Distances of every view of a patch, with the SSIM moments cached for the
/// reverse pass.
struct ViewDistances {
  int side = 0;  // patch side; every pixel carries a distance
  std::vector<std::vector<double>> e;
  // Per view and channel: local mu_b, E[b^2], E[ab] at every pixel.
  std::vector<std::vector<std::vector<double>>> mu_b, m_bb, m_ab;
  // Per channel, reference-view moments.
  std::vector<std::vector<double>> mu_a, m_aa;
};

ViewDistances view_distances(const PatchSample& patch, const LossWeights& w);

struct PatchLoss {
  double loss = 0.0;
  double photometric = 0.0;
  double tv = 0.0;
  std::vector<double> d_cotangent;  // d loss / d disparity, size*size
  std::vector<std::int8_t> l1_signs;  // per view, pixel, channel
};

/// Selected-view loss of one patch:
///   (1 / #pixels) sum_x sum_{v selected at x} E_v(x) + beta * TV(d).
/// Selection is held fixed. `frozen_signs` (as returned in l1_signs) pins the
/// sign used for the |.| derivative. Throws std::domain_error if no pixel has
/// a selected view and the photometric term is enabled.
PatchLoss training_loss(const PatchSample& patch, const ViewDistances& distances,
                        const ViewSelection& selection, const LossWeights& w,
                        std::span<const std::int8_t> frozen_signs = {});

/// Batch version: mean of the per-patch losses; cotangents carry the 1/n.
struct BatchLoss {
  double loss = 0.0;
  std::vector<PatchLoss> patches;
};

BatchLoss training_loss(const PatchBatch& batch, std::span<const ViewDistances> distances,
                        std::span<const ViewSelection> selections, const LossWeights& w);

/// Monitoring objective on the mean-of-views synthesis (all in-bounds views):
/// L1 over valid pixels + alpha (1 - MSSIM) over fully valid windows,
/// + beta * TV.
double objective_full(const PatchSample& patch, const LossWeights& w);
double objective_full(const PatchBatch& batch, const LossWeights& w);

}  // namespace lfndf
