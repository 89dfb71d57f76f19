#include "lfndf/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lfndf {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Normalized 1D Gaussian taps; the 2D window is their outer product.
//
// Valid mode keeps only positions whose whole window lies inside the plane.
// Same mode keeps every position and truncates the window at the plane
// border, renormalizing the remaining taps.
class GaussianWindow {
 public:
  enum class Mode { valid, same };

  GaussianWindow(int size, double sigma, Mode mode = Mode::valid)
      : size_(size), radius_(size / 2), mode_(mode), taps_(size) {
    double sum = 0.0;
    for (int k = 0; k < size; ++k) {
      taps_[k] = std::exp(-static_cast<double>((k - radius_) * (k - radius_)) / (2.0 * sigma * sigma));
      sum += taps_[k];
    }
    for (double& t : taps_) t /= sum;
  }

  int out_size(int n) const { return mode_ == Mode::valid ? n - size_ + 1 : n; }

  void filter(const double* in, int width, int height, double* out) const {
    const int qw = out_size(width);
    const int qh = out_size(height);
    const Axis& ax = axis(width, axis_w_);
    const Axis& ay = axis(height, axis_h_);
    tmp_.assign(static_cast<std::size_t>(qw) * height, 0.0);
    for (int row = 0; row < height; ++row) {
      const double* src = in + static_cast<std::size_t>(row) * width;
      double* dst = tmp_.data() + static_cast<std::size_t>(row) * qw;
      for (int c = 0; c < qw; ++c) {
        double acc = 0.0;
        for (int k = ax.k0[c]; k < ax.k1[c]; ++k) acc += taps_[k] * src[c + k - ax.offset];
        dst[c] = acc * ax.norm[c];
      }
    }
    for (int r = 0; r < qh; ++r) {
      double* dst = out + static_cast<std::size_t>(r) * qw;
      std::fill(dst, dst + qw, 0.0);
      for (int k = ay.k0[r]; k < ay.k1[r]; ++k) {
        const double t = taps_[k] * ay.norm[r];
        const double* src = tmp_.data() + static_cast<std::size_t>(r + k - ay.offset) * qw;
        for (int c = 0; c < qw; ++c) dst[c] += t * src[c];
      }
    }
  }

  // Adjoint of filter(): accumulates into a width x height plane.
  void filter_adjoint_add(const double* in, int width, int height, double* out) const {
    const int qw = out_size(width);
    const int qh = out_size(height);
    const Axis& ax = axis(width, axis_w_);
    const Axis& ay = axis(height, axis_h_);
    tmp_.assign(static_cast<std::size_t>(qw) * height, 0.0);
    for (int r = 0; r < qh; ++r) {
      const double* src = in + static_cast<std::size_t>(r) * qw;
      for (int k = ay.k0[r]; k < ay.k1[r]; ++k) {
        const double t = taps_[k] * ay.norm[r];
        double* dst = tmp_.data() + static_cast<std::size_t>(r + k - ay.offset) * qw;
        for (int c = 0; c < qw; ++c) dst[c] += t * src[c];
      }
    }
    for (int row = 0; row < height; ++row) {
      const double* src = tmp_.data() + static_cast<std::size_t>(row) * qw;
      double* dst = out + static_cast<std::size_t>(row) * width;
      for (int c = 0; c < qw; ++c) {
        const double v = src[c] * ax.norm[c];
        for (int k = ax.k0[c]; k < ax.k1[c]; ++k) dst[c + k - ax.offset] += taps_[k] * v;
      }
    }
  }

 private:
  // Tap range and normalization of every output position along one axis.
  struct Axis {
    int n = -1;
    int offset = 0;
    std::vector<int> k0, k1;
    std::vector<double> norm;
  };

  const Axis& axis(int n, Axis& cache) const {
    if (cache.n == n) return cache;
    cache.n = n;
    cache.offset = mode_ == Mode::valid ? 0 : radius_;
    const int q = out_size(n);
    cache.k0.resize(q);
    cache.k1.resize(q);
    cache.norm.resize(q);
    for (int i = 0; i < q; ++i) {
      cache.k0[i] = std::max(0, cache.offset - i);
      cache.k1[i] = std::min(size_, n - i + cache.offset);
      double sum = 0.0;
      for (int k = cache.k0[i]; k < cache.k1[i]; ++k) sum += taps_[k];
      cache.norm[i] = mode_ == Mode::valid ? 1.0 : 1.0 / sum;
    }
    return cache;
  }

  int size_;
  int radius_;
  Mode mode_;
  std::vector<double> taps_;
  mutable Axis axis_w_, axis_h_;
  mutable std::vector<double> tmp_;
};

struct SsimTerms {
  double s;
  double d_mu_b;
  double d_m_bb;
  double d_m_ab;
};

SsimTerms ssim_terms(double mu_a, double m_aa, double mu_b, double m_bb, double m_ab) {
  const double var_a = m_aa - mu_a * mu_a;
  const double var_b = m_bb - mu_b * mu_b;
  const double cov = m_ab - mu_a * mu_b;
  const double a1 = 2.0 * mu_a * mu_b + kC1;
  const double a2 = 2.0 * cov + kC2;
  const double b1 = mu_a * mu_a + mu_b * mu_b + kC1;
  const double b2 = var_a + var_b + kC2;
  const double den = b1 * b2;
  const double s = a1 * a2 / den;
  SsimTerms t;
  t.s = s;
  t.d_mu_b = (2.0 * mu_a * a2 - 2.0 * mu_a * a1) / den - s * (2.0 * mu_b / b1 - 2.0 * mu_b / b2);
  t.d_m_ab = 2.0 * a1 / den;
  t.d_m_bb = -s / b2;
  return t;
}

std::vector<double> channel_plane(const std::vector<double>& data, int n, int channels, int ch) {
  std::vector<double> plane(n);
  for (int i = 0; i < n; ++i) plane[i] = data[static_cast<std::size_t>(i) * channels + ch];
  return plane;
}

std::vector<double> product(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

void check_window(const LossWeights& w, int width, int height) {
  w.validate();
  if (width < w.mssim_window || height < w.mssim_window) {
    throw std::invalid_argument("patch " + std::to_string(width) + "x" + std::to_string(height) +
                                " is smaller than the SSIM window " +
                                std::to_string(w.mssim_window));
  }
}

// Moments of one plane pair on the window-center grid.
struct Moments {
  std::vector<double> mu_a, m_aa, mu_b, m_bb, m_ab;
};

Moments moments(const GaussianWindow& g, const std::vector<double>& a, const std::vector<double>& b,
                int width, int height) {
  const std::size_t q = static_cast<std::size_t>(g.out_size(width)) * g.out_size(height);
  Moments m;
  for (auto* v : {&m.mu_a, &m.m_aa, &m.mu_b, &m.m_bb, &m.m_ab}) v->resize(q);
  g.filter(a.data(), width, height, m.mu_a.data());
  g.filter(product(a, a).data(), width, height, m.m_aa.data());
  g.filter(b.data(), width, height, m.mu_b.data());
  g.filter(product(b, b).data(), width, height, m.m_bb.data());
  g.filter(product(a, b).data(), width, height, m.m_ab.data());
  return m;
}

// Centers whose window touches a pixel with valid == 0.
std::vector<std::uint8_t> invalid_windows(const GaussianWindow& g,
                                          std::span<const std::uint8_t> valid, int width,
                                          int height) {
  std::vector<double> bad(valid.size());
  bool any = false;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    bad[i] = valid[i] ? 0.0 : 1.0;
    any = any || !valid[i];
  }
  const std::size_t q = static_cast<std::size_t>(g.out_size(width)) * g.out_size(height);
  std::vector<std::uint8_t> out(q, 0);
  if (!any) return out;
  std::vector<double> f(q);
  g.filter(bad.data(), width, height, f.data());
  for (std::size_t i = 0; i < q; ++i) out[i] = f[i] > 0.0 ? 1 : 0;
  return out;
}

// Adds d(sum_c G.mu[c] mu_b + G.ab[c] m_ab + G.bb[c] m_bb)/d b into grad.
void moments_adjoint(const GaussianWindow& g, const std::vector<double>& a,
                     const std::vector<double>& b, const std::vector<double>& g_mu,
                     const std::vector<double>& g_ab, const std::vector<double>& g_bb, int width,
                     int height, double* grad, int stride) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<double> p_mu(n, 0.0), p_ab(n, 0.0), p_bb(n, 0.0);
  g.filter_adjoint_add(g_mu.data(), width, height, p_mu.data());
  g.filter_adjoint_add(g_ab.data(), width, height, p_ab.data());
  g.filter_adjoint_add(g_bb.data(), width, height, p_bb.data());
  for (std::size_t i = 0; i < n; ++i) {
    grad[i * stride] += p_mu[i] + a[i] * p_ab[i] + 2.0 * b[i] * p_bb[i];
  }
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw std::invalid_argument("loss weights must be finite and non-negative");
  }
  if (mssim_window < 3 || mssim_window % 2 == 0) {
    throw std::invalid_argument("mssim_window must be odd and >= 3");
  }
  if (!(mssim_sigma > 0.0)) throw std::invalid_argument("mssim_sigma must be positive");
  if (!(charbonnier_eps > 0.0)) throw std::invalid_argument("charbonnier_eps must be positive");
}

SsimMap mssim_map(const Patch2D& a, const Patch2D& b, const LossWeights& w) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw std::invalid_argument("mssim_map: patch shapes differ");
  }
  check_window(w, a.width, a.height);
  const GaussianWindow g(w.mssim_window, w.mssim_sigma);
  SsimMap out;
  out.width = a.width - w.mssim_window + 1;
  out.height = a.height - w.mssim_window + 1;
  const int n = a.width * a.height;
  out.values.assign(static_cast<std::size_t>(out.width) * out.height, 0.0);
  for (int ch = 0; ch < a.channels; ++ch) {
    const auto pa = channel_plane(a.data, n, a.channels, ch);
    const auto pb = channel_plane(b.data, n, b.channels, ch);
    const Moments m = moments(g, pa, pb, a.width, a.height);
    for (std::size_t c = 0; c < out.values.size(); ++c) {
      out.values[c] += ssim_terms(m.mu_a[c], m.m_aa[c], m.mu_b[c], m.m_bb[c], m.m_ab[c]).s /
                       a.channels;
    }
  }
  out.mean = std::accumulate(out.values.begin(), out.values.end(), 0.0) /
             static_cast<double>(out.values.size());
  return out;
}

Patch2D mssim_gradient(const Patch2D& a, const Patch2D& b, std::span<const double> center_weights,
                       const LossWeights& w) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw std::invalid_argument("mssim_gradient: patch shapes differ");
  }
  check_window(w, a.width, a.height);
  const GaussianWindow g(w.mssim_window, w.mssim_sigma);
  const std::size_t q = static_cast<std::size_t>(a.width - w.mssim_window + 1) *
                        (a.height - w.mssim_window + 1);
  if (center_weights.size() != q) throw std::invalid_argument("mssim_gradient: weight count");
  const int n = a.width * a.height;
  Patch2D grad(a.width, a.height, a.channels);
  std::vector<double> g_mu(q), g_ab(q), g_bb(q);
  for (int ch = 0; ch < a.channels; ++ch) {
    const auto pa = channel_plane(a.data, n, a.channels, ch);
    const auto pb = channel_plane(b.data, n, b.channels, ch);
    const Moments m = moments(g, pa, pb, a.width, a.height);
    for (std::size_t c = 0; c < q; ++c) {
      const SsimTerms t = ssim_terms(m.mu_a[c], m.m_aa[c], m.mu_b[c], m.m_bb[c], m.m_ab[c]);
      const double cw = center_weights[c] / a.channels;
      g_mu[c] = cw * t.d_mu_b;
      g_ab[c] = cw * t.d_m_ab;
      g_bb[c] = cw * t.d_m_bb;
    }
    moments_adjoint(g, pa, pb, g_mu, g_ab, g_bb, a.width, a.height, grad.data.data() + ch,
                    a.channels);
  }
  return grad;
}

double tv_term(const Patch2D& d, const LossWeights& w) {
  if (d.width < 2 || d.height < 2 || d.channels != 1) {
    throw std::invalid_argument("tv_term: expects a single-channel patch of at least 2x2");
  }
  const double eps = w.charbonnier_eps;
  double sum = 0.0;
  for (int row = 0; row < d.height; ++row) {
    for (int col = 0; col < d.width; ++col) {
      if (col + 1 < d.width) {
        const double delta = d.at(col + 1, row) - d.at(col, row);
        sum += std::sqrt(delta * delta + eps * eps) - eps;
      }
      if (row + 1 < d.height) {
        const double delta = d.at(col, row + 1) - d.at(col, row);
        sum += std::sqrt(delta * delta + eps * eps) - eps;
      }
    }
  }
  const double count = static_cast<double>(d.height) * (d.width - 1) +
                       static_cast<double>(d.width) * (d.height - 1);
  return sum / count;
}

std::vector<double> tv_gradient(const Patch2D& d, const LossWeights& w) {
  if (d.width < 2 || d.height < 2 || d.channels != 1) {
    throw std::invalid_argument("tv_gradient: expects a single-channel patch of at least 2x2");
  }
  const double eps = w.charbonnier_eps;
  const double inv = 1.0 / (static_cast<double>(d.height) * (d.width - 1) +
                            static_cast<double>(d.width) * (d.height - 1));
  std::vector<double> g(d.data.size(), 0.0);
  auto idx = [&](int col, int row) { return static_cast<std::size_t>(row) * d.width + col; };
  for (int row = 0; row < d.height; ++row) {
    for (int col = 0; col < d.width; ++col) {
      if (col + 1 < d.width) {
        const double delta = d.at(col + 1, row) - d.at(col, row);
        const double s = inv * delta / std::sqrt(delta * delta + eps * eps);
        g[idx(col + 1, row)] += s;
        g[idx(col, row)] -= s;
      }
      if (row + 1 < d.height) {
        const double delta = d.at(col, row + 1) - d.at(col, row);
        const double s = inv * delta / std::sqrt(delta * delta + eps * eps);
        g[idx(col, row + 1)] += s;
        g[idx(col, row)] -= s;
      }
    }
  }
  return g;
}

std::vector<double> view_distance(const Patch2D& center, const Patch2D& warped,
                                  std::span<const std::uint8_t> valid, const LossWeights& w) {
  if (center.width != warped.width || center.height != warped.height ||
      center.channels != warped.channels) {
    throw std::invalid_argument("view_distance: patch shapes differ");
  }
  if (valid.size() != static_cast<std::size_t>(center.width) * center.height) {
    throw std::invalid_argument("view_distance: mask shape differs");
  }
  check_window(w, center.width, center.height);
  const GaussianWindow g(w.mssim_window, w.mssim_sigma, GaussianWindow::Mode::same);
  const int n = center.width * center.height;
  const int C = center.channels;
  std::vector<double> ssim(n, 0.0);
  for (int ch = 0; ch < C; ++ch) {
    const Moments m = moments(g, channel_plane(center.data, n, C, ch),
                              channel_plane(warped.data, n, C, ch), center.width, center.height);
    for (int i = 0; i < n; ++i) {
      ssim[i] += ssim_terms(m.mu_a[i], m.m_aa[i], m.mu_b[i], m.m_bb[i], m.m_ab[i]).s / C;
    }
  }
  const auto bad = invalid_windows(g, valid, center.width, center.height);
  std::vector<double> e(n);
  for (int i = 0; i < n; ++i) {
    if (bad[i]) {
      e[i] = kInvalidDistance;
      continue;
    }
    double l1 = 0.0;
    for (int ch = 0; ch < C; ++ch) l1 += std::abs(center.data[i * C + ch] - warped.data[i * C + ch]);
    e[i] = l1 / C + w.alpha * (1.0 - ssim[i]);
  }
  return e;
}

ViewSelection select_views(std::span<const std::vector<double>> distances, SelectionMode mode) {
  ViewSelection sel;
  sel.views = static_cast<int>(distances.size());
  if (distances.empty()) return sel;
  sel.pixels = static_cast<int>(distances.front().size());
  sel.selected.assign(static_cast<std::size_t>(sel.pixels) * sel.views, 0);
  sel.count.assign(sel.pixels, 0);
  std::vector<int> order;
  order.reserve(sel.views);
  for (int c = 0; c < sel.pixels; ++c) {
    order.clear();
    for (int v = 0; v < sel.views; ++v) {
      if (distances[v].size() != static_cast<std::size_t>(sel.pixels)) {
        throw std::invalid_argument("select_views: views cover different pixels");
      }
      if (std::isfinite(distances[v][c])) order.push_back(v);
    }
    const int n = static_cast<int>(order.size());
    int k = n;
    if (mode == SelectionMode::half && n >= 2) k = n / 2;
    auto less = [&](int x, int y) {
      const double ex = distances[x][c];
      const double ey = distances[y][c];
      return ex < ey || (ex == ey && x < y);
    };
    if (k < n) std::nth_element(order.begin(), order.begin() + k, order.end(), less);
    for (int i = 0; i < k; ++i) sel.selected[static_cast<std::size_t>(c) * sel.views + order[i]] = 1;
    sel.count[c] = k;
  }
  return sel;
}

Patch2D PatchSample::center_patch() const {
  Patch2D p(size, size, channels);
  p.data = center;
  return p;
}

Patch2D PatchSample::warped_patch(std::size_t view) const {
  Patch2D p(size, size, channels);
  p.data = views.at(view).samples.value;
  return p;
}

Patch2D PatchSample::disparity_patch() const {
  Patch2D p(size, size, 1);
  p.data = disparity;
  return p;
}

ViewDistances view_distances(const PatchSample& patch, const LossWeights& w) {
  check_window(w, patch.size, patch.size);
  const GaussianWindow g(w.mssim_window, w.mssim_sigma, GaussianWindow::Mode::same);
  const int P = patch.size;
  const int C = patch.channels;
  const int n = P * P;
  ViewDistances out;
  out.side = P;

  std::vector<std::vector<double>> a(C);
  out.mu_a.resize(C);
  out.m_aa.resize(C);
  for (int ch = 0; ch < C; ++ch) {
    a[ch] = channel_plane(patch.center, n, C, ch);
    out.mu_a[ch].resize(n);
    out.m_aa[ch].resize(n);
    g.filter(a[ch].data(), P, P, out.mu_a[ch].data());
    g.filter(product(a[ch], a[ch]).data(), P, P, out.m_aa[ch].data());
  }

  const std::size_t V = patch.views.size();
  out.e.assign(V, std::vector<double>(n, 0.0));
  out.mu_b.assign(V, std::vector<std::vector<double>>(C));
  out.m_bb.assign(V, std::vector<std::vector<double>>(C));
  out.m_ab.assign(V, std::vector<std::vector<double>>(C));
  std::vector<double> ssim(n);
  for (std::size_t v = 0; v < V; ++v) {
    const WarpBatch& wb = patch.views[v].samples;
    std::fill(ssim.begin(), ssim.end(), 0.0);
    for (int ch = 0; ch < C; ++ch) {
      const auto b = channel_plane(wb.value, n, C, ch);
      auto& mu_b = out.mu_b[v][ch];
      auto& m_bb = out.m_bb[v][ch];
      auto& m_ab = out.m_ab[v][ch];
      mu_b.resize(n);
      m_bb.resize(n);
      m_ab.resize(n);
      g.filter(b.data(), P, P, mu_b.data());
      g.filter(product(b, b).data(), P, P, m_bb.data());
      g.filter(product(a[ch], b).data(), P, P, m_ab.data());
      for (int i = 0; i < n; ++i) {
        ssim[i] += ssim_terms(out.mu_a[ch][i], out.m_aa[ch][i], mu_b[i], m_bb[i], m_ab[i]).s / C;
      }
    }
    const auto bad = invalid_windows(g, wb.in_bounds, P, P);
    auto& e = out.e[v];
    for (int i = 0; i < n; ++i) {
      if (bad[i]) {
        e[i] = kInvalidDistance;
        continue;
      }
      double l1 = 0.0;
      for (int ch = 0; ch < C; ++ch) l1 += std::abs(patch.center[i * C + ch] - wb.value[i * C + ch]);
      e[i] = l1 / C + w.alpha * (1.0 - ssim[i]);
    }
  }
  return out;
}

PatchLoss training_loss(const PatchSample& patch, const ViewDistances& dist,
                        const ViewSelection& sel, const LossWeights& w,
                        std::span<const std::int8_t> frozen_signs) {
  w.validate();
  const int P = patch.size;
  const int C = patch.channels;
  const int n = P * P;
  const std::size_t V = patch.views.size();

  PatchLoss out;
  out.d_cotangent.assign(n, 0.0);

  if (w.photometric) {
    if (sel.pixels != n || sel.views != static_cast<int>(V) || dist.side != P) {
      throw std::invalid_argument("training_loss: selection does not match the patch");
    }
    if (std::all_of(sel.count.begin(), sel.count.end(), [](int k) { return k == 0; })) {
      throw std::domain_error("training_loss: no view selected at any pixel");
    }
    const std::size_t sign_count = V * n * C;
    if (!frozen_signs.empty() && frozen_signs.size() != sign_count) {
      throw std::invalid_argument("training_loss: frozen sign count mismatch");
    }
    out.l1_signs.assign(sign_count, 0);
    const GaussianWindow g(w.mssim_window, w.mssim_sigma, GaussianWindow::Mode::same);
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<std::vector<double>> a(C);
    for (int ch = 0; ch < C; ++ch) a[ch] = channel_plane(patch.center, n, C, ch);
    std::vector<double> grad(static_cast<std::size_t>(n) * C);
    std::vector<double> g_mu(n), g_ab(n), g_bb(n);

    double photo = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      const WarpBatch& wb = patch.views[v].samples;
      std::fill(grad.begin(), grad.end(), 0.0);
      bool any = false;
      for (int i = 0; i < n; ++i) {
        if (!sel.is_selected(i, static_cast<int>(v))) continue;
        any = true;
        for (int ch = 0; ch < C; ++ch) {
          const double diff = wb.value[i * C + ch] - patch.center[i * C + ch];
          const std::size_t si = (v * n + i) * C + ch;
          std::int8_t sg;
          if (!frozen_signs.empty()) {
            sg = frozen_signs[si];
          } else {
            sg = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
          }
          out.l1_signs[si] = sg;
          photo += sg * diff / C;
          grad[i * C + ch] += sg * inv_n / C;
        }
      }
      if (!any) continue;

      for (int ch = 0; ch < C; ++ch) {
        const auto& mu_b = dist.mu_b[v][ch];
        const auto& m_bb = dist.m_bb[v][ch];
        const auto& m_ab = dist.m_ab[v][ch];
        const double cw = -w.alpha * inv_n / C;
        for (int i = 0; i < n; ++i) {
          if (!sel.is_selected(i, static_cast<int>(v))) {
            g_mu[i] = g_ab[i] = g_bb[i] = 0.0;
            continue;
          }
          const SsimTerms t =
              ssim_terms(dist.mu_a[ch][i], dist.m_aa[ch][i], mu_b[i], m_bb[i], m_ab[i]);
          photo += w.alpha * (1.0 - t.s) / C;
          g_mu[i] = cw * t.d_mu_b;
          g_ab[i] = cw * t.d_m_ab;
          g_bb[i] = cw * t.d_m_bb;
        }
        if (w.alpha != 0.0) {
          const auto b = channel_plane(wb.value, n, C, ch);
          moments_adjoint(g, a[ch], b, g_mu, g_ab, g_bb, P, P, grad.data() + ch, C);
        }
      }
      for (int i = 0; i < n; ++i) {
        if (!wb.in_bounds[i]) continue;
        double acc = 0.0;
        for (int ch = 0; ch < C; ++ch) acc += grad[i * C + ch] * wb.d_disparity[i * C + ch];
        out.d_cotangent[i] += acc;
      }
    }
    out.photometric = photo * inv_n;
  }

  const Patch2D d = patch.disparity_patch();
  out.tv = tv_term(d, w);
  if (w.beta != 0.0) {
    const auto tg = tv_gradient(d, w);
    for (int i = 0; i < n; ++i) out.d_cotangent[i] += w.beta * tg[i];
  }
  out.loss = out.photometric + w.beta * out.tv;
  return out;
}

BatchLoss training_loss(const PatchBatch& batch, std::span<const ViewDistances> distances,
                        std::span<const ViewSelection> selections, const LossWeights& w) {
  if (distances.size() != batch.patches.size() || selections.size() != batch.patches.size()) {
    throw std::invalid_argument("training_loss: one distance set and selection per patch");
  }
  BatchLoss out;
  if (batch.patches.empty()) return out;
  const double inv = 1.0 / static_cast<double>(batch.patches.size());
  for (std::size_t p = 0; p < batch.patches.size(); ++p) {
    PatchLoss pl = training_loss(batch.patches[p], distances[p], selections[p], w);
    for (double& g : pl.d_cotangent) g *= inv;
    out.loss += pl.loss * inv;
    out.patches.push_back(std::move(pl));
  }
  return out;
}

double objective_full(const PatchSample& patch, const LossWeights& w) {
  check_window(w, patch.size, patch.size);
  const double tv = w.beta * tv_term(patch.disparity_patch(), w);
  if (!w.photometric || patch.views.empty()) return tv;

  const int P = patch.size;
  const int C = patch.channels;
  std::vector<WarpBatch> warps;
  std::vector<std::vector<std::uint8_t>> masks;
  for (const ViewWarp& vw : patch.views) {
    warps.push_back(vw.samples);
    masks.emplace_back(vw.samples.size(), 1);
  }
  const CenterSynthesis syn = aggregate_center(warps, masks);

  const Patch2D a = patch.center_patch();
  Patch2D b(P, P, C);
  b.data = syn.value;

  double value = tv;
  double l1 = 0.0;
  std::size_t pixels = 0;
  for (int i = 0; i < P * P; ++i) {
    if (!syn.valid[i]) continue;
    for (int ch = 0; ch < C; ++ch) l1 += std::abs(a.data[i * C + ch] - b.data[i * C + ch]) / C;
    ++pixels;
  }
  if (pixels == 0) return value;
  value += l1 / pixels;

  const SsimMap ssim = mssim_map(a, b, w);
  const GaussianWindow g(w.mssim_window, w.mssim_sigma);
  const auto bad = invalid_windows(g, syn.valid, P, P);
  double s = 0.0;
  std::size_t windows = 0;
  for (std::size_t c = 0; c < bad.size(); ++c) {
    if (bad[c]) continue;
    s += ssim.values[c];
    ++windows;
  }
  if (windows > 0) value += w.alpha * (1.0 - s / windows);
  return value;
}

double objective_full(const PatchBatch& batch, const LossWeights& w) {
  if (batch.patches.empty()) return 0.0;
  double sum = 0.0;
  for (const PatchSample& p : batch.patches) sum += objective_full(p, w);
  return sum / static_cast<double>(batch.patches.size());
}

}  // namespace lfndf
