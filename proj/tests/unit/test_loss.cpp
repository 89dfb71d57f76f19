#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lfndf/loss.hpp"
#include "lfndf/synth.hpp"
#include "lfndf/warp.hpp"
#include "support.hpp"

using namespace lfndf;

namespace {

// Brute-force SSIM at one window center with an explicit 2D Gaussian.
// Taps falling outside the patch are dropped and the rest renormalized, so
// the same routine covers both the full-window and truncated cases.
double ssim_oracle(const Patch2D& a, const Patch2D& b, int cc, int cr, int ch, int win, double sigma) {
  const int r = win / 2;
  double wsum = 0.0, ma = 0.0, mb = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const int x = cc + dx, y = cr + dy;
      if (x < 0 || y < 0 || x >= a.width || y >= a.height) continue;
      const double wt = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      wsum += wt;
      ma += wt * a.at(x, y, ch);
      mb += wt * b.at(x, y, ch);
    }
  }
  ma /= wsum;
  mb /= wsum;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const int x = cc + dx, y = cr + dy;
      if (x < 0 || y < 0 || x >= a.width || y >= a.height) continue;
      const double wt = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) / wsum;
      const double ea = a.at(x, y, ch) - ma;
      const double eb = b.at(x, y, ch) - mb;
      va += wt * ea * ea;
      vb += wt * eb * eb;
      cov += wt * ea * eb;
    }
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

Patch2D random_patch(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Patch2D p(w, h, c);
  for (double& x : p.data) x = u(rng);
  return p;
}

// Patch of the reference view at (col, row) with every other view warped by d.
PatchSample make_patch(const LightField& lf, int col, int row, int size, const std::vector<double>& d,
                       const std::vector<std::vector<SampleCell>>* cells = nullptr) {
  const Image& ref = lf.center_view();
  PatchSample p;
  p.origin_col = col;
  p.origin_row = row;
  p.size = size;
  p.channels = ref.channels();
  p.disparity = d;
  std::vector<PixelPos> xs;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      xs.push_back({static_cast<double>(col + c), static_cast<double>(row + r)});
      for (int ch = 0; ch < ref.channels(); ++ch) p.center.push_back(ref.at(col + c, row + r, ch));
    }
  }
  const auto views = lf.surrounding_views();
  for (std::size_t v = 0; v < views.size(); ++v) {
    std::span<const SampleCell> frozen;
    if (cells) frozen = (*cells)[v];
    p.views.push_back({views[v], warp_view(lf, views[v], xs, d, frozen)});
  }
  return p;
}

std::vector<std::vector<SampleCell>> cells_of(const PatchSample& p) {
  std::vector<std::vector<SampleCell>> out;
  for (const ViewWarp& vw : p.views) out.push_back(vw.samples.cells);
  return out;
}

LossWeights small_window() {
  LossWeights w;
  w.mssim_window = 5;
  w.mssim_sigma = 1.0;
  return w;
}

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("mssim_map agrees with a brute-force oracle") {
  std::mt19937_64 rng(11);
  const LossWeights w;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 1 + trial % 3;
    const Patch2D a = random_patch(rng, 16, 14, c);
    Patch2D b = random_patch(rng, 16, 14, c);
    // Half the pairs are correlated so SSIM spans a useful range.
    if (trial % 2) {
      for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] = 0.7 * a.data[i] + 0.3 * b.data[i];
    }
    const SsimMap m = mssim_map(a, b, w);
    REQUIRE(m.width == 6);
    REQUIRE(m.height == 4);
    double mean = 0.0;
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        double s = 0.0;
        for (int ch = 0; ch < c; ++ch) s += ssim_oracle(a, b, x + 5, y + 5, ch, 11, 1.5) / c;
        worst = std::max(worst, std::abs(s - m.values[y * m.width + x]));
        mean += s;
      }
    }
    mean /= m.values.size();
    worst = std::max(worst, std::abs(mean - m.mean));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("mssim identities") {
  std::mt19937_64 rng(12);
  const LossWeights w;
  const Patch2D a = random_patch(rng, 20, 20, 3);
  const Patch2D b = random_patch(rng, 20, 20, 3);
  CHECK(mssim_map(a, a, w).mean == doctest::Approx(1.0).epsilon(1e-12));
  const SsimMap ab = mssim_map(a, b, w);
  const SsimMap ba = mssim_map(b, a, w);
  for (std::size_t i = 0; i < ab.values.size(); ++i) {
    CHECK(ab.values[i] == doctest::Approx(ba.values[i]).epsilon(1e-12));
    CHECK(ab.values[i] <= 1.0 + 1e-12);
  }
  CHECK_THROWS_AS(mssim_map(random_patch(rng, 10, 20, 1), random_patch(rng, 10, 20, 1), w),
                  std::invalid_argument);
  CHECK_THROWS_AS(mssim_map(a, random_patch(rng, 20, 20, 1), w), std::invalid_argument);
}

TEST_CASE("mssim_gradient matches central differences") {
  std::mt19937_64 rng(13);
  const LossWeights w = small_window();
  const Patch2D a = random_patch(rng, 9, 8, 2);
  Patch2D b = random_patch(rng, 9, 8, 2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> cw(5 * 4);
  for (double& x : cw) x = n(rng);
  auto f = [&](const Patch2D& bb) {
    const SsimMap m = mssim_map(a, bb, w);
    double s = 0.0;
    for (std::size_t i = 0; i < cw.size(); ++i) s += cw[i] * m.values[i];
    return s;
  };
  const Patch2D g = mssim_gradient(a, b, cw, w);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < b.data.size(); ++i) {
    const double saved = b.data[i];
    b.data[i] = saved + eps;
    const double up = f(b);
    b.data[i] = saved - eps;
    const double down = f(b);
    b.data[i] = saved;
    CHECK(g.data[i] == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-5));
  }
}

TEST_CASE("total variation") {
  const LossWeights w;
  Patch2D ramp(8, 8, 1);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) ramp.at(c, r) = c;
  }
  // 56 unit horizontal steps and 56 flat vertical ones.
  CHECK(tv_term(ramp, w) == doctest::Approx(0.5).epsilon(1e-4));

  std::mt19937_64 rng(14);
  Patch2D d = random_patch(rng, 6, 7, 1);
  Patch2D neg = d;
  for (double& x : neg.data) x = -x;
  CHECK(tv_term(d, w) == doctest::Approx(tv_term(neg, w)).epsilon(1e-14));
  Patch2D shifted = d;
  for (double& x : shifted.data) x += 3.0;
  CHECK(tv_term(d, w) == doctest::Approx(tv_term(shifted, w)).epsilon(1e-9));
  CHECK(tv_term(Patch2D(4, 4, 1, 2.0), w) == 0.0);

  const auto g = tv_gradient(d, w);
  const double eps = 1e-7;
  for (std::size_t i = 0; i < d.data.size(); ++i) {
    const double saved = d.data[i];
    d.data[i] = saved + eps;
    const double up = tv_term(d, w);
    d.data[i] = saved - eps;
    const double down = tv_term(d, w);
    d.data[i] = saved;
    CHECK(g[i] == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-5));
  }
  CHECK_THROWS_AS(tv_term(Patch2D(1, 5, 1), w), std::invalid_argument);
  CHECK_THROWS_AS(tv_gradient(Patch2D(4, 4, 2), w), std::invalid_argument);
}

TEST_CASE("view_distance") {
  std::mt19937_64 rng(15);
  const LossWeights w;
  const Patch2D a = random_patch(rng, 16, 16, 3);
  const std::vector<std::uint8_t> all(256, 1);

  for (double e : view_distance(a, a, all, w)) CHECK(std::abs(e) < 1e-12);

  Patch2D b = a;
  for (double& x : b.data) x += 0.2;
  const auto e = view_distance(a, b, all, w);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      double s = 0.0;
      for (int ch = 0; ch < 3; ++ch) s += ssim_oracle(a, b, c, r, ch, 11, 1.5) / 3;
      CHECK(e[r * 16 + c] == doctest::Approx(0.2 + (1.0 - s)).epsilon(1e-9));
    }
  }

  // One invalid pixel poisons every pixel whose window reaches it.
  std::vector<std::uint8_t> mask = all;
  mask[3 * 16 + 4] = 0;
  const auto masked = view_distance(a, b, mask, w);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      const bool reach = std::abs(c - 4) <= 5 && std::abs(r - 3) <= 5;
      CHECK(std::isinf(masked[r * 16 + c]) == reach);
    }
  }
  CHECK_THROWS_AS(view_distance(a, b, std::vector<std::uint8_t>(10, 1), w), std::invalid_argument);
}

TEST_CASE("select_views") {
  SUBCASE("eight views keep the four smallest") {
    const std::vector<double> e{5, 1, 8, 3, 2, 7, 4, 6};
    std::vector<std::vector<double>> dist;
    for (double x : e) dist.push_back({x});
    const ViewSelection s = select_views(dist);
    CHECK(s.count[0] == 4);
    for (int v = 0; v < 8; ++v) CHECK(s.is_selected(0, v) == (e[v] <= 4));
    const ViewSelection all = select_views(dist, SelectionMode::all);
    CHECK(all.count[0] == 8);
  }
  SUBCASE("ties go to the lowest indices") {
    std::vector<std::vector<double>> dist(6, std::vector<double>{1.0});
    const ViewSelection s = select_views(dist);
    CHECK(s.count[0] == 3);
    for (int v = 0; v < 6; ++v) CHECK(s.is_selected(0, v) == (v < 3));
  }
  SUBCASE("eighty views keep forty") {
    std::mt19937_64 rng(16);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> dist(80, std::vector<double>(3));
    for (auto& d : dist) {
      for (double& x : d) x = u(rng);
    }
    const ViewSelection s = select_views(dist);
    for (int px = 0; px < 3; ++px) {
      CHECK(s.count[px] == 40);
      std::vector<double> col;
      for (const auto& d : dist) col.push_back(d[px]);
      std::vector<double> sorted = col;
      std::sort(sorted.begin(), sorted.end());
      for (int v = 0; v < 80; ++v) CHECK(s.is_selected(px, v) == (col[v] <= sorted[39]));
    }
  }
  SUBCASE("invalid views are never chosen") {
    const double inf = kInvalidDistance;
    std::vector<std::vector<double>> dist{{inf, 0.5, inf, 2.0}, {1.0, inf, inf, 1.0},
                                          {2.0, inf, inf, 3.0}, {0.1, inf, inf, inf}};
    const ViewSelection s = select_views(dist);
    // pixel 0: three finite -> 1; pixel 1: one finite -> 1; pixel 2: none; pixel 3: two -> 1.
    CHECK(s.count == std::vector<int>{1, 1, 0, 1});
    CHECK(s.is_selected(0, 3));
    CHECK(s.is_selected(1, 0));
    CHECK(s.is_selected(3, 1));
    for (int v = 0; v < 4; ++v) CHECK_FALSE(s.is_selected(2, v));
  }
  SUBCASE("relabelling the views relabels the selection") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> dist(24, std::vector<double>(50));
    for (auto& d : dist) {
      for (double& x : d) x = u(rng);
    }
    std::vector<int> perm(24);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<double>> permuted(24);
    for (int v = 0; v < 24; ++v) permuted[v] = dist[perm[v]];
    const ViewSelection s = select_views(dist);
    const ViewSelection t = select_views(permuted);
    for (int px = 0; px < 50; ++px) {
      for (int v = 0; v < 24; ++v) CHECK(t.is_selected(px, v) == s.is_selected(px, perm[v]));
    }
  }
}

TEST_CASE("training loss cotangent matches central differences") {
  SceneSpec spec;
  spec.kind = SceneKind::slanted_plane;
  spec.d0 = 0.8;
  spec.gx = 0.02;
  spec.gy = -0.01;
  const auto scene = synth_lightfield(spec, 40, 40, 5, 5);
  const LightField& lf = scene.light_field;
  const LossWeights w = small_window();

  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> jitter(-0.4, 0.4);
  // The second origin hangs over the border so some views go out of bounds.
  for (auto [col, row] : {std::pair{12, 10}, std::pair{0, 24}}) {
    const int P = 16;
    std::vector<double> d(P * P);
    // Keep every neighbour difference clear of the TV kink, where a 1e-4
    // stencil is dominated by curvature.
    bool kinked = true;
    while (kinked) {
      for (int r = 0; r < P; ++r) {
        for (int c = 0; c < P; ++c) {
          d[r * P + c] = scene.ground_truth.at(col + c, row + r) + jitter(rng);
        }
      }
      kinked = false;
      for (int r = 0; r < P; ++r) {
        for (int c = 0; c < P; ++c) {
          const double v = d[r * P + c];
          if (c + 1 < P && std::abs(d[r * P + c + 1] - v) < 1e-3) kinked = true;
          if (r + 1 < P && std::abs(d[(r + 1) * P + c] - v) < 1e-3) kinked = true;
        }
      }
    }
    const PatchSample base = make_patch(lf, col, row, P, d);
    const auto cells = cells_of(base);
    const ViewDistances dist = view_distances(base, w);
    const ViewSelection sel = select_views(dist.e);
    const PatchLoss pl = training_loss(base, dist, sel, w);

    auto loss_at = [&](const std::vector<double>& dd) {
      const PatchSample p = make_patch(lf, col, row, P, dd, &cells);
      return training_loss(p, view_distances(p, w), sel, w, pl.l1_signs).loss;
    };
    CHECK(loss_at(d) == doctest::Approx(pl.loss).epsilon(1e-12));

    const double eps = 1e-4;
    double worst = 0.0;
    for (int i = 0; i < P * P; ++i) {
      std::vector<double> up(d), down(d);
      up[i] += eps;
      down[i] -= eps;
      const double numeric = (loss_at(up) - loss_at(down)) / (2 * eps);
      const double rel = std::abs(numeric - pl.d_cotangent[i]) /
                         std::max({std::abs(numeric), std::abs(pl.d_cotangent[i]), 1e-6});
      worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-3);

    // A small step against the cotangent lowers the unfrozen loss.
    std::vector<double> stepped(d);
    for (int i = 0; i < P * P; ++i) stepped[i] -= 1e-3 * pl.d_cotangent[i];
    const PatchSample p = make_patch(lf, col, row, P, stepped);
    const ViewDistances pd = view_distances(p, w);
    CHECK(training_loss(p, pd, select_views(pd.e), w).loss < pl.loss);
  }
}

TEST_CASE("training loss at the true disparity") {
  SceneSpec spec;
  spec.d0 = 1.0;
  const auto scene = synth_lightfield(spec, 48, 48, 5, 5);
  const LossWeights w;
  const std::vector<double> d(32 * 32, 1.0);
  const PatchSample p = make_patch(scene.light_field, 8, 8, 32, d);
  const ViewDistances dist = view_distances(p, w);
  const PatchLoss at_truth = training_loss(p, dist, select_views(dist.e), w);
  // Integer shifts land on lattice points.
  CHECK(at_truth.loss < 1e-6);
  CHECK(at_truth.tv == 0.0);

  spec.d0 = 1.5;
  const auto half = synth_lightfield(spec, 48, 48, 5, 5);
  const std::vector<double> dh(32 * 32, 1.5);
  const PatchSample ph = make_patch(half.light_field, 8, 8, 32, dh);
  const ViewDistances disth = view_distances(ph, w);
  CHECK(training_loss(ph, disth, select_views(disth.e), w).loss < 1e-3);

  std::vector<double> off(32 * 32, 1.3);
  const PatchSample po = make_patch(half.light_field, 8, 8, 32, off);
  const ViewDistances disto = view_distances(po, w);
  CHECK(training_loss(po, disto, select_views(disto.e), w).loss > 1e-2);
}

TEST_CASE("training loss edge cases") {
  std::mt19937_64 rng(19);
  std::vector<Image> views(9, test::random_image(rng, 20, 20, 3));
  const LightField lf(3, 3, std::move(views));
  const LossWeights w = small_window();

  // Identical views and constant disparity: every term vanishes.
  const PatchSample p = make_patch(lf, 2, 2, 12, std::vector<double>(144, 0.0));
  const ViewDistances dist = view_distances(p, w);
  const PatchLoss pl = training_loss(p, dist, select_views(dist.e), w);
  CHECK(pl.loss == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(objective_full(p, w) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

  LossWeights no_tv = w;
  no_tv.beta = 0.0;
  std::vector<double> bumpy(144);
  for (double& x : bumpy) x = std::uniform_real_distribution<double>(-0.01, 0.01)(rng);
  const PatchSample q = make_patch(lf, 2, 2, 12, bumpy);
  const ViewDistances qd = view_distances(q, no_tv);
  const PatchLoss ql = training_loss(q, qd, select_views(qd.e), no_tv);
  CHECK(ql.tv > 0.0);
  CHECK(ql.loss == doctest::Approx(ql.photometric).epsilon(1e-15));

  ViewSelection empty = select_views(dist.e);
  std::fill(empty.selected.begin(), empty.selected.end(), 0);
  std::fill(empty.count.begin(), empty.count.end(), 0);
  CHECK_THROWS_AS(training_loss(p, dist, empty, w), std::domain_error);
  LossWeights tv_only = w;
  tv_only.photometric = false;
  CHECK_NOTHROW(training_loss(p, dist, empty, tv_only));

  LossWeights bad = w;
  bad.alpha = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = w;
  bad.mssim_window = 4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("objective_full") {
  SceneSpec spec;
  spec.d0 = 1.0;
  const auto scene = synth_lightfield(spec, 40, 40, 5, 5);
  const LossWeights w;
  const PatchSample right = make_patch(scene.light_field, 4, 4, 32, std::vector<double>(1024, 1.0));
  const PatchSample wrong = make_patch(scene.light_field, 4, 4, 32, std::vector<double>(1024, 0.0));
  CHECK(objective_full(right, w) < 1e-6);
  CHECK(objective_full(wrong, w) > 1e3 * objective_full(right, w));
  CHECK(objective_full(wrong, w) > 1e-3);

  PatchBatch batch;
  batch.patches = {right, wrong};
  CHECK(objective_full(batch, w) ==
        doctest::Approx((objective_full(right, w) + objective_full(wrong, w)) / 2));
  CHECK(objective_full(PatchBatch{}, w) == 0.0);
}

}  // TEST_SUITE
