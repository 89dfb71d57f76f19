#include <doctest.h>

#include <cmath>
#include <random>

#include "lfndf/synth.hpp"
#include "lfndf/warp.hpp"
#include "support.hpp"

using namespace lfndf;

namespace {

Image two_by_two() {
  Image img(2, 2, 1);
  img.at(0, 0) = 0.0f;
  img.at(1, 0) = 1.0f;
  img.at(0, 1) = 2.0f;
  img.at(1, 1) = 3.0f;
  return img;
}

LightField random_lf(std::mt19937_64& rng, int rows, int cols, int w, int h, int c) {
  std::vector<Image> views;
  for (int i = 0; i < rows * cols; ++i) views.push_back(test::random_image(rng, w, h, c));
  return LightField(rows, cols, std::move(views));
}

}  // namespace

TEST_SUITE("warp") {

TEST_CASE("bilinear sampling of a 2x2 image") {
  const Image img = two_by_two();
  CHECK(bilinear_sample(img, 0.0, 0.0).value[0] == 0.0);
  const PixelSample mid = bilinear_sample(img, 0.5, 0.5);
  CHECK(mid.value[0] == doctest::Approx(1.5));
  CHECK(mid.d_col[0] == doctest::Approx(1.0));
  CHECK(mid.d_row[0] == doctest::Approx(2.0));
  CHECK(bilinear_sample(img, 1.0, 1.0).value[0] == 3.0);
  CHECK(bilinear_sample(img, 1.0, 1.0).in_bounds);
}

TEST_CASE("lattice points reproduce stored pixels exactly") {
  std::mt19937_64 rng(1);
  const Image img = test::random_image(rng, 7, 5, 3);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 7; ++c) {
      const PixelSample s = bilinear_sample(img, c, r);
      for (int ch = 0; ch < 3; ++ch) CHECK(s.value[ch] == img.at(c, r, ch));
    }
  }
}

TEST_CASE("out-of-bounds samples are excluded") {
  const Image img = two_by_two();
  CHECK_FALSE(bilinear_sample(img, -1e-9, 0.5).in_bounds);
  CHECK_FALSE(bilinear_sample(img, 1.0 + 1e-9, 0.5).in_bounds);
  CHECK_FALSE(bilinear_sample(img, 0.5, std::nan("")).in_bounds);
  const PixelSample s = bilinear_sample(img, 0.5, 2.0);
  CHECK_FALSE(s.in_bounds);
  CHECK(s.value[0] == 0.0);
  CHECK(s.d_col[0] == 0.0);
}

TEST_CASE("derivatives take the right limit on cell edges") {
  Image img(3, 1, 1);
  img.at(0, 0) = 0.0f;
  img.at(1, 0) = 1.0f;
  img.at(2, 0) = 5.0f;
  CHECK(bilinear_sample(img, 1.0, 0.0).d_col[0] == doctest::Approx(4.0));
  // The last column has no cell to its right and uses the one to its left.
  CHECK(bilinear_sample(img, 2.0, 0.0).d_col[0] == doctest::Approx(4.0));
  CHECK(locate(img, 2.0, 0.0).col == 1);
}

TEST_CASE("disparity derivative matches central differences") {
  std::mt19937_64 rng(2);
  const LightField lf = random_lf(rng, 5, 5, 24, 20, 3);
  std::uniform_real_distribution<double> pos(4.0, 16.0);
  std::uniform_real_distribution<double> disp(-1.5, 1.5);
  const double eps = 1e-4;
  int checked = 0;
  for (ViewCoordinate vc : lf.surrounding_views()) {
    std::vector<PixelPos> xs;
    std::vector<double> d;
    while (xs.size() < 40) {
      const PixelPos p{pos(rng), pos(rng)};
      const double di = disp(rng);
      const double col = p.col + (vc.u - 2) * di;
      const double row = p.row + (vc.v - 2) * di;
      // Stay 1e-3 away from cell boundaries under the whole stencil.
      auto frac_ok = [](double x) {
        const double f = x - std::floor(x);
        return f > 1e-3 + 2.5e-4 && f < 1.0 - 1e-3 - 2.5e-4;
      };
      if (!frac_ok(col) || !frac_ok(row)) continue;
      xs.push_back(p);
      d.push_back(di);
    }
    const WarpBatch base = warp_view(lf, vc, xs, d);
    std::vector<double> up(d), down(d);
    for (double& x : up) x += eps;
    for (double& x : down) x -= eps;
    const WarpBatch wu = warp_view(lf, vc, xs, up);
    const WarpBatch wd = warp_view(lf, vc, xs, down);
    for (std::size_t i = 0; i < base.value.size(); ++i) {
      const double numeric = (wu.value[i] - wd.value[i]) / (2.0 * eps);
      CHECK(std::abs(numeric - base.d_disparity[i]) < 1e-6);
      ++checked;
    }
  }
  CHECK(checked == 24 * 40 * 3);
}

TEST_CASE("warp_view identities") {
  std::mt19937_64 rng(3);
  const LightField lf = random_lf(rng, 3, 3, 10, 8, 3);
  std::vector<PixelPos> xs;
  std::vector<double> d;
  std::uniform_real_distribution<double> disp(-2.0, 2.0);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 10; ++c) {
      xs.push_back({static_cast<double>(c), static_cast<double>(r)});
      d.push_back(disp(rng));
    }
  }

  SUBCASE("zero disparity reads the view itself") {
    const std::vector<double> zero(d.size(), 0.0);
    const WarpBatch w = warp_view(lf, {0, 2}, xs, zero);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (int ch = 0; ch < 3; ++ch) {
        CHECK(w.value[i * 3 + ch] == lf.view({0, 2}).at(static_cast<int>(xs[i].col), static_cast<int>(xs[i].row), ch));
      }
    }
  }
  SUBCASE("the center view ignores disparity") {
    const WarpBatch w = warp_view(lf, lf.center(), xs, d);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      CHECK(w.in_bounds[i]);
      for (int ch = 0; ch < 3; ++ch) {
        CHECK(w.value[i * 3 + ch] == lf.center_view().at(static_cast<int>(xs[i].col), static_cast<int>(xs[i].row), ch));
        CHECK(w.d_disparity[i * 3 + ch] == 0.0);
      }
    }
  }
  SUBCASE("shifting d equals shifting positions") {
    const ViewCoordinate vc{2, 0};
    const double delta = 0.37;
    std::vector<double> shifted(d);
    for (double& x : shifted) x += delta;
    std::vector<PixelPos> moved(xs);
    for (auto& p : moved) {
      p.col += 1 * delta;
      p.row += -1 * delta;
    }
    const WarpBatch a = warp_view(lf, vc, xs, shifted);
    const WarpBatch b = warp_view(lf, vc, moved, d);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      REQUIRE(a.in_bounds[i] == b.in_bounds[i]);
      for (int ch = 0; ch < 3; ++ch) CHECK(a.value[i * 3 + ch] == doctest::Approx(b.value[i * 3 + ch]).epsilon(1e-12));
    }
  }
  SUBCASE("frozen cells extrapolate the cell polynomial") {
    const ViewCoordinate vc{2, 1};
    const WarpBatch base = warp_view(lf, vc, xs, d);
    std::vector<double> nudged(d);
    for (double& x : nudged) x += 0.6;
    const WarpBatch frozen = warp_view(lf, vc, xs, nudged, base.cells);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!base.in_bounds[i]) {
        CHECK_FALSE(frozen.in_bounds[i]);
        continue;
      }
      for (int ch = 0; ch < 3; ++ch) {
        // Along one axis the blend is affine, so value(d + 0.6) = value(d) + 0.6 * slope.
        CHECK(frozen.value[i * 3 + ch] ==
              doctest::Approx(base.value[i * 3 + ch] + 0.6 * base.d_disparity[i * 3 + ch]).epsilon(1e-9));
      }
    }
  }
  CHECK_THROWS_AS(warp_view(lf, {1, 0}, xs, std::vector<double>(3)), std::invalid_argument);
  CHECK_THROWS_AS(warp_view(lf, {3, 0}, xs, d), std::out_of_range);
}

TEST_CASE("true disparity warps every view onto the center") {
  SceneSpec s;
  s.d0 = 1.5;
  const auto scene = synth_lightfield(s, 48, 48, 5, 5);
  const LightField& lf = scene.light_field;
  std::vector<PixelPos> xs;
  for (int r = 4; r < 44; ++r) {
    for (int c = 4; c < 44; ++c) xs.push_back({static_cast<double>(c), static_cast<double>(r)});
  }
  const std::vector<double> d(xs.size(), 1.5);
  double worst = 0.0;
  for (ViewCoordinate vc : lf.surrounding_views()) {
    const WarpBatch w = warp_view(lf, vc, xs, d);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      REQUIRE(w.in_bounds[i]);
      for (int ch = 0; ch < 3; ++ch) {
        const double ref = lf.center_view().at(static_cast<int>(xs[i].col), static_cast<int>(xs[i].row), ch);
        worst = std::max(worst, std::abs(w.value[i * 3 + ch] - ref));
      }
    }
  }
  CHECK(worst < 1e-2);
}

TEST_CASE("aggregate_center") {
  WarpBatch a, b;
  for (WarpBatch* w : {&a, &b}) {
    w->channels = 1;
    w->value = {0.0, 0.0, 0.0};
    w->d_disparity = {0.0, 0.0, 0.0};
    w->in_bounds = {1, 1, 1};
    w->cells.resize(3);
  }
  a.value = {1.0, 4.0, 7.0};
  b.value = {3.0, 4.0, 9.0};
  b.in_bounds[2] = 0;
  std::vector<WarpBatch> warps{a, b};
  std::vector<std::vector<std::uint8_t>> masks{{1, 1, 1}, {1, 1, 1}};
  CenterSynthesis s = aggregate_center(warps, masks);
  CHECK(s.value == std::vector<double>{2.0, 4.0, 7.0});
  CHECK(s.valid == std::vector<std::uint8_t>{1, 1, 1});

  masks = {{0, 1, 0}, {1, 1, 1}};
  s = aggregate_center(warps, masks);
  CHECK(s.value[0] == 3.0);
  CHECK(s.valid[2] == 0);
  CHECK(s.value[2] == 0.0);

  // Permutation invariance and idempotence over duplicates.
  masks = {{1, 1, 1}, {1, 1, 1}};
  std::vector<WarpBatch> swapped{b, a};
  CHECK(aggregate_center(swapped, masks).value == aggregate_center(warps, masks).value);
  std::vector<WarpBatch> dup{a, a};
  CHECK(aggregate_center(dup, masks).value == a.value);
  CHECK_THROWS_AS(aggregate_center(warps, std::vector<std::vector<std::uint8_t>>{{1, 1, 1}}),
                  std::invalid_argument);
}

}  // TEST_SUITE
