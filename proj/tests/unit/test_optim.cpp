#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "lfndf/config.hpp"
#include "lfndf/errors.hpp"
#include "lfndf/optim.hpp"
#include "lfndf/synth.hpp"
#include "support.hpp"

using namespace lfndf;

namespace {

LightField small_scene(double d0 = 1.0, int size = 24) {
  SceneSpec s;
  s.d0 = d0;
  return synth_lightfield(s, size, size, 5, 5).light_field;
}

ReconstructionConfig quick_config() {
  ReconstructionConfig c = tiny_config();
  c.mssim_window = 5;
  c.mssim_sigma = 1.0;
  c.iterations = 30;
  c.patches_per_step = 2;
  return c;
}

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("noise schedule") {
  ReconstructionConfig c;
  c.iterations = 1000;
  CHECK(noise_sigma(0, c) == 1.0);
  CHECK(noise_sigma(499, c) == 1e-2);
  CHECK(noise_sigma(500, c) == 0.0);
  CHECK(noise_sigma(999, c) == 0.0);
  // Log-linear: halfway through the ramp is the geometric mean.
  c.iterations = 201;
  c.noise_fraction = 1.0;
  CHECK(noise_sigma(100, c) == doctest::Approx(0.1).epsilon(1e-12));
  for (int s = 1; s < 201; ++s) CHECK(noise_sigma(s, c) < noise_sigma(s - 1, c));

  c.noise_fraction = 0.0;
  CHECK(noise_sigma(0, c) == 0.0);
  c.noise_fraction = 0.5;
  c.noise_start = 0.0;
  c.noise_end = 0.0;
  CHECK(noise_sigma(0, c) == 0.0);
}

TEST_CASE("learning-rate schedule") {
  ReconstructionConfig c;
  c.iterations = 101;
  CHECK(learning_rate_at(0, c) == 1e-2);
  CHECK(learning_rate_at(100, c) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(learning_rate_at(50, c) == doctest::Approx(1e-2 * std::sqrt(0.1)).epsilon(1e-12));
  c.iterations = 1;
  CHECK(learning_rate_at(0, c) == 1e-2);
}

TEST_CASE("adam") {
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -0.1, 0.0};
  OptimizerState s(3);
  adam_update(p, g, s, 0.1, 0.9, 0.99, 1e-15);
  // The first bias-corrected step moves every parameter by lr * sign(g).
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-12));
  CHECK(p[2] == 0.5);
  CHECK(s.step == 1);

  std::vector<double> q{1.0, 2.0};
  OptimizerState z(2);
  adam_update(q, std::vector<double>{5.0, -3.0}, z, 0.0, 0.9, 0.99, 1e-15);
  CHECK(q == std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(adam_update(q, std::vector<double>{1.0}, z, 0.1, 0.9, 0.99, 1e-15),
                  std::invalid_argument);
}

TEST_CASE("patch sampling") {
  ReconstructionConfig c;
  c.patch_size = 32;
  c.patches_per_step = 500;
  std::mt19937_64 a(3), b(3);
  const auto oa = sample_patches(a, 40, 50, c);
  CHECK(oa == sample_patches(b, 40, 50, c));
  int max_col = 0, max_row = 0;
  for (const auto& o : oa) {
    CHECK(o.col >= 0);
    CHECK(o.row >= 0);
    CHECK(o.col + 32 <= 50);
    CHECK(o.row + 32 <= 40);
    max_col = std::max(max_col, o.col);
    max_row = std::max(max_row, o.row);
  }
  CHECK(max_col == 18);
  CHECK(max_row == 8);
  CHECK(sample_patches(a, 32, 32, c).front() == PatchOrigin{0, 0});
  CHECK_THROWS_AS(sample_patches(a, 31, 64, c), std::invalid_argument);
}

TEST_CASE("config text round trip") {
  ReconstructionConfig c;
  c.alpha = 0.25;
  c.selection = SelectionMode::all;
  c.seed = 123456789012345ull;
  c.grayscale = true;
  c.lr_decay = 1.0 / 3.0;
  const ReconstructionConfig back = parse_config(format_config(c));
  CHECK(format_config(back) == format_config(c));
  CHECK(back.lr_decay == c.lr_decay);
  CHECK(back.seed == c.seed);
  CHECK(back.selection == SelectionMode::all);
  CHECK(back.grayscale);

  const ReconstructionConfig p = parse_config("# comment\n\niterations = 7\nbeta=0\n");
  CHECK(p.iterations == 7);
  CHECK(p.beta == 0.0);
  CHECK(p.alpha == 1.0);
  CHECK_THROWS_AS(parse_config("nope = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("iterations = many\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("selection = some\n"), std::invalid_argument);

  test::TempDir dir;
  CHECK_THROWS_AS(read_config(dir / "missing.txt"), IoError);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(ReconstructionConfig{}.validate());
  ReconstructionConfig c;
  c.alpha = 0.0;
  c.beta = 0.0;
  CHECK_NOTHROW(c.validate());
  c = ReconstructionConfig{};
  c.patch_size = 8;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ReconstructionConfig{};
  c.noise_end = 2.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ReconstructionConfig{};
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ReconstructionConfig{};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("gradient check on the tiny configuration") {
  const LightField lf = small_scene(0.7, 24);
  const GradCheckReport r = grad_check(tiny_config(), lf);
  REQUIRE(r.groups.size() == 3);
  CHECK(r.groups[0].name == "hash features");
  CHECK(r.groups[1].name == "MLP weights");
  CHECK(r.groups[2].name == "MLP biases");
  CHECK(r.groups[0].count + r.groups[1].count + r.groups[2].count == 377);
  CHECK(r.max_rel_error < 1e-3);
  CHECK(r.draws >= 1);

  GradCheckOptions tv;
  tv.tv_only = true;
  CHECK(grad_check(tiny_config(), lf, tv).max_rel_error < 1e-3);
}

TEST_CASE("evaluate_loss replay reproduces the recorded evaluation") {
  const LightField lf = small_scene(0.6, 24);
  const ReconstructionConfig c = tiny_config();
  NdfModel m(c.model(), 24, 24);
  const std::vector<PatchOrigin> origins{{2, 3}, {8, 0}};
  const LossEvaluation a = evaluate_loss(m, lf, origins, c, {});
  EvaluationOptions replay;
  replay.replay = &a.branches;
  const LossEvaluation b = evaluate_loss(m, lf, origins, c, {}, replay);
  CHECK(a.loss == b.loss);
  CHECK(a.gradient == b.gradient);
  CHECK(a.gradient.size() == m.param_count());
  CHECK_THROWS_AS(evaluate_loss(m, lf, origins, c, std::vector<double>(5)), std::invalid_argument);
}

TEST_CASE("training is deterministic and lowers the loss") {
  const LightField lf = small_scene(1.0, 24);
  ReconstructionConfig c = quick_config();
  c.iterations = 150;
  c.learning_rate = 2e-2;
  c.noise_start = 0.0;
  c.noise_end = 0.0;
  const Reconstruction a = reconstruct(lf, c);
  const Reconstruction b = reconstruct(lf, c);
  CHECK(a.disparity == b.disparity);
  CHECK(a.losses == b.losses);
  REQUIRE(a.losses.size() == 150);

  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += a.losses[i];
    tail += a.losses[140 + i];
  }
  CHECK(tail < 0.2 * head);

  // Logged at step 0, every log_interval steps and at the end.
  REQUIRE_FALSE(a.log.empty());
  CHECK(a.log.front().step == 0);
  CHECK(a.log.back().step == 149);
  CHECK(a.log[1].step == 10);

  c.seed = 1;
  CHECK_FALSE(reconstruct(lf, c).losses == a.losses);
}

TEST_CASE("constant plane converges within 2000 steps") {
  const LightField lf = small_scene(1.5, 32);
  ReconstructionConfig c = tiny_config();
  c.iterations = 2000;
  c.log_interval = 500;
  const Reconstruction r = reconstruct(lf, c);
  CHECK(r.losses.back() < 0.05 * r.losses.front());
}

TEST_CASE("zero learning rate leaves the model untouched") {
  const LightField lf = small_scene(1.0, 24);
  ReconstructionConfig c = quick_config();
  c.learning_rate = 0.0;
  c.iterations = 3;
  NdfModel m(c.model(), 24, 24);
  const NdfModel before = m;
  OptimizerState s(m.param_count());
  for (int step = 0; step < 3; ++step) train_step(m, lf, s, c, step);
  CHECK(m == before);
}

TEST_CASE("divergence is reported") {
  const LightField lf = small_scene(1.0, 24);
  ReconstructionConfig c = quick_config();
  NdfModel m(c.model(), 24, 24);
  m.params()[0] = std::nan("");
  m.params()[m.param_count() - 1] = std::nan("");
  OptimizerState s(m.param_count());
  CHECK_THROWS_AS(train_step(m, lf, s, c, 0), DivergenceError);
}

TEST_CASE("log csv") {
  test::TempDir dir;
  const std::vector<LogRecord> log{{0, 1.5, 0.5, 1.0, 0.01}, {10, 1.0, 0.25, 0.5, 0.005}};
  write_log_csv(log, dir / "log.csv");
  const std::string text = test::read_bytes(dir / "log.csv");
  CHECK(text.rfind("step,loss8,loss6,sigma,lr\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}

}  // TEST_SUITE
