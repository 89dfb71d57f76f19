// Command-line front end: synth, reconstruct, render, eval, profile.
#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "lfndf/config.hpp"
#include "lfndf/errors.hpp"
#include "lfndf/io.hpp"
#include "lfndf/metrics.hpp"
#include "lfndf/model.hpp"
#include "lfndf/optim.hpp"
#include "lfndf/synth.hpp"

namespace fs = std::filesystem;
using namespace lfndf;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Min-max normalized colormap preview; the range goes to stderr.
void write_preview(const DisparityMap& map, const fs::path& path) {
  float lo = std::numeric_limits<float>::infinity();
  float hi = -lo;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!map.mask()[i] || !std::isfinite(map.values()[i])) continue;
    lo = std::min(lo, map.values()[i]);
    hi = std::max(hi, map.values()[i]);
  }
  cv::Mat gray(map.height(), map.width(), CV_8UC1, cv::Scalar(0));
  if (lo <= hi) {
    const float span = hi > lo ? hi - lo : 1.0f;
    for (int r = 0; r < map.height(); ++r) {
      for (int c = 0; c < map.width(); ++c) {
        if (!map.valid(c, r)) continue;
        gray.at<std::uint8_t>(r, c) =
            cv::saturate_cast<std::uint8_t>(255.0f * (map.at(c, r) - lo) / span);
      }
    }
  }
  cv::Mat color;
  cv::applyColorMap(gray, color, cv::COLORMAP_VIRIDIS);
  if (!cv::imwrite(path.string(), color)) throw IoError("cannot write " + path.string());
  std::cerr << "preview " << path.string() << ": range [" << lo << ", " << hi << "]\n";
}

std::pair<int, int> parse_resolution(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw CLI::ValidationError("--res", "expected HxW, got " + text);
  try {
    const int h = std::stoi(text.substr(0, x));
    const int w = std::stoi(text.substr(x + 1));
    if (h < 1 || w < 1) throw std::invalid_argument("non-positive");
    return {h, w};
  } catch (const std::logic_error&) {
    throw CLI::ValidationError("--res", "expected HxW, got " + text);
  }
}

struct SynthArgs {
  std::string kind = "constant";
  int hw = 64;
  int height = 0;
  int width = 0;
  int grid = 5;
  SceneSpec spec;
  std::vector<double> rect;
  bool png16 = true;
  fs::path out;
};

int run_synth(const SynthArgs& a) {
  SceneSpec spec = a.spec;
  spec.kind = parse_scene_kind(a.kind);
  if (!a.rect.empty()) {
    if (a.rect.size() != 4) throw std::invalid_argument("--rect takes x0,y0,x1,y1");
    spec.rect_x0 = a.rect[0];
    spec.rect_y0 = a.rect[1];
    spec.rect_x1 = a.rect[2];
    spec.rect_y1 = a.rect[3];
  }
  const int H = a.height > 0 ? a.height : a.hw;
  const int W = a.width > 0 ? a.width : a.hw;
  const SyntheticScene scene = synth_lightfield(spec, H, W, a.grid, a.grid);
  fs::create_directories(a.out / "views");
  Manifest m;
  m.grid_rows = a.grid;
  m.grid_cols = a.grid;
  for (int v = 0; v < a.grid; ++v) {
    for (int u = 0; u < a.grid; ++u) {
      char name[32];
      std::snprintf(name, sizeof name, "view_%02d_%02d.png", v, u);
      const fs::path p = a.out / "views" / name;
      write_png(scene.light_field.view({u, v}), p, a.png16 ? 16 : 8);
      m.views.push_back(p);
    }
  }
  m.ground_truth = a.out / "gt.pfm";
  write_pfm(scene.ground_truth, *m.ground_truth);
  write_manifest(m, a.out / "manifest.txt");
  std::cout << "wrote " << a.grid * a.grid << " views of " << W << "x" << H << " to "
            << a.out.string() << "\n";
  return 0;
}

struct ReconstructArgs {
  fs::path manifest;
  fs::path config;
  std::vector<std::string> overrides;
  int iterations = 0;
  long long seed = -1;
  bool quiet = false;
  fs::path out;
};

int run_reconstruct(const ReconstructArgs& a) {
  ReconstructionConfig cfg = a.config.empty() ? ReconstructionConfig{} : read_config(a.config);
  // Bad overrides are usage errors; a bad config file is a data error.
  try {
    for (const std::string& kv : a.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + kv);
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (a.iterations > 0) cfg.iterations = a.iterations;
    if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
    if (!a.overrides.empty() || a.iterations > 0) cfg.validate();
  } catch (const std::invalid_argument& err) {
    throw CLI::ValidationError("--set", err.what());
  }
  cfg.validate();

  if (!fs::exists(a.manifest)) throw IoError("manifest not found: " + a.manifest.string());
  const LightField lf = load_lightfield(a.manifest);
  const auto gt = load_ground_truth(a.manifest);
  fs::create_directories(a.out);
  const std::string cfg_text = format_config(cfg);
  write_text(a.out / "config.txt", cfg_text);

  const Reconstruction rec = reconstruct(lf, cfg, [&](const LogRecord& r) {
    if (!a.quiet) {
      std::cerr << "step " << r.step << "  loss " << r.loss8 << "  monitor " << r.loss6
                << "  sigma " << r.sigma << "  lr " << r.learning_rate << "\n";
    }
  });
  write_pfm(rec.disparity, a.out / "disparity.pfm");
  save_checkpoint(rec.model, a.out / "model.ckpt");
  write_log_csv(rec.log, a.out / "log.csv");
  write_preview(rec.disparity, a.out / "preview.png");
  if (gt) {
    const MetricsReport report =
        evaluate(rec.disparity, *gt, kDefaultThresholds, a.manifest.parent_path().filename().string());
    const std::string json = to_json(report, fnv1a_hex(cfg_text));
    write_text(a.out / "metrics.json", json + "\n");
    std::cout << json << "\n";
  }
  return 0;
}

struct RenderArgs {
  fs::path checkpoint;
  std::string res;
  fs::path out;
};

int run_render(const RenderArgs& a) {
  const NdfModel model = load_checkpoint(a.checkpoint);
  int h = model.ref_height();
  int w = model.ref_width();
  if (!a.res.empty()) std::tie(h, w) = parse_resolution(a.res);
  const DisparityMap map = render_grid(model, h, w);
  fs::create_directories(a.out);
  const std::string tag = std::to_string(h) + "x" + std::to_string(w);
  write_pfm(map, a.out / ("disparity_" + tag + ".pfm"));
  write_preview(map, a.out / ("preview_" + tag + ".png"));
  return 0;
}

struct EvalArgs {
  fs::path pred;
  fs::path gt;
  std::vector<double> thresholds = kDefaultThresholds;
  std::string scene;
  fs::path out;
};

int run_eval(const EvalArgs& a) {
  const DisparityMap pred = read_pfm(a.pred);
  const DisparityMap gt = read_pfm(a.gt);
  const MetricsReport report = evaluate(pred, gt, a.thresholds, a.scene);
  const std::string json = to_json(report);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(a.out / "metrics.json", json + "\n");
  }
  std::cout << json << "\n";
  return 0;
}

struct ProfileArgs {
  fs::path map;
  int row = 0;
  fs::path out;
};

int run_profile(const ProfileArgs& a) {
  const DisparityMap map = read_pfm(a.map);
  const std::string csv = profile_csv(profile_line(map, a.row));
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    fs::create_directories(a.out);
    write_text(a.out / ("profile_row" + std::to_string(a.row) + ".csv"), csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-scene disparity field reconstruction from 4D light fields"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Render a synthetic light field with ground truth");
  s->add_option("--kind", synth.kind, "constant | slanted | step | two_layer")->capture_default_str();
  s->add_option("--hw", synth.hw, "Square view size in pixels")->capture_default_str();
  s->add_option("--height", synth.height, "View height (overrides --hw)");
  s->add_option("--width", synth.width, "View width (overrides --hw)");
  s->add_option("--grid", synth.grid, "Views per side (odd)")->capture_default_str();
  s->add_option("--d0", synth.spec.d0, "Plane disparity at the image center")->capture_default_str();
  s->add_option("--gx", synth.spec.gx, "Disparity slope per pixel along x")->capture_default_str();
  s->add_option("--gy", synth.spec.gy, "Disparity slope per pixel along y")->capture_default_str();
  s->add_option("--fg", synth.spec.d_foreground, "Foreground disparity")->capture_default_str();
  s->add_option("--bg", synth.spec.d_background, "Background disparity")->capture_default_str();
  s->add_option("--step-fraction", synth.spec.step_fraction, "Occluder edge as a width fraction")
      ->capture_default_str();
  s->add_option("--rect", synth.rect, "Foreground rectangle x0,y0,x1,y1 in width/height fractions")
      ->delimiter(',');
  s->add_option("--texture-seed", synth.spec.texture_seed, "Texture seed")->capture_default_str();
  s->add_option("--noise", synth.spec.noise_sigma, "Gaussian image noise sigma")->capture_default_str();
  s->add_option("--noise-seed", synth.spec.noise_seed, "Image noise seed")->capture_default_str();
  s->add_option("--channels", synth.spec.channels, "1 or 3")->capture_default_str();
  s->add_flag("--png16,!--png8", synth.png16, "Bit depth of the written views")->capture_default_str();
  s->add_option("--out", synth.out, "Output directory")->required();

  ReconstructArgs rec;
  auto* r = app.add_subcommand("reconstruct", "Fit a disparity field to one light field");
  r->add_option("--manifest", rec.manifest, "Light-field manifest")->required();
  r->add_option("--config", rec.config, "key = value configuration file");
  r->add_option("--set", rec.overrides, "Override one configuration key (key=value), repeatable");
  r->add_option("--iterations", rec.iterations, "Override the iteration count");
  r->add_option("--seed", rec.seed, "Override the seed");
  r->add_flag("--quiet", rec.quiet, "Suppress progress output");
  r->add_option("--out", rec.out, "Output directory")->required();

  RenderArgs ren;
  auto* rd = app.add_subcommand("render", "Evaluate a trained field on a pixel grid");
  rd->add_option("--checkpoint", ren.checkpoint, "Checkpoint written by reconstruct")->required();
  rd->add_option("--res", ren.res, "Output size HxW (default: training resolution)");
  rd->add_option("--out", ren.out, "Output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "BadPix and MSE x100 of a predicted map");
  e->add_option("--pred", ev.pred, "Predicted disparity PFM")->required();
  e->add_option("--gt", ev.gt, "Ground-truth disparity PFM")->required();
  e->add_option("--thresholds", ev.thresholds, "BadPix thresholds")->delimiter(',')->capture_default_str();
  e->add_option("--scene", ev.scene, "Scene name recorded in the report");
  e->add_option("--out", ev.out, "Output directory for metrics.json");

  ProfileArgs pr;
  auto* p = app.add_subcommand("profile", "Export one row of a disparity map as CSV");
  p->add_option("--map", pr.map, "Disparity PFM")->required();
  p->add_option("--row", pr.row, "Row index")->required();
  p->add_option("--out", pr.out, "Output directory (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  try {
    if (s->parsed()) return run_synth(synth);
    if (r->parsed()) return run_reconstruct(rec);
    if (rd->parsed()) return run_render(ren);
    if (e->parsed()) return run_eval(ev);
    if (p->parsed()) return run_profile(pr);
  } catch (const DivergenceError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitDivergence;
  } catch (const CLI::ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
