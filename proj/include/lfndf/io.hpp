#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lfndf/image.hpp"
#include "lfndf/lightfield.hpp"

namespace lfndf {

// PFM: "Pf" grayscale only. Rows are stored bottom-up; a negative scale means
// little-endian payload. Non-finite samples are read back as invalid pixels
// and invalid pixels are written as +inf.
DisparityMap read_pfm(const std::filesystem::path& path);
void write_pfm(const DisparityMap& map, const std::filesystem::path& path);

// 8- or 16-bit PNG, gray / RGB / RGBA (alpha dropped). Samples normalized to [0, 1].
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path, int bit_depth = 8);

/// Parsed light-field manifest.
///
/// Plain UTF-8 `key = value` lines, `#` starts a comment. `views` takes a
/// comma separated list that may continue on following lines without a key.
/// Relative paths resolve against the manifest's directory.
struct Manifest {
  int grid_rows = 0;
  int grid_cols = 0;
  std::vector<std::filesystem::path> views;
  std::optional<std::filesystem::path> ground_truth;
  double disparity_scale = 1.0;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

LightField load_lightfield(const std::filesystem::path& manifest_path);
std::optional<DisparityMap> load_ground_truth(const std::filesystem::path& manifest_path);

}  // namespace lfndf
