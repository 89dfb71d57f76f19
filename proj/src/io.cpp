#include "lfndf/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "lfndf/errors.hpp"

namespace lfndf {
namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::uint32_t byteswap32(std::uint32_t x) {
  return (x >> 24) | ((x >> 8) & 0xff00u) | ((x << 8) & 0xff0000u) | (x << 24);
}

// Reads one whitespace-delimited header token.
std::string header_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF && std::isspace(c)) c = in.get();
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok;
}

}  // namespace

DisparityMap read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PFM file: " + path.string());

  const std::string magic = header_token(in);
  if (magic == "PF") throw FormatError("color PFM (PF) is not supported: " + path.string());
  if (magic != "Pf") throw FormatError("malformed PFM header in " + path.string());

  int width = 0;
  int height = 0;
  double scale = 0.0;
  try {
    width = std::stoi(header_token(in));
    height = std::stoi(header_token(in));
    scale = std::stod(header_token(in));  // consumes the single separator byte
  } catch (const std::exception&) {
    throw FormatError("malformed PFM header in " + path.string());
  }
  if (width <= 0 || height <= 0 || !std::isfinite(scale) || scale == 0.0) {
    throw FormatError("malformed PFM header in " + path.string());
  }

  const bool little = scale < 0.0;
  const bool swap = little != (std::endian::native == std::endian::little);
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t)));
  if (in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t))) {
    throw FormatError("truncated PFM payload in " + path.string());
  }

  DisparityMap map(width, height);
  for (int file_row = 0; file_row < height; ++file_row) {
    const int row = height - 1 - file_row;
    for (int col = 0; col < width; ++col) {
      std::uint32_t bits = raw[static_cast<std::size_t>(file_row) * width + col];
      if (swap) bits = byteswap32(bits);
      const float v = std::bit_cast<float>(bits);
      map.at(col, row) = v;
      map.set_valid(col, row, std::isfinite(v));
    }
  }
  return map;
}

void write_pfm(const DisparityMap& map, const fs::path& path) {
  if (!map.finite()) throw std::invalid_argument("write_pfm: non-finite value in valid region");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PFM file: " + path.string());

  out << "Pf\n" << map.width() << ' ' << map.height() << "\n-1\n";
  const bool swap = std::endian::native != std::endian::little;
  std::vector<std::uint32_t> row_bits(map.width());
  for (int row = map.height() - 1; row >= 0; --row) {
    for (int col = 0; col < map.width(); ++col) {
      const float v = map.valid(col, row) ? map.at(col, row)
                                          : std::numeric_limits<float>::infinity();
      std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      row_bits[col] = swap ? byteswap32(bits) : bits;
    }
    out.write(reinterpret_cast<const char*>(row_bits.data()),
              static_cast<std::streamsize>(row_bits.size() * sizeof(std::uint32_t)));
  }
  if (!out) throw IoError("failed writing PFM file: " + path.string());
}

Image read_png(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing image file: " + path.string());
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw FormatError("cannot decode image: " + path.string());

  double norm = 0.0;
  if (mat.depth() == CV_8U) {
    norm = 1.0 / 255.0;
  } else if (mat.depth() == CV_16U) {
    norm = 1.0 / 65535.0;
  } else {
    throw FormatError("unsupported image bit depth: " + path.string());
  }
  const int src_channels = mat.channels();
  if (src_channels != 1 && src_channels != 3 && src_channels != 4) {
    throw FormatError("unsupported channel count in " + path.string());
  }
  const int channels = src_channels == 1 ? 1 : 3;

  cv::Mat f;
  mat.convertTo(f, CV_MAKETYPE(CV_32F, src_channels), norm);
  Image img(f.cols, f.rows, channels);
  for (int row = 0; row < f.rows; ++row) {
    const float* src = f.ptr<float>(row);
    for (int col = 0; col < f.cols; ++col) {
      const float* px = src + static_cast<std::size_t>(col) * src_channels;
      if (channels == 1) {
        img.at(col, row) = px[0];
      } else {
        // OpenCV stores BGR(A).
        img.at(col, row, 0) = px[2];
        img.at(col, row, 1) = px[1];
        img.at(col, row, 2) = px[0];
      }
    }
  }
  return img;
}

void write_png(const Image& image, const fs::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("write_png: bit depth");
  const int c = image.channels();
  const double maxv = bit_depth == 8 ? 255.0 : 65535.0;
  cv::Mat mat(image.height(), image.width(), CV_MAKETYPE(bit_depth == 8 ? CV_8U : CV_16U, c));
  for (int row = 0; row < image.height(); ++row) {
    for (int col = 0; col < image.width(); ++col) {
      for (int ch = 0; ch < c; ++ch) {
        const int dst_ch = c >= 3 && ch < 3 ? 2 - ch : ch;
        const double v = std::clamp(static_cast<double>(image.at(col, row, ch)), 0.0, 1.0);
        const auto q = static_cast<unsigned>(std::lround(v * maxv));
        if (bit_depth == 8) {
          mat.ptr<std::uint8_t>(row)[col * c + dst_ch] = static_cast<std::uint8_t>(q);
        } else {
          mat.ptr<std::uint16_t>(row)[col * c + dst_ch] = static_cast<std::uint16_t>(q);
        }
      }
    }
  }
  // Fixed compression level keeps the bytes reproducible.
  if (!cv::imwrite(path.string(), mat, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw IoError("cannot write image: " + path.string());
  }
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  const fs::path base = path.parent_path();

  Manifest m;
  bool in_views = false;
  auto add_views = [&](const std::string& list) {
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) m.views.push_back(base / item);
    }
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (!in_views) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
      }
      add_views(line);
      continue;
    }
    in_views = false;
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "grid_rows") {
        m.grid_rows = std::stoi(value);
      } else if (key == "grid_cols") {
        m.grid_cols = std::stoi(value);
      } else if (key == "disparity_scale") {
        m.disparity_scale = std::stod(value);
      } else if (key == "gt") {
        if (!value.empty()) m.ground_truth = base / value;
      } else if (key == "views") {
        in_views = true;
        add_views(value);
      } else {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": unknown key '" +
                          key + "'");
      }
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad value for '" +
                        key + "'");
    }
  }
  if (m.grid_rows < 1 || m.grid_cols < 1) {
    throw FormatError("manifest " + path.string() + " lacks grid_rows/grid_cols");
  }
  return m;
}

void write_manifest(const Manifest& m, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) { return p.lexically_relative(base).generic_string(); };
  out << "grid_rows = " << m.grid_rows << "\n";
  out << "grid_cols = " << m.grid_cols << "\n";
  out << "disparity_scale = " << m.disparity_scale << "\n";
  if (m.ground_truth) out << "gt = " << rel(*m.ground_truth) << "\n";
  out << "views =\n";
  for (const fs::path& v : m.views) out << "  " << rel(v) << ",\n";
  if (!out) throw IoError("failed writing manifest: " + path.string());
}

LightField load_lightfield(const fs::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const std::size_t expected = static_cast<std::size_t>(m.grid_rows) * m.grid_cols;
  if (m.views.size() != expected) {
    throw FormatError("manifest " + manifest_path.string() + " lists " +
                      std::to_string(m.views.size()) + " views for a " +
                      std::to_string(m.grid_rows) + "x" + std::to_string(m.grid_cols) + " grid");
  }
  std::vector<Image> views;
  views.reserve(expected);
  for (const fs::path& p : m.views) {
    views.push_back(read_png(p));
    const Image& first = views.front();
    const Image& cur = views.back();
    if (cur.width() != first.width() || cur.height() != first.height() ||
        cur.channels() != first.channels()) {
      throw FormatError("view " + p.string() + " differs in size from " + m.views[0].string());
    }
  }
  return LightField(m.grid_rows, m.grid_cols, std::move(views), m.disparity_scale);
}

std::optional<DisparityMap> load_ground_truth(const fs::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  if (!m.ground_truth) return std::nullopt;
  return read_pfm(*m.ground_truth);
}

}  // namespace lfndf
