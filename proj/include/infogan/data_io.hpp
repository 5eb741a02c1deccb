#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "infogan/error.hpp"
#include "infogan/rng.hpp"
#include "infogan/tensor.hpp"

namespace infogan {

enum class DatasetKind { toy, mnist };

struct Dataset {
  DatasetKind kind = DatasetKind::toy;
  Tensor images;            // N x (height * width), values in [0, 1]
  std::vector<int> labels;  // empty when unlabeled
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::string provenance;

  std::size_t size() const { return images.rows(); }
  std::size_t image_dim() const { return height * width; }
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// MNIST IDX

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

namespace detail {

inline std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::string& what) {
  if (offset + 4 > bytes.size()) throw IoError(what + ": truncated header");
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

inline void append_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

}  // namespace detail

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

inline IdxImages parse_idx_images(const std::string& bytes, const std::string& what = "idx images") {
  const std::uint32_t magic = detail::read_be32(bytes, 0, what);
  if (magic != kIdxImageMagic) {
    throw FormatError(what + ": bad magic " + std::to_string(magic) + " (expected 2051)");
  }
  IdxImages out;
  out.count = detail::read_be32(bytes, 4, what);
  out.rows = detail::read_be32(bytes, 8, what);
  out.cols = detail::read_be32(bytes, 12, what);
  const std::size_t payload = out.count * out.rows * out.cols;
  if (bytes.size() < 16 + payload) {
    throw IoError(what + ": truncated payload (" + std::to_string(bytes.size() - 16) + " of " +
                  std::to_string(payload) + " bytes)");
  }
  out.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return out;
}

inline std::vector<std::uint8_t> parse_idx_labels(const std::string& bytes, const std::string& what = "idx labels") {
  const std::uint32_t magic = detail::read_be32(bytes, 0, what);
  if (magic != kIdxLabelMagic) {
    throw FormatError(what + ": bad magic " + std::to_string(magic) + " (expected 2049)");
  }
  const std::size_t count = detail::read_be32(bytes, 4, what);
  if (bytes.size() < 8 + count) throw IoError(what + ": truncated payload");
  return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count));
}

inline std::string encode_idx_images(const IdxImages& images) {
  std::string out;
  detail::append_be32(out, kIdxImageMagic);
  detail::append_be32(out, static_cast<std::uint32_t>(images.count));
  detail::append_be32(out, static_cast<std::uint32_t>(images.rows));
  detail::append_be32(out, static_cast<std::uint32_t>(images.cols));
  out.append(images.pixels.begin(), images.pixels.end());
  return out;
}

inline std::string encode_idx_labels(const std::vector<std::uint8_t>& labels) {
  std::string out;
  detail::append_be32(out, kIdxLabelMagic);
  detail::append_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.append(labels.begin(), labels.end());
  return out;
}

/// Loads an IDX image/label pair. Pixels are scaled by 1/255. When `limit`
/// is nonzero only the first `limit` records (file order) are kept.
inline Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                              std::size_t limit = 0) {
  for (const auto& p : {images_path, labels_path}) {
    if (!std::filesystem::exists(p)) {
      throw IoError("MNIST file not found: '" + p.string() +
                    "' (download train-images-idx3-ubyte and train-labels-idx1-ubyte, decompress them, and pass their "
                    "paths)");
    }
  }
  const IdxImages images = parse_idx_images(read_file(images_path), images_path.string());
  const std::vector<std::uint8_t> labels = parse_idx_labels(read_file(labels_path), labels_path.string());
  if (labels.size() != images.count) {
    throw FormatError("MNIST: " + std::to_string(images.count) + " images but " + std::to_string(labels.size()) +
                      " labels");
  }
  const std::size_t n = limit == 0 ? images.count : std::min(limit, images.count);
  if (n == 0) throw FormatError("MNIST: no images");
  const std::size_t dim = images.rows * images.cols;
  Dataset out;
  out.kind = DatasetKind::mnist;
  out.height = images.rows;
  out.width = images.cols;
  out.images = Tensor({n, dim});
  for (std::size_t i = 0; i < n * dim; ++i) out.images[i] = images.pixels[i] / 255.0;
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  int max_label = 0;
  for (int l : out.labels) max_label = std::max(max_label, l);
  out.num_classes = static_cast<std::size_t>(max_label) + 1;
  out.provenance = "mnist:" + images_path.string() + ":first" + std::to_string(n);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic 8x8 templates

inline constexpr std::size_t kToySide = 8;

// Template t (0 horizontal bar, 1 vertical bar, 2 diagonal, 3 anti-diagonal)
// shifted cyclically by dx columns.
inline std::vector<double> render_template(std::size_t t, int dx) {
  const int n = static_cast<int>(kToySide);
  std::vector<double> img(kToySide * kToySide, 0.0);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      bool on = false;
      switch (t) {
        case 0: on = r == 3 || r == 4; break;
        case 1: on = c == 3 || c == 4; break;
        case 2: on = c - r == 0 || c - r == 1; break;
        case 3: on = r + c == n - 1 || r + c == n; break;
        default: throw UsageError("render_template: template index must be < 4");
      }
      if (on) img[static_cast<std::size_t>(r * n + ((c + dx) % n + n) % n)] = 1.0;
    }
  }
  return img;
}

inline Dataset synth_templates(std::size_t k, std::size_t n, double noise_sigma, Pcg32& rng) {
  if (k < 2 || k > 4) throw UsageError("synth_templates: k must be 2, 3 or 4");
  if (n < k) throw UsageError("synth_templates: n must be at least k");
  if (!(noise_sigma >= 0.0)) throw UsageError("synth_templates: noise_sigma must be non-negative");
  constexpr std::size_t dim = kToySide * kToySide;
  Dataset out;
  out.kind = DatasetKind::toy;
  out.height = kToySide;
  out.width = kToySide;
  out.num_classes = k;
  out.images = Tensor({n, dim});
  out.labels.resize(n);
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  std::uniform_int_distribution<int> shift(-2, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = pick(rng);
    const int dx = shift(rng);
    std::vector<double> img = render_template(t, dx);
    if (noise_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, noise_sigma);
      for (double& v : img) v = std::clamp(v + noise(rng), 0.0, 1.0);
    }
    std::copy(img.begin(), img.end(), out.images.data().begin() + static_cast<std::ptrdiff_t>(i * dim));
    out.labels[i] = static_cast<int>(t);
  }
  out.provenance = "toy:k=" + std::to_string(k) + ":n=" + std::to_string(n);
  return out;
}

// ---------------------------------------------------------------------------
// PGM image grids

/// Binary PGM of an R x C grid; image r * C + c lands in block (r, c).
inline std::string encode_image_grid(const Tensor& images, std::size_t rows, std::size_t cols, std::size_t height,
                                     std::size_t width) {
  if (images.rows() != rows * cols || images.cols() != height * width) {
    throw UsageError("image grid: expected " + std::to_string(rows * cols) + " images of " +
                     std::to_string(height * width) + " pixels, got " + shape_string(images.shape()));
  }
  const std::size_t gw = cols * width, gh = rows * height;
  std::string out = "P5\n" + std::to_string(gw) + " " + std::to_string(gh) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + gw * gh);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t img = r * cols + c;
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const double v = images.at(img, y * width + x);
          if (!(v >= 0.0 && v <= 1.0)) {
            throw UsageError("image grid: pixel value " + std::to_string(v) + " outside [0, 1]");
          }
          const std::size_t gy = r * height + y, gx = c * width + x;
          out[header + gy * gw + gx] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v)));
        }
      }
    }
  }
  return out;
}

inline void write_image_grid(const Tensor& images, std::size_t rows, std::size_t cols, std::size_t height,
                             std::size_t width, const std::filesystem::path& path) {
  write_file(path, encode_image_grid(images, rows, cols, height, width));
}

}  // namespace infogan
