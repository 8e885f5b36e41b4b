#include "subnet_walk/idx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

namespace subnet_walk {

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                   const std::filesystem::path& path) {
  if (bytes.size() < offset + 4)
    throw LengthError(path.string() + ": truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::string hex_magic(std::uint32_t magic) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", magic);
  return buf;
}

void check_magic(std::uint32_t observed, std::uint32_t expected,
                 const std::filesystem::path& path) {
  if (observed != expected)
    throw FormatError(path.string() + ": bad IDX magic " + hex_magic(observed) +
                      " (expected " + hex_magic(expected) + ")");
}

void put_be32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

}  // namespace

LabeledDataset<double> load_idx(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path,
                                std::optional<std::size_t> limit,
                                std::optional<int> num_classes, Split split) {
  const auto images = read_all(images_path);
  const auto labels = read_all(labels_path);

  check_magic(be32(images, 0, images_path), kIdxImagesMagic, images_path);
  check_magic(be32(labels, 0, labels_path), kIdxLabelsMagic, labels_path);

  const std::size_t n_images = be32(images, 4, images_path);
  const std::size_t rows = be32(images, 8, images_path);
  const std::size_t cols = be32(images, 12, images_path);
  const std::size_t n_labels = be32(labels, 4, labels_path);
  if (n_images != n_labels)
    throw ConsistencyError("IDX count mismatch: " + std::to_string(n_images) +
                           " images vs " + std::to_string(n_labels) + " labels");

  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + n_images * pixels)
    throw LengthError(images_path.string() + ": truncated image data (" +
                      std::to_string(images.size()) + " bytes, need " +
                      std::to_string(16 + n_images * pixels) + ")");
  if (labels.size() < 8 + n_labels)
    throw LengthError(labels_path.string() + ": truncated label data (" +
                      std::to_string(labels.size()) + " bytes, need " +
                      std::to_string(8 + n_labels) + ")");

  const std::size_t n = limit ? std::min(*limit, n_images) : n_images;
  if (n == 0) throw DomainError("IDX load produced an empty dataset");

  LabeledDataset<double>::Matrix x(static_cast<Eigen::Index>(n),
                                   static_cast<Eigen::Index>(pixels));
  std::vector<int> y(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* px = images.data() + 16 + i * pixels;
    for (std::size_t j = 0; j < pixels; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = px[j] / 255.0;
    y[i] = labels[8 + i];
    max_label = std::max(max_label, y[i]);
  }
  return LabeledDataset<double>(std::move(x), std::move(y),
                                num_classes.value_or(max_label + 1), split);
}

void write_idx(const LabeledDataset<double>& data, std::uint32_t rows,
               std::uint32_t cols, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (static_cast<std::size_t>(data.dim()) != std::size_t{rows} * cols)
    throw ShapeError("write_idx: image shape does not match input dimension");
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw IoError(images_path.string(), "cannot open for writing");
  put_be32(img, kIdxImagesMagic);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, rows);
  put_be32(img, cols);
  for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) {
      const double v = data.inputs(i, j);
      if (!(v >= 0.0 && v <= 1.0))
        throw DomainError("write_idx: pixel value outside [0, 1]");
      img.put(static_cast<char>(std::lround(v * 255.0)));
    }
  }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError(labels_path.string(), "cannot open for writing");
  put_be32(lab, kIdxLabelsMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) {
    if (y < 0 || y > 255) throw DomainError("write_idx: label does not fit a byte");
    lab.put(static_cast<char>(y));
  }
  if (!img || !lab) throw IoError(images_path.string(), "write failed");
}

}  // namespace subnet_walk
