#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>

#include "subnet_walk/dataset.hpp"

namespace subnet_walk {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX image/label file pair (the MNIST distribution format).
///
/// Header words are big-endian. Pixels are scaled by 1/255 and each image is
/// flattened row-major. `num_classes` defaults to max(label) + 1.
LabeledDataset<double> load_idx(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path,
                                std::optional<std::size_t> limit = std::nullopt,
                                std::optional<int> num_classes = std::nullopt,
                                Split split = Split::Train);

/// Writes `data` as an IDX pair with the given image shape. Pixel values are
/// mapped back with round(255 * v); values must lie in [0, 1].
void write_idx(const LabeledDataset<double>& data, std::uint32_t rows,
               std::uint32_t cols, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

}  // namespace subnet_walk
