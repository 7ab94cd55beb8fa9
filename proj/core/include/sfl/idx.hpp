#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfl/dataset.hpp"

namespace sfl {

class IdxMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IdxTruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IdxCountMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Parses an IDX image/label pair (big-endian headers, unsigned-byte
/// payloads). Images become (N, 1, H, W) with pixels scaled to [0, 1].
/// `num_classes` is one more than the largest label.
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Pixels are mapped back to bytes by round(clamp(v, 0, 1) * 255); single
/// channel datasets only.
std::vector<std::uint8_t> encode_idx_images(const Dataset& ds);
std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds);
void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

}  // namespace sfl
