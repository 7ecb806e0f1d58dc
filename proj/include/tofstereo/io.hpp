#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tofstereo/classifier.hpp"
#include "tofstereo/fusion.hpp"
#include "tofstereo/map.hpp"

namespace tofstereo::io {

namespace fs = std::filesystem;

/// Writes through a sibling temporary file that is renamed into place once
/// `writer` returns. Throws when the destination is unwritable.
void write_atomic(const fs::path& path, const std::function<void(const fs::path& tmp)>& writer);
void write_text_atomic(const fs::path& path, const std::string& text);

/// Largest accepted PFM/PNG side; larger headers are rejected as overflow.
inline constexpr int kMaxImageSide = 1 << 15;

// PFM: "Pf\n<w> <h>\n-1.0\n" then little-endian float32 rows, bottom row
// first. Readers also accept a positive (big-endian) scale.

void write_pfm_raw(const fs::path& path, const Map<float>& map);
Map<float> read_pfm_raw(const fs::path& path);

/// Depth in meters; invalid pixels are stored as 0.
void write_pfm(const fs::path& path, const DepthMap& depth);
/// Zero, negative and non-finite samples read back as invalid.
DepthMap read_pfm(const fs::path& path);

/// Three-channel "PF" variant.
using Rgb = std::array<float, 3>;
void write_pfm_rgb(const fs::path& path, const Map<Rgb>& map);
Map<Rgb> read_pfm_rgb(const fs::path& path);

/// 16-bit grayscale PNG in integer millimeters: floor(depth * 1000), 0 for
/// invalid, clamped to 65535.
void write_png16(const fs::path& path, const DepthMap& depth);
DepthMap read_png16(const fs::path& path);

/// 8-bit grayscale PNG storing raw byte values.
void write_png8(const fs::path& path, const Map<std::uint8_t>& map);
Map<std::uint8_t> read_png8(const fs::path& path);

/// Luminance in [0, 1] quantized to round(255 * v).
void write_image(const fs::path& path, const Image& image);
Image read_image(const fs::path& path);

// Parameter blobs: 8-byte magic, u32 version, u32 kind, u32 dims..., then
// little-endian float64 payload.

void write_classifier(const fs::path& path, const dei::ClassifierParams& params);
dei::ClassifierParams read_classifier(const fs::path& path);

void write_blend(const fs::path& path, const fusion::BlendParams& params);
fusion::BlendParams read_blend(const fs::path& path);

/// Throws an Error naming `path` when it does not exist.
void require_file(const fs::path& path);

}  // namespace tofstereo::io
