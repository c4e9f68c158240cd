#pragma once

#include "deco/synth.hpp"

#include <filesystem>

namespace deco {

/// 8-bit sRGB PNG; values are clamped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png_rgb(const std::filesystem::path& path);

/// 8-bit grayscale PNG holding integer labels in [0, 255].
void write_label_png(const std::filesystem::path& path, const LabelMap& labels, int scale = 1);
LabelMap read_label_png(const std::filesystem::path& path, int scale = 1);

/// Quantizes to 8 bits per channel, matching a write/read round trip.
RgbImage quantize_8bit(const RgbImage& image);

}  // namespace deco
