#include "deco/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace deco {
namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_raw(const std::filesystem::path& path, int height, int width, png_uint_32 format,
               const std::vector<std::uint8_t>& buffer) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + image.message);
  }
}

std::vector<std::uint8_t> read_raw(const std::filesystem::path& path, png_uint_32 format,
                                   int& height, int& width) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + image.message);
  }
  height = static_cast<int>(image.height);
  width = static_cast<int>(image.width);
  return buffer;
}

}  // namespace

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  const int h = image.height(), w = image.width();
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(h) * w * 3);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int k = 0; k < 3; ++k) {
        buffer[(static_cast<std::size_t>(r) * w + c) * 3 + k] = to_byte(image.channels[k](r, c));
      }
    }
  }
  write_raw(path, h, w, PNG_FORMAT_RGB, buffer);
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto buffer = read_raw(path, PNG_FORMAT_RGB, h, w);
  RgbImage image;
  for (auto& ch : image.channels) ch.resize(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int k = 0; k < 3; ++k) {
        image.channels[k](r, c) = buffer[(static_cast<std::size_t>(r) * w + c) * 3 + k] / 255.0;
      }
    }
  }
  return image;
}

void write_label_png(const std::filesystem::path& path, const LabelMap& labels, int scale) {
  const int h = static_cast<int>(labels.rows()), w = static_cast<int>(labels.cols());
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int v = labels(r, c) * scale;
      if (v < 0 || v > 255) throw std::out_of_range("label does not fit in 8 bits");
      buffer[static_cast<std::size_t>(r) * w + c] = static_cast<std::uint8_t>(v);
    }
  }
  write_raw(path, h, w, PNG_FORMAT_GRAY, buffer);
}

LabelMap read_label_png(const std::filesystem::path& path, int scale) {
  int h = 0, w = 0;
  const auto buffer = read_raw(path, PNG_FORMAT_GRAY, h, w);
  LabelMap labels(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) labels(r, c) = buffer[static_cast<std::size_t>(r) * w + c] / scale;
  }
  return labels;
}

RgbImage quantize_8bit(const RgbImage& image) {
  RgbImage out = image;
  for (auto& ch : out.channels) ch = ch.unaryExpr([](double v) { return to_byte(v) / 255.0; });
  return out;
}

}  // namespace deco
