#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "livestyle/errors.hpp"
#include "livestyle/tensor.hpp"

namespace livestyle::image {

// 8-bit interleaved RGB, row-major.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;
};

enum class Range { unit, backbone };

inline const char* to_string(Range r) { return r == Range::unit ? "UNIT" : "BACKBONE"; }

// Float image, row-major HxWx3 interleaved, tagged with its value range.
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<float> data;
  Range range = Range::unit;

  ImageTensor() = default;
  ImageTensor(std::size_t h, std::size_t w, Range r = Range::unit, float fill = 0.0f)
      : height(h), width(w), data(h * w * 3, fill), range(r) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }

  // Checks the length, range and finiteness invariants.
  void validate() const {
    if (channels != 3 || data.size() != height * width * channels)
      throw ShapeMismatch("image tensor data length does not match " + std::to_string(height) + "x" +
                          std::to_string(width) + "x3");
    for (float v : data) {
      if (!std::isfinite(v)) throw RangeMismatch("image tensor contains a non-finite value");
      if (range == Range::unit && (v < 0.0f || v > 1.0f))
        throw RangeMismatch("UNIT image tensor has element outside [0,1]");
    }
  }
};

enum class ResizeMode { bilinear };

struct PreprocessSpec {
  std::size_t target_size = 224;
  std::array<float, 3> channel_means{0.485f, 0.456f, 0.406f};
  std::array<float, 3> channel_stds{0.229f, 0.224f, 0.225f};
  ResizeMode resize_mode = ResizeMode::bilinear;

  void validate() const {
    if (target_size < 32) throw InvalidSize("target_size must be >= 32");
    for (float s : channel_stds)
      if (!(s > 0.0f)) throw InvalidParams("channel_stds must be > 0");
  }

  // Bounds of a UNIT pixel after normalization, per channel.
  float normalized_min(std::size_t c) const { return (0.0f - channel_means[c]) / channel_stds[c]; }
  float normalized_max(std::size_t c) const { return (1.0f - channel_means[c]) / channel_stds[c]; }
};

inline ImageTensor to_unit_tensor(const RawImage& img) {
  if (img.channels != 3 || img.pixels.size() != img.width * img.height * 3)
    throw ShapeMismatch("raw image pixel count does not match its dimensions");
  ImageTensor t(img.height, img.width, Range::unit);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t.data[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  return t;
}

// Bilinear resize to side x side with half-pixel centres and edge clamping.
inline ImageTensor resize(const ImageTensor& t, std::size_t side) {
  if (side < 1) throw InvalidSize("resize side must be >= 1");
  if (t.height == 0 || t.width == 0) throw InvalidSize("cannot resize an empty image");
  ImageTensor out(side, side, t.range);
  if (t.height == side && t.width == side) {
    out.data = t.data;
    return out;
  }
  const double sy = static_cast<double>(t.height) / side;
  const double sx = static_cast<double>(t.width) / side;
  auto coord = [](std::size_t d, double s, std::size_t n, std::size_t& i0, std::size_t& i1, double& f) {
    double src = (static_cast<double>(d) + 0.5) * s - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, n - 1);
    f = src - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < side; ++y) {
    std::size_t y0, y1;
    double fy;
    coord(y, sy, t.height, y0, y1, fy);
    for (std::size_t x = 0; x < side; ++x) {
      std::size_t x0, x1;
      double fx;
      coord(x, sx, t.width, x0, x1, fx);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = t.at(y0, x0, c) * (1.0 - fx) + t.at(y0, x1, c) * fx;
        const double bot = t.at(y1, x0, c) * (1.0 - fx) + t.at(y1, x1, c) * fx;
        out.at(y, x, c) = static_cast<float>(top * (1.0 - fy) + bot * fy);
      }
    }
  }
  return out;
}

inline ImageTensor normalize(const ImageTensor& t, const PreprocessSpec& spec) {
  if (t.range != Range::unit) throw RangeMismatch("normalize expects a UNIT tensor");
  ImageTensor out = t;
  out.range = Range::backbone;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const std::size_t c = i % 3;
    out.data[i] = (t.data[i] - spec.channel_means[c]) / spec.channel_stds[c];
  }
  return out;
}

inline ImageTensor denormalize(const ImageTensor& t, const PreprocessSpec& spec) {
  if (t.range != Range::backbone) throw RangeMismatch("denormalize expects a BACKBONE tensor");
  ImageTensor out = t;
  out.range = Range::unit;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const std::size_t c = i % 3;
    out.data[i] = std::clamp(t.data[i] * spec.channel_stds[c] + spec.channel_means[c], 0.0f, 1.0f);
  }
  return out;
}

// HWC image -> [3,H,W] tensor.
template <typename T>
Tensor<T> to_chw(const ImageTensor& img) {
  Tensor<T> out({3, img.height, img.width});
  const std::size_t hw = img.height * img.width;
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) out[c * hw + p] = static_cast<T>(img.data[p * 3 + c]);
  return out;
}

// [3,H,W] tensor -> HWC image; values are copied as-is.
template <typename T>
ImageTensor from_chw(const Tensor<T>& t, Range range) {
  if (t.rank() != 3 || t.dim(0) != 3) throw ShapeMismatch("from_chw expects [3,H,W], got " + shape_str(t.shape));
  ImageTensor out(t.dim(1), t.dim(2), range);
  const std::size_t hw = out.height * out.width;
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) out.data[p * 3 + c] = static_cast<float>(t[c * hw + p]);
  return out;
}

enum class Format { png, jpeg };

// Codecs (compiled in livestyle_io).
RawImage decode_image(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_image(const ImageTensor& t, Format format);
RawImage quantize(const ImageTensor& t);

}  // namespace livestyle::image
