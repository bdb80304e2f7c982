#pragma once

#include <cstdint>
#include <string>

#include "slotlab/tensor.hpp"

namespace slotlab {

// RGB image: [H,W,3] floats in [0,1], channels-last.
using Image = Tensor<float>;

// Segment label map: [H,W] raw label values (0=background, 1=pusher,
// 2..=objects).
using LabelMap = Tensor<uint8_t>;

// 8-bit RGB PNG round trip. Values are clamped to [0,1] and quantized on
// write.
void write_png_rgb(const std::string& path, const Image& img);
Image read_png_rgb(const std::string& path);

// 8-bit single-channel PNG holding raw label values.
void write_png_gray(const std::string& path, const LabelMap& labels);
LabelMap read_png_gray(const std::string& path);

inline uint8_t to_u8(float v) {
  float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return static_cast<uint8_t>(c * 255.f + 0.5f);
}

}  // namespace slotlab
