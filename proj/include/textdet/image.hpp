#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textdet/geometry.hpp"
#include "textdet/tensor.hpp"

namespace textdet {

/// 8-bit interleaved raster, 1 (gray) or 3 (RGB) channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c) {
    pixels.assign(static_cast<size_t>(w) * h * c, 0);
  }

  uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

/// PPM/PGM (P5/P6) and PNG, selected by extension (.png) or content.
Image read_image(const std::string& path);
void write_image(const Image& img, const std::string& path);

/// Area-average resampling (exact box filter per axis; reduces aliasing on
/// the strong downscales the multi-scale sweep uses).
Image resize(const Image& img, int new_w, int new_h);

Image rotate_image(const Image& img, Rotation rot);

/// Crop with zero padding outside the source bounds.
Image crop_pad(const Image& img, int x0, int y0, int w, int h);

/// [3,H,W] float tensor, values (v/255 - 0.5); gray images replicate channels.
Tensor image_to_tensor(const Image& img);

}  // namespace textdet
