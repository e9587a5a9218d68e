#pragma once

#include <optional>
#include <string>

#include "cbmt/tensor.hpp"

namespace cbmt {

// One image with optional ground-truth mask. pixels is 1x3xHxW in [0,1];
// mask, when present, is 1xCxHxW with entries exactly 0 or 1
// (channel 0 = optic disc as the union region, channel 1 = optic cup).
struct ImageSample {
  std::string id;
  Tensor pixels;
  std::optional<Tensor> mask;
  std::string domain_tag;
};

// Throws std::invalid_argument when an ImageSample invariant fails.
void validate_sample(const ImageSample& s);

// Binary NetPBM rasters. Images are P6 (RGB), masks P5 (grayscale), both
// 8-bit. Values scale to [0,1] floats on read.
Tensor read_ppm(const std::string& path);           // 1x3xHxW
void write_ppm(const std::string& path, const Tensor& rgb);
Tensor read_pgm_raw(const std::string& path);       // 1x1xHxW, [0,1] floats
void write_pgm_raw(const std::string& path, const Tensor& gray);

// Mask <-> 3-level grayscale encoding: 0 background, 128 disc-only, 255 cup.
// Decode rule: disc = value >= 128, cup = value == 255.
Tensor decode_mask_levels(const Tensor& gray, int num_classes);
Tensor encode_mask_levels(const Tensor& mask);

Tensor read_mask_pgm(const std::string& path, int num_classes);
void write_mask_pgm(const std::string& path, const Tensor& mask);

// Bilinear resize for images, nearest-neighbor for masks (keeps them binary).
Tensor resize_bilinear(const Tensor& img, int out_h, int out_w);
Tensor resize_nearest(const Tensor& img, int out_h, int out_w);

// Center-crop if larger than (roi_h, roi_w), center-pad with `pad_value` if
// smaller; mixed cases crop one axis and pad the other.
Tensor center_fit(const Tensor& img, int roi_h, int roi_w, float pad_value);

}  // namespace cbmt
