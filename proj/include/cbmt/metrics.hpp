#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbmt/tensor.hpp"

namespace cbmt {

// Flat binary mask, row-major.
struct Mask2D {
  int h = 0, w = 0;
  std::vector<uint8_t> v;

  Mask2D() = default;
  Mask2D(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}
  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  bool empty_mask() const;
};

// Class slice of an NxCxHxW tensor thresholded at `thresh`.
Mask2D mask_from_tensor(const Tensor& t, int n, int c, float thresh = 0.5f);

// Dice overlap 2|P∩T|/(|P|+|T|); 1.0 when both masks are empty, 0.0 when
// exactly one is.
double dice(const Mask2D& pred, const Mask2D& truth);

// Surface pixels: mask pixels with a 4-neighbor outside the mask or on the
// image border.
std::vector<std::pair<int, int>> surface_points(const Mask2D& m);

// Average symmetric surface distance in pixels (Euclidean, pixel centers).
// NaN when either mask is empty; callers exclude such images from aggregates.
double assd(const Mask2D& pred, const Mask2D& truth);

// Squared Euclidean distance transform to the nearest set pixel (exact,
// integer arithmetic). INT64_MAX where the mask has no set pixel at all.
std::vector<int64_t> squared_edt(const Mask2D& features);

struct ClassAggregate {
  double dice_mean = 0.0, dice_std = 0.0;
  double assd_mean = 0.0, assd_std = 0.0;
  int n_images = 0;       // images contributing to dice
  int n_assd_images = 0;  // images contributing to assd (both surfaces nonempty)
};

struct EvalResult {
  std::vector<std::string> image_ids;
  // [image][class]
  std::vector<std::vector<double>> dice_values;
  std::vector<std::vector<double>> assd_values;  // NaN where undefined
  std::vector<ClassAggregate> per_class;
  std::vector<std::string> warnings;
};

// Aggregates per-image metrics; NaN ASSD entries are excluded with a warning.
EvalResult aggregate_eval(const std::vector<std::string>& ids,
                          const std::vector<std::vector<double>>& dice_values,
                          const std::vector<std::vector<double>>& assd_values);

void write_eval_csv(const std::string& path, const EvalResult& r);
void write_eval_json(const std::string& path, const EvalResult& r,
                     const std::vector<std::string>& class_names);

}  // namespace cbmt
