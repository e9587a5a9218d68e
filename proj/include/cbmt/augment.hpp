#pragma once

#include <cstdint>

#include "cbmt/config.hpp"
#include "cbmt/image.hpp"
#include "cbmt/rng.hpp"

namespace cbmt {

// Exact geometric choices made by weak_augment, enough to replay them.
struct GeoRecord {
  bool hflip = false;
  bool vflip = false;
  double scale = 1.0;
  int scaled_h = 0, scaled_w = 0;

  bool operator==(const GeoRecord&) const = default;
};

struct WeakAugmentResult {
  ImageSample view;
  GeoRecord geo;
};

// Random horizontal/vertical flip (p = flip_prob each) and random resize by
// a scale in [scale_min, scale_max], re-cropped/padded back to the input
// size. Masks follow the same geometry with nearest-neighbor resampling.
WeakAugmentResult weak_augment(const ImageSample& sample, const AugmentConfig& params, Rng& rng);

// Photometric/erasure ops on top of an already geometrically transformed
// view, each applied with independent probability op_prob:
//   erase:    rectangle covering [erase_min_frac, erase_max_frac] of the
//             area, filled with `fill_value` (dataset mean intensity)
//   contrast: scaling by a factor in [contrast_min, contrast_max] about the
//             per-channel mean, clipped to [0,1]
//   noise:    salt-and-pepper impulses on [noise_min_frac, noise_max_frac]
//             of pixel locations
// Never changes geometry; the mask (if any) is carried over untouched.
ImageSample strong_augment(const ImageSample& weak_view, const AugmentConfig& params,
                           float fill_value, Rng& rng);

// Spatially aligned weak/strong pair built from one derived seed.
struct AugmentedPair {
  ImageSample weak_view;
  ImageSample strong_view;
  GeoRecord geo;
  uint64_t rng_seed = 0;
};

AugmentedPair make_augmented_pair(const ImageSample& sample, const AugmentConfig& params,
                                  float fill_value, uint64_t seed);

}  // namespace cbmt
