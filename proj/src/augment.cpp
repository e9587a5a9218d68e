#include "cbmt/augment.hpp"

#include <algorithm>
#include <cmath>

namespace cbmt {

namespace {

Tensor flip_tensor(const Tensor& t, bool hflip, bool vflip) {
  if (!hflip && !vflip) return t;
  Tensor out = Tensor::zeros_like(t);
  for (int n = 0; n < t.n; ++n)
    for (int c = 0; c < t.c; ++c)
      for (int y = 0; y < t.h; ++y) {
        int sy = vflip ? t.h - 1 - y : y;
        for (int x = 0; x < t.w; ++x) {
          int sx = hflip ? t.w - 1 - x : x;
          out.at(n, c, y, x) = t.at(n, c, sy, sx);
        }
      }
  return out;
}

}  // namespace

WeakAugmentResult weak_augment(const ImageSample& sample, const AugmentConfig& params, Rng& rng) {
  validate_sample(sample);
  WeakAugmentResult res;
  res.geo.hflip = rng.bernoulli(params.flip_prob);
  res.geo.vflip = rng.bernoulli(params.flip_prob);
  res.geo.scale = rng.uniform(params.scale_min, params.scale_max);

  const int roi_h = sample.pixels.h, roi_w = sample.pixels.w;
  int sh = std::max(1, static_cast<int>(std::lround(roi_h * res.geo.scale)));
  int sw = std::max(1, static_cast<int>(std::lround(roi_w * res.geo.scale)));
  res.geo.scaled_h = sh;
  res.geo.scaled_w = sw;

  res.view.id = sample.id;
  res.view.domain_tag = sample.domain_tag;

  Tensor img = flip_tensor(sample.pixels, res.geo.hflip, res.geo.vflip);
  if (sh != roi_h || sw != roi_w)
    img = center_fit(resize_bilinear(img, sh, sw), roi_h, roi_w, 0.f);
  // bilinear interpolation can overshoot by rounding; keep the [0,1] contract
  for (float& v : img.data) v = std::clamp(v, 0.f, 1.f);
  res.view.pixels = std::move(img);

  if (sample.mask) {
    Tensor m = flip_tensor(*sample.mask, res.geo.hflip, res.geo.vflip);
    if (sh != roi_h || sw != roi_w)
      m = center_fit(resize_nearest(m, sh, sw), roi_h, roi_w, 0.f);
    res.view.mask = std::move(m);
  }
  return res;
}

ImageSample strong_augment(const ImageSample& weak_view, const AugmentConfig& params,
                           float fill_value, Rng& rng) {
  ImageSample out = weak_view;
  Tensor& img = out.pixels;
  const int h = img.h, w = img.w;

  if (params.erase && rng.bernoulli(params.op_prob)) {
    double frac = rng.uniform(params.erase_min_frac, params.erase_max_frac);
    double aspect = rng.uniform(0.5, 2.0);
    double area = frac * h * w;
    int eh = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, h);
    int ew = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1, w);
    int y0 = static_cast<int>(rng.uniform_int(0, h - eh));
    int x0 = static_cast<int>(rng.uniform_int(0, w - ew));
    for (int c = 0; c < img.c; ++c)
      for (int y = y0; y < y0 + eh; ++y)
        for (int x = x0; x < x0 + ew; ++x) img.at(0, c, y, x) = fill_value;
  }

  if (params.contrast && rng.bernoulli(params.op_prob)) {
    double factor = rng.uniform(params.contrast_min, params.contrast_max);
    for (int c = 0; c < img.c; ++c) {
      double mean = 0.0;
      const float* p = img.plane(0, c);
      for (int i = 0; i < h * w; ++i) mean += p[i];
      mean /= h * w;
      float* q = img.plane(0, c);
      for (int i = 0; i < h * w; ++i)
        q[i] = std::clamp(static_cast<float>(mean + (q[i] - mean) * factor), 0.f, 1.f);
    }
  }

  if (params.noise && rng.bernoulli(params.op_prob)) {
    double frac = rng.uniform(params.noise_min_frac, params.noise_max_frac);
    int count = static_cast<int>(std::lround(frac * h * w));
    for (int i = 0; i < count; ++i) {
      int y = static_cast<int>(rng.uniform_int(0, h - 1));
      int x = static_cast<int>(rng.uniform_int(0, w - 1));
      float v = rng.bernoulli(0.5) ? 1.f : 0.f;
      for (int c = 0; c < img.c; ++c) img.at(0, c, y, x) = v;
    }
  }
  return out;
}

AugmentedPair make_augmented_pair(const ImageSample& sample, const AugmentConfig& params,
                                  float fill_value, uint64_t seed) {
  Rng rng(seed);
  AugmentedPair pair;
  pair.rng_seed = seed;
  WeakAugmentResult weak = weak_augment(sample, params, rng);
  pair.geo = weak.geo;
  pair.strong_view = strong_augment(weak.view, params, fill_value, rng);
  pair.weak_view = std::move(weak.view);
  return pair;
}

}  // namespace cbmt
