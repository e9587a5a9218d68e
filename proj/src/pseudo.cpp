#include "cbmt/pseudo.hpp"

#include <cmath>
#include <stdexcept>

namespace cbmt {

ProbMap make_prob_map(const Tensor& logits, Producer producer) {
  return ProbMap{sigmoid(logits), producer};
}

PseudoLabelMap make_pseudo_labels(const ProbMap& probs, double gamma,
                                  const std::string& producer_id) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("make_pseudo_labels: gamma out of (0,1)");
  PseudoLabelMap out;
  out.labels = Tensor::zeros_like(probs.values);
  out.gamma_used = gamma;
  out.producer_id = producer_id;
  const float g = static_cast<float>(gamma);
  for (size_t i = 0; i < probs.values.data.size(); ++i)
    out.labels.data[i] = probs.values.data[i] > g ? 1.f : 0.f;
  return out;
}

PixelFilterMask informative_pixel_mask(const ProbMap& probs, const PseudoLabelMap& labels,
                                       double gamma, double alpha, FilterMode mode) {
  if (alpha >= 1.0) throw std::invalid_argument("informative_pixel_mask: alpha must be < 1");
  if (alpha < 0.0) throw std::invalid_argument("informative_pixel_mask: alpha must be >= 0");
  require_same_shape(probs.values, labels.labels, "informative_pixel_mask");

  PixelFilterMask out;
  out.keep = Tensor::zeros_like(probs.values);
  out.mode = mode;
  out.alpha_used = alpha;

  if (alpha == 0.0) {
    // all-pixels mode; the strict predicate would drop exact-zero distances
    std::fill(out.keep.data.begin(), out.keep.data.end(), 1.f);
    return out;
  }

  const size_t total = probs.values.data.size();
  for (size_t i = 0; i < total; ++i) {
    const double p = probs.values.data[i];
    const double y = labels.labels.data[i];
    double ratio;
    if (mode == FilterMode::distance_from_label) {
      // normalized distance of the prediction from its pseudo label;
      // small = well-segmented, excluded from the statistics
      ratio = std::abs(p - y) / std::abs(gamma - y);
    } else {
      ratio = std::abs(p - gamma) / std::abs(y - gamma);
    }
    out.keep.data[i] = ratio > alpha ? 1.f : 0.f;
  }
  return out;
}

}  // namespace cbmt
