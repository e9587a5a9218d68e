#pragma once

#include <string>

#include "cbmt/config.hpp"
#include "cbmt/tensor.hpp"

namespace cbmt {

enum class Producer { teacher, student, source };

// Per-pixel, per-class sigmoid probabilities in [0,1].
struct ProbMap {
  Tensor values;  // NxCxHxW
  Producer producer = Producer::source;
};

ProbMap make_prob_map(const Tensor& logits, Producer producer);

// Hard labels thresholded from a ProbMap: label = 1 iff p > gamma (strict).
struct PseudoLabelMap {
  Tensor labels;  // NxCxHxW, entries in {0,1}
  double gamma_used = 0.0;
  std::string producer_id;
};

PseudoLabelMap make_pseudo_labels(const ProbMap& probs, double gamma,
                                  const std::string& producer_id = "");

// Pixels kept for loss statistics. alpha = 0 keeps every pixel (the
// all-pixels column of the threshold sweep); otherwise the predicate is
// strict ">" in both modes.
struct PixelFilterMask {
  Tensor keep;  // NxCxHxW, entries in {0,1}
  FilterMode mode = FilterMode::distance_from_label;
  double alpha_used = 0.0;
};

PixelFilterMask informative_pixel_mask(const ProbMap& probs, const PseudoLabelMap& labels,
                                       double gamma, double alpha, FilterMode mode);

}  // namespace cbmt
