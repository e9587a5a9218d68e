#pragma once

#include <functional>
#include <set>
#include <vector>

#include "cbmt/pseudo.hpp"
#include "cbmt/tensor.hpp"

namespace cbmt {

constexpr double kProbClampEps = 1e-7;  // guards log(0)

// Binary cross entropy against (pseudo) labels. Nonnegative per-pixel values;
// probabilities clamped to [eps, 1-eps] before the logs.
struct BceResult {
  Tensor per_pixel;  // same shape as inputs
  double mean = 0.0;
};

BceResult bce_loss(const ProbMap& probs, const PseudoLabelMap& labels);

// Foreground/background mean-loss accumulators for one class.
struct ClassStats {
  double sum_fg_loss = 0.0;
  long long count_fg = 0;
  double sum_bg_loss = 0.0;
  long long count_bg = 0;

  double eta_fg = 0.0;
  double eta_bg = 0.0;
  double bg_weight = 1.0;
  bool has_weight = false;

  // counts captured by the most recent finalize, for logging
  long long last_count_fg = 0;
  long long last_count_bg = 0;
};

// Global per-class accumulators yielding eta_fg, eta_bg and the background
// weight eta_fg/eta_bg. epoch counts completed finalizations.
struct CalibrationStats {
  std::vector<ClassStats> per_class;
  int epoch = 0;

  explicit CalibrationStats(int num_classes = 0) : per_class(num_classes) {}
};

// Adds kept pixel losses to the fg/bg accumulators, per class. `losses` must
// come from bce_loss on the same batch (unit background weight, so the
// statistic never feeds through itself).
CalibrationStats accumulate_stats(CalibrationStats stats, const Tensor& losses,
                                  const PseudoLabelMap& labels, const PixelFilterMask& keep);

// Merges partial accumulators (associative, for parallel batch folds).
CalibrationStats merge_stats(CalibrationStats a, const CalibrationStats& b);

// Computes eta_fg/eta_bg/bg_weight per class and resets the accumulators.
// Classes with zero kept pixels on either side carry the previous weight; a
// warning is emitted through `warn` when provided.
using WarnFn = std::function<void(const std::string&)>;
CalibrationStats finalize_epoch(CalibrationStats stats, const WarnFn& warn = nullptr);

// Per-class weights applied to the background term; 1 for classes outside
// `calibrated_classes` and for everything during the first (warm-start) epoch.
std::vector<double> background_weights(const CalibrationStats& stats,
                                       const std::set<int>& calibrated_classes);

// Calibrated BCE: -[y log p + w_k (1-y) log(1-p)], mean over all entries.
// Throws when a calibrated class has no finalized weight after epoch 0.
double calibrated_bce(const ProbMap& probs, const PseudoLabelMap& labels,
                      const CalibrationStats& stats, const std::set<int>& calibrated_classes);

// d(mean calibrated BCE)/d(probs); used by the finite-difference check.
Tensor calibrated_bce_grad(const ProbMap& probs, const PseudoLabelMap& labels,
                           const CalibrationStats& stats, const std::set<int>& calibrated_classes);

// d(mean calibrated BCE)/d(logits) for p = sigmoid(logit); the training path.
Tensor calibrated_bce_grad_logits(const ProbMap& probs, const PseudoLabelMap& labels,
                                  const CalibrationStats& stats,
                                  const std::set<int>& calibrated_classes);

}  // namespace cbmt
