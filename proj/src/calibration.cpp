#include "cbmt/calibration.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cbmt {

namespace {
inline double clamp_prob(double p) {
  if (p < kProbClampEps) return kProbClampEps;
  if (p > 1.0 - kProbClampEps) return 1.0 - kProbClampEps;
  return p;
}
}  // namespace

BceResult bce_loss(const ProbMap& probs, const PseudoLabelMap& labels) {
  require_same_shape(probs.values, labels.labels, "bce_loss");
  BceResult out;
  out.per_pixel = Tensor::zeros_like(probs.values);
  double sum = 0.0;
  const size_t total = probs.values.data.size();
  for (size_t i = 0; i < total; ++i) {
    const double p = clamp_prob(probs.values.data[i]);
    const double y = labels.labels.data[i];
    const double l = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    out.per_pixel.data[i] = static_cast<float>(l);
    sum += l;
  }
  out.mean = total ? sum / static_cast<double>(total) : 0.0;
  return out;
}

CalibrationStats accumulate_stats(CalibrationStats stats, const Tensor& losses,
                                  const PseudoLabelMap& labels, const PixelFilterMask& keep) {
  require_same_shape(losses, labels.labels, "accumulate_stats");
  require_same_shape(losses, keep.keep, "accumulate_stats");
  if (static_cast<int>(stats.per_class.size()) < losses.c)
    stats.per_class.resize(losses.c);

  const int plane = losses.h * losses.w;
  for (int n = 0; n < losses.n; ++n)
    for (int c = 0; c < losses.c; ++c) {
      ClassStats& cs = stats.per_class[c];
      const float* l = losses.plane(n, c);
      const float* y = labels.labels.plane(n, c);
      const float* k = keep.keep.plane(n, c);
      for (int i = 0; i < plane; ++i) {
        if (k[i] == 0.f) continue;
        if (y[i] == 1.f) {
          cs.sum_fg_loss += l[i];
          ++cs.count_fg;
        } else {
          cs.sum_bg_loss += l[i];
          ++cs.count_bg;
        }
      }
    }
  return stats;
}

CalibrationStats merge_stats(CalibrationStats a, const CalibrationStats& b) {
  if (a.per_class.size() < b.per_class.size()) a.per_class.resize(b.per_class.size());
  for (size_t c = 0; c < b.per_class.size(); ++c) {
    a.per_class[c].sum_fg_loss += b.per_class[c].sum_fg_loss;
    a.per_class[c].count_fg += b.per_class[c].count_fg;
    a.per_class[c].sum_bg_loss += b.per_class[c].sum_bg_loss;
    a.per_class[c].count_bg += b.per_class[c].count_bg;
  }
  return a;
}

CalibrationStats finalize_epoch(CalibrationStats stats, const WarnFn& warn) {
  for (size_t c = 0; c < stats.per_class.size(); ++c) {
    ClassStats& cs = stats.per_class[c];
    cs.last_count_fg = cs.count_fg;
    cs.last_count_bg = cs.count_bg;
    if (cs.count_fg > 0 && cs.count_bg > 0) {
      cs.eta_fg = cs.sum_fg_loss / static_cast<double>(cs.count_fg);
      cs.eta_bg = cs.sum_bg_loss / static_cast<double>(cs.count_bg);
      cs.bg_weight = cs.eta_fg / cs.eta_bg;
      if (!std::isfinite(cs.bg_weight) || cs.bg_weight <= 0.0) {
        if (warn)
          warn("calibration: class " + std::to_string(c) +
               " produced a degenerate bg_weight; carrying previous value");
        cs.bg_weight = cs.has_weight ? cs.bg_weight : 1.0;
      }
    } else {
      if (warn)
        warn("calibration: class " + std::to_string(c) + " had zero kept " +
             (cs.count_fg == 0 ? "foreground" : "background") +
             " pixels this epoch; carrying bg_weight=" + std::to_string(cs.bg_weight));
    }
    cs.has_weight = true;
    cs.sum_fg_loss = 0.0;
    cs.sum_bg_loss = 0.0;
    cs.count_fg = 0;
    cs.count_bg = 0;
  }
  ++stats.epoch;
  return stats;
}

std::vector<double> background_weights(const CalibrationStats& stats,
                                       const std::set<int>& calibrated_classes) {
  size_t num_classes = stats.per_class.size();
  for (int k : calibrated_classes)
    num_classes = std::max(num_classes, static_cast<size_t>(k) + 1);
  std::vector<double> w(num_classes, 1.0);
  for (int k : calibrated_classes) {
    if (static_cast<size_t>(k) >= stats.per_class.size() ||
        (stats.epoch >= 1 && !stats.per_class[k].has_weight)) {
      if (stats.epoch >= 1)
        throw std::invalid_argument("calibrated_bce: no finalized statistics for class " +
                                    std::to_string(k));
      continue;  // warm start: weight 1 before the first finalize
    }
    if (stats.per_class[k].has_weight) w[k] = stats.per_class[k].bg_weight;
  }
  return w;
}

double calibrated_bce(const ProbMap& probs, const PseudoLabelMap& labels,
                      const CalibrationStats& stats, const std::set<int>& calibrated_classes) {
  require_same_shape(probs.values, labels.labels, "calibrated_bce");
  const std::vector<double> w = background_weights(stats, calibrated_classes);

  double sum = 0.0;
  const int plane = probs.values.h * probs.values.w;
  for (int n = 0; n < probs.values.n; ++n)
    for (int c = 0; c < probs.values.c; ++c) {
      const double wc = c < static_cast<int>(w.size()) ? w[c] : 1.0;
      const float* p = probs.values.plane(n, c);
      const float* y = labels.labels.plane(n, c);
      for (int i = 0; i < plane; ++i) {
        const double pc = clamp_prob(p[i]);
        sum += -(y[i] * std::log(pc) + wc * (1.0 - y[i]) * std::log(1.0 - pc));
      }
    }
  const size_t total = probs.values.data.size();
  return total ? sum / static_cast<double>(total) : 0.0;
}

Tensor calibrated_bce_grad(const ProbMap& probs, const PseudoLabelMap& labels,
                           const CalibrationStats& stats, const std::set<int>& calibrated_classes) {
  require_same_shape(probs.values, labels.labels, "calibrated_bce_grad");
  const std::vector<double> w = background_weights(stats, calibrated_classes);
  Tensor grad = Tensor::zeros_like(probs.values);
  const double total = static_cast<double>(probs.values.data.size());
  const int plane = probs.values.h * probs.values.w;
  for (int n = 0; n < probs.values.n; ++n)
    for (int c = 0; c < probs.values.c; ++c) {
      const double wc = c < static_cast<int>(w.size()) ? w[c] : 1.0;
      const float* p = probs.values.plane(n, c);
      const float* y = labels.labels.plane(n, c);
      float* g = grad.plane(n, c);
      for (int i = 0; i < plane; ++i) {
        const double pi = p[i];
        if (pi < kProbClampEps || pi > 1.0 - kProbClampEps) {
          g[i] = 0.f;  // loss is flat where the clamp is active
          continue;
        }
        g[i] = static_cast<float>((-y[i] / pi + wc * (1.0 - y[i]) / (1.0 - pi)) / total);
      }
    }
  return grad;
}

Tensor calibrated_bce_grad_logits(const ProbMap& probs, const PseudoLabelMap& labels,
                                  const CalibrationStats& stats,
                                  const std::set<int>& calibrated_classes) {
  require_same_shape(probs.values, labels.labels, "calibrated_bce_grad_logits");
  const std::vector<double> w = background_weights(stats, calibrated_classes);
  Tensor grad = Tensor::zeros_like(probs.values);
  const double total = static_cast<double>(probs.values.data.size());
  const int plane = probs.values.h * probs.values.w;
  for (int n = 0; n < probs.values.n; ++n)
    for (int c = 0; c < probs.values.c; ++c) {
      const double wc = c < static_cast<int>(w.size()) ? w[c] : 1.0;
      const float* p = probs.values.plane(n, c);
      const float* y = labels.labels.plane(n, c);
      float* g = grad.plane(n, c);
      for (int i = 0; i < plane; ++i) {
        // d/dz of -[y log s(z) + w (1-y) log(1-s(z))] = -y(1-p) + w(1-y)p
        const double gi = y[i] == 1.f ? (p[i] - 1.0) : wc * p[i];
        g[i] = static_cast<float>(gi / total);
      }
    }
  return grad;
}

}  // namespace cbmt
