#include "cbmt/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace cbmt {

bool Mask2D::empty_mask() const {
  for (uint8_t b : v)
    if (b) return false;
  return true;
}

Mask2D mask_from_tensor(const Tensor& t, int n, int c, float thresh) {
  Mask2D m(t.h, t.w);
  const float* p = t.plane(n, c);
  for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = p[i] > thresh ? 1 : 0;
  return m;
}

double dice(const Mask2D& pred, const Mask2D& truth) {
  if (pred.h != truth.h || pred.w != truth.w)
    throw std::invalid_argument("dice: mask shapes differ");
  long long np = 0, nt = 0, ni = 0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    np += pred.v[i] != 0;
    nt += truth.v[i] != 0;
    ni += (pred.v[i] != 0) && (truth.v[i] != 0);
  }
  if (np + nt == 0) return 1.0;  // both empty: perfect agreement
  return 2.0 * static_cast<double>(ni) / static_cast<double>(np + nt);
}

std::vector<std::pair<int, int>> surface_points(const Mask2D& m) {
  std::vector<std::pair<int, int>> pts;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      bool border = y == 0 || y == m.h - 1 || x == 0 || x == m.w - 1;
      bool exposed = border || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) ||
                     !m.at(y, x + 1);
      if (exposed) pts.emplace_back(y, x);
    }
  return pts;
}

// Meijster squared EDT; exact in integer arithmetic.
std::vector<int64_t> squared_edt(const Mask2D& features) {
  const int h = features.h, w = features.w;
  const int64_t inf = h + w;  // larger than any in-grid 1D distance
  std::vector<int64_t> g(static_cast<size_t>(h) * w, inf);

  bool any = false;
  for (int x = 0; x < w; ++x) {
    // column scan, down then up
    if (features.at(0, x)) g[x] = 0;
    for (int y = 1; y < h; ++y) {
      size_t i = static_cast<size_t>(y) * w + x;
      g[i] = features.at(y, x) ? 0 : std::min<int64_t>(inf, g[i - w] + 1);
    }
    for (int y = h - 2; y >= 0; --y) {
      size_t i = static_cast<size_t>(y) * w + x;
      g[i] = std::min(g[i], g[i + w] + 1);
    }
    for (int y = 0; y < h; ++y) any = any || features.at(y, x);
  }
  std::vector<int64_t> dt(static_cast<size_t>(h) * w, std::numeric_limits<int64_t>::max());
  if (!any) return dt;

  std::vector<int> s(w), t(w);
  for (int y = 0; y < h; ++y) {
    const int64_t* gy = g.data() + static_cast<size_t>(y) * w;
    auto f = [&](int64_t x, int64_t i) { return (x - i) * (x - i) + gy[i] * gy[i]; };
    auto sep = [&](int64_t i, int64_t u) {
      return (u * u - i * i + gy[u] * gy[u] - gy[i] * gy[i]) / (2 * (u - i));
    };
    int q = 0;
    s[0] = 0;
    t[0] = 0;
    for (int u = 1; u < w; ++u) {
      while (q >= 0 && f(t[q], s[q]) > f(t[q], u)) --q;
      if (q < 0) {
        q = 0;
        s[0] = u;
      } else {
        int64_t wpos = 1 + sep(s[q], u);
        if (wpos < w) {
          ++q;
          s[q] = u;
          t[q] = static_cast<int>(wpos);
        }
      }
    }
    for (int u = w - 1; u >= 0; --u) {
      dt[static_cast<size_t>(y) * w + u] = f(u, s[q]);
      if (u == t[q]) --q;
    }
  }
  return dt;
}

double assd(const Mask2D& pred, const Mask2D& truth) {
  if (pred.h != truth.h || pred.w != truth.w)
    throw std::invalid_argument("assd: mask shapes differ");
  if (pred.empty_mask() || truth.empty_mask())
    return std::numeric_limits<double>::quiet_NaN();

  auto sp = surface_points(pred);
  auto st = surface_points(truth);

  Mask2D pred_surf(pred.h, pred.w), truth_surf(truth.h, truth.w);
  for (auto [y, x] : sp) pred_surf.at(y, x) = 1;
  for (auto [y, x] : st) truth_surf.at(y, x) = 1;
  auto dt_to_truth = squared_edt(truth_surf);
  auto dt_to_pred = squared_edt(pred_surf);

  double sum = 0.0;
  for (auto [y, x] : sp)
    sum += std::sqrt(static_cast<double>(dt_to_truth[static_cast<size_t>(y) * pred.w + x]));
  for (auto [y, x] : st)
    sum += std::sqrt(static_cast<double>(dt_to_pred[static_cast<size_t>(y) * pred.w + x]));
  return sum / static_cast<double>(sp.size() + st.size());
}

EvalResult aggregate_eval(const std::vector<std::string>& ids,
                          const std::vector<std::vector<double>>& dice_values,
                          const std::vector<std::vector<double>>& assd_values) {
  EvalResult r;
  r.image_ids = ids;
  r.dice_values = dice_values;
  r.assd_values = assd_values;
  if (ids.empty()) return r;

  const size_t num_classes = dice_values[0].size();
  r.per_class.resize(num_classes);
  for (size_t c = 0; c < num_classes; ++c) {
    ClassAggregate& agg = r.per_class[c];
    double dsum = 0, asum = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      dsum += dice_values[i][c];
      ++agg.n_images;
      if (std::isnan(assd_values[i][c])) {
        r.warnings.push_back("image '" + ids[i] + "' class " + std::to_string(c) +
                             ": ASSD undefined (empty mask), excluded from aggregates");
      } else {
        asum += assd_values[i][c];
        ++agg.n_assd_images;
      }
    }
    agg.dice_mean = dsum / agg.n_images;
    agg.assd_mean = agg.n_assd_images ? asum / agg.n_assd_images : 0.0;
    double dvar = 0, avar = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      double dd = dice_values[i][c] - agg.dice_mean;
      dvar += dd * dd;
      if (!std::isnan(assd_values[i][c])) {
        double da = assd_values[i][c] - agg.assd_mean;
        avar += da * da;
      }
    }
    agg.dice_std = std::sqrt(dvar / agg.n_images);
    agg.assd_std = agg.n_assd_images ? std::sqrt(avar / agg.n_assd_images) : 0.0;
  }
  return r;
}

void write_eval_csv(const std::string& path, const EvalResult& r) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write: " + path);
  size_t num_classes = r.per_class.size();
  f << "id";
  for (size_t c = 0; c < num_classes; ++c) f << ",dice_" << c << ",assd_" << c;
  f << "\n";
  f.precision(10);
  for (size_t i = 0; i < r.image_ids.size(); ++i) {
    f << r.image_ids[i];
    for (size_t c = 0; c < num_classes; ++c) {
      f << "," << r.dice_values[i][c] << ",";
      if (std::isnan(r.assd_values[i][c]))
        f << "nan";
      else
        f << r.assd_values[i][c];
    }
    f << "\n";
  }
}

void write_eval_json(const std::string& path, const EvalResult& r,
                     const std::vector<std::string>& class_names) {
  nlohmann::json j;
  for (size_t c = 0; c < r.per_class.size(); ++c) {
    std::string name = c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
    const ClassAggregate& a = r.per_class[c];
    j[name] = {{"dice_mean", a.dice_mean},
               {"dice_std", a.dice_std},
               {"assd_mean", a.assd_mean},
               {"assd_std", a.assd_std},
               {"n_images", a.n_images},
               {"n_assd_images", a.n_assd_images}};
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace cbmt
