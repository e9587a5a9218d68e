#include "cbmt/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace cbmt {

namespace {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // epoch, value
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

void draw_panel(std::ostringstream& svg, double ox, double oy, double pw, double ph,
                const std::string& title, const std::string& ylabel,
                const std::vector<Series>& series) {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool have = false;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (!have) {
        xmin = xmax = x;
        ymin = ymax = y;
        have = true;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = (ymax - ymin) * 0.08;
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return ox + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return oy + ph - (y - ymin) / (ymax - ymin) * ph; };

  svg << "<rect x='" << ox << "' y='" << oy << "' width='" << pw << "' height='" << ph
      << "' fill='white' stroke='#333'/>\n";
  svg << "<text x='" << ox + pw / 2 << "' y='" << oy - 8
      << "' text-anchor='middle' font-size='14'>" << title << "</text>\n";
  svg << "<text x='" << ox - 42 << "' y='" << oy + ph / 2 << "' font-size='11' text-anchor='middle'"
      << " transform='rotate(-90 " << ox - 42 << " " << oy + ph / 2 << ")'>" << ylabel
      << "</text>\n";

  for (int i = 0; i <= 4; ++i) {
    double gy = ymin + (ymax - ymin) * i / 4.0;
    svg << "<line x1='" << ox << "' y1='" << py(gy) << "' x2='" << ox + pw << "' y2='" << py(gy)
        << "' stroke='#ddd'/>\n";
    svg << "<text x='" << ox - 6 << "' y='" << py(gy) + 4
        << "' text-anchor='end' font-size='10'>";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", gy);
    svg << buf << "</text>\n";
    double gx = xmin + (xmax - xmin) * i / 4.0;
    svg << "<text x='" << px(gx) << "' y='" << oy + ph + 14
        << "' text-anchor='middle' font-size='10'>" << static_cast<int>(std::lround(gx))
        << "</text>\n";
  }
  svg << "<text x='" << ox + pw / 2 << "' y='" << oy + ph + 28
      << "' text-anchor='middle' font-size='11'>epoch</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (auto [x, y] : series[si].points) svg << px(x) << "," << py(y) << " ";
    svg << "'/>\n";
    svg << "<text x='" << ox + pw - 6 << "' y='" << oy + 16 + 14 * static_cast<double>(si)
        << "' text-anchor='end' font-size='11' fill='" << color << "'>" << series[si].label
        << "</text>\n";
  }
}

double mean_finite(const std::vector<double>& v) {
  double s = 0;
  int n = 0;
  for (double x : v)
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

std::vector<std::string> plot_curves_svg(const std::string& out_path,
                                         const std::vector<PlotInput>& runs) {
  std::vector<std::string> warnings;
  std::vector<Series> dice_series, fg_series;

  for (const auto& run : runs) {
    Series ds{run.label, {}};
    Series fs{run.label, {}};
    for (const auto& e : run.log.epochs) {
      double d = mean_finite(e.dice);
      if (!std::isnan(d)) ds.points.emplace_back(e.epoch, d);
      // cup class when present, otherwise the last class column
      if (!e.fg_frac.empty()) {
        double f = e.fg_frac.back();
        if (!std::isnan(f)) fs.points.emplace_back(e.epoch, f);
      }
    }
    if (!ds.points.empty()) dice_series.push_back(std::move(ds));
    if (!fs.points.empty())
      fg_series.push_back(std::move(fs));
    else
      warnings.push_back("runlog '" + run.label +
                         "' has no foreground-fraction data; panel skipped for it");
  }

  const double width = 640;
  const bool two_panels = !fg_series.empty();
  const double panel_h = 220, margin = 56;
  const double height = margin + panel_h + (two_panels ? panel_h + margin : 0) + 48;

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "' font-family='sans-serif'>\n";
  svg << "<rect width='100%' height='100%' fill='#fafafa'/>\n";
  draw_panel(svg, margin, 36, width - margin - 24, panel_h, "Dice vs epoch (target test)",
             "mean Dice", dice_series);
  if (two_panels)
    draw_panel(svg, margin, 36 + panel_h + margin, width - margin - 24, panel_h,
               "Predicted cup foreground fraction", "fg fraction", fg_series);
  svg << "</svg>\n";

  std::ofstream f(out_path);
  if (!f) throw std::runtime_error("cannot write plot: " + out_path);
  f << svg.str();
  return warnings;
}

}  // namespace cbmt
