#pragma once

#include <string>
#include <vector>

#include "cbmt/engine.hpp"

namespace cbmt {

// Renders runlog curves as a static SVG: mean-Dice vs epoch on top,
// predicted cup foreground fraction vs epoch below. Multiple runlogs overlay
// as labeled series. Runlogs without fg-fraction data skip the lower panel
// with a warning (returned, also printed by the CLI).
struct PlotInput {
  std::string label;
  RunLog log;
};

std::vector<std::string> plot_curves_svg(const std::string& out_path,
                                         const std::vector<PlotInput>& runs);

}  // namespace cbmt
