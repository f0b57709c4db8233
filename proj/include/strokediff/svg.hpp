#pragma once

#include <string>
#include <vector>

#include "strokediff/eval.hpp"
#include "strokediff/sketch.hpp"

namespace strokediff {

struct SvgOptions {
  double cell = 160.0;  // pixel size of one sketch panel
  double margin = 12.0;
  double stroke_width = 2.0;
  int columns = 4;
};

// Black at the first point to yellow at the last, as "#rrggbb".
std::string topology_color(double fraction);

// One panel per sketch on a grid; each segment is coloured by its position
// in the drawing order. Pen-up jumps are not drawn.
std::string render_sketches_svg(const std::vector<Sketch>& sketches, const SvgOptions& options = {});

// Line plot of mean CD against length factor.
std::string render_cd_curve_svg(const CdCurve& curve);

}  // namespace strokediff
