#include "strokediff/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace strokediff {

std::string topology_color(double fraction) {
  const double f = std::clamp(fraction, 0.0, 1.0);
  const int rg = static_cast<int>(std::lround(255.0 * f));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x00", rg, rg);
  return buf;
}

std::string render_sketches_svg(const std::vector<Sketch>& sketches, const SvgOptions& o) {
  const int cols = std::max(1, std::min<int>(o.columns, static_cast<int>(sketches.size())));
  const int rows = std::max<int>(1, (static_cast<int>(sketches.size()) + cols - 1) / cols);
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * o.cell << "\" height=\"" << rows * o.cell
     << "\" viewBox=\"0 0 " << cols * o.cell << ' ' << rows * o.cell << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t k = 0; k < sketches.size(); ++k) {
    const Sketch& s = sketches[k];
    if (s.points.empty()) continue;
    double x0 = s.points[0].x, y0 = s.points[0].y, x1 = x0, y1 = y0;
    for (const auto& p : s.points) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    const double side = std::max({x1 - x0, y1 - y0, 1e-9});
    const double scale = (o.cell - 2.0 * o.margin) / side;
    const double ox = static_cast<double>(k % cols) * o.cell + o.margin;
    const double oy = static_cast<double>(k / cols) * o.cell + o.margin;
    auto px = [&](const StrokePoint& p) { return ox + (p.x - x0) * scale; };
    // Canvas y grows downwards; flip so sketches read upright.
    auto py = [&](const StrokePoint& p) { return oy + (y1 - p.y) * scale; };
    os << "<g stroke-width=\"" << o.stroke_width << "\" stroke-linecap=\"round\">\n";
    const double n = static_cast<double>(std::max<std::size_t>(1, s.size() - 1));
    for (std::size_t j = 0; j + 1 < s.size(); ++j) {
      if (s.points[j].pen == kPenUp) continue;
      os << "<line x1=\"" << px(s.points[j]) << "\" y1=\"" << py(s.points[j]) << "\" x2=\"" << px(s.points[j + 1])
         << "\" y2=\"" << py(s.points[j + 1]) << "\" stroke=\"" << topology_color(j / n) << "\"/>\n";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_cd_curve_svg(const CdCurve& curve) {
  const double w = 480, h = 320, m = 48;
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m / 2 << "\" y2=\"" << h - m
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << m / 2 << "\" x2=\"" << m << "\" y2=\"" << h - m << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"12\">length factor</text>\n";
  os << "<text x=\"14\" y=\"" << h / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << h / 2
     << ")\" text-anchor=\"middle\">mean CD</text>\n";
  if (!curve.factors.empty()) {
    const auto [fmin, fmax] = std::minmax_element(curve.factors.begin(), curve.factors.end());
    const double cmax = std::max(1e-12, *std::max_element(curve.mean_cd.begin(), curve.mean_cd.end()));
    const double fspan = std::max(1e-12, *fmax - *fmin);
    auto X = [&](double f) { return m + (f - *fmin) / fspan * (w - 1.5 * m); };
    auto Y = [&](double c) { return h - m - c / cmax * (h - 1.5 * m); };
    os << "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curve.factors.size(); ++i) os << X(curve.factors[i]) << ',' << Y(curve.mean_cd[i]) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < curve.factors.size(); ++i) {
      os << "<circle cx=\"" << X(curve.factors[i]) << "\" cy=\"" << Y(curve.mean_cd[i]) << "\" r=\"3\" fill=\"#1f4e9c\"/>\n";
      os << "<text x=\"" << X(curve.factors[i]) << "\" y=\"" << h - m + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
         << curve.factors[i] << "</text>\n";
    }
    os << "<text x=\"" << m - 4 << "\" y=\"" << Y(cmax) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << cmax
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace strokediff
