#include "strokediff/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "strokediff/errors.hpp"

namespace strokediff {

void validate_sketch(const Sketch& sketch) {
  if (sketch.points.size() < 2) {
    throw DataError("sketch needs at least 2 points, got " + std::to_string(sketch.points.size()));
  }
  for (std::size_t i = 0; i < sketch.points.size(); ++i) {
    const auto& p = sketch.points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw DataError("non-finite coordinate at point " + std::to_string(i));
    }
    if (p.pen != kPenDown && p.pen != kPenUp) {
      throw DataError("pen bit must be -1 or +1 at point " + std::to_string(i));
    }
  }
}

int quantize_pen(double p_raw) {
  if (std::isnan(p_raw)) throw DataError("pen value is NaN");
  return p_raw >= 0.0 ? kPenUp : kPenDown;
}

VelocitySequence to_velocities(const Sketch& sketch) {
  validate_sketch(sketch);
  const auto n = static_cast<Eigen::Index>(sketch.points.size());
  VelocitySequence v;
  v.values = Matrix::Zero(n, 3);
  v.origin_x = sketch.points.front().x;
  v.origin_y = sketch.points.front().y;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& p = sketch.points[j];
    if (j + 1 < n) {
      const auto& q = sketch.points[j + 1];
      v.values(j, 0) = q.x - p.x;
      v.values(j, 1) = q.y - p.y;
    }
    v.values(j, 2) = p.pen;
  }
  return v;
}

Sketch to_positions(const Matrix& velocities, double origin_x, double origin_y) {
  Sketch s;
  s.points.reserve(velocities.rows());
  double x = origin_x;
  double y = origin_y;
  for (Eigen::Index j = 0; j < velocities.rows(); ++j) {
    s.points.push_back({x, y, quantize_pen(velocities(j, 2))});
    x += velocities(j, 0);
    y += velocities(j, 1);
  }
  return s;
}

Sketch to_positions(const VelocitySequence& velocities) {
  return to_positions(velocities.values, velocities.origin_x, velocities.origin_y);
}

std::vector<std::vector<StrokePoint>> split_strokes(const Sketch& sketch) {
  std::vector<std::vector<StrokePoint>> strokes;
  std::vector<StrokePoint> current;
  for (const auto& p : sketch.points) {
    current.push_back(p);
    if (p.pen == kPenUp) {
      strokes.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) strokes.push_back(std::move(current));
  return strokes;
}

namespace {

double stroke_length(const std::vector<StrokePoint>& stroke) {
  double len = 0.0;
  for (std::size_t i = 1; i < stroke.size(); ++i) {
    len += std::hypot(stroke[i].x - stroke[i - 1].x, stroke[i].y - stroke[i - 1].y);
  }
  return len;
}

// n equispaced points along one polyline, endpoints included.
void resample_stroke(const std::vector<StrokePoint>& stroke, int n, std::vector<StrokePoint>& out) {
  std::vector<double> cumulative(stroke.size(), 0.0);
  for (std::size_t i = 1; i < stroke.size(); ++i) {
    cumulative[i] = cumulative[i - 1] +
                    std::hypot(stroke[i].x - stroke[i - 1].x, stroke[i].y - stroke[i - 1].y);
  }
  const double total = cumulative.back();
  std::size_t seg = 0;
  for (int i = 0; i < n; ++i) {
    StrokePoint p{stroke.back().x, stroke.back().y, i + 1 == n ? kPenUp : kPenDown};
    if (i + 1 < n && total > 0.0) {
      const double s = total * static_cast<double>(i) / static_cast<double>(n - 1);
      while (seg + 2 < stroke.size() && cumulative[seg + 1] < s) ++seg;
      const double seg_len = cumulative[seg + 1] - cumulative[seg];
      const double u = seg_len > 0.0 ? (s - cumulative[seg]) / seg_len : 0.0;
      p.x = stroke[seg].x + u * (stroke[seg + 1].x - stroke[seg].x);
      p.y = stroke[seg].y + u * (stroke[seg + 1].y - stroke[seg].y);
    } else if (i + 1 < n) {
      p.x = stroke.front().x;
      p.y = stroke.front().y;
    }
    out.push_back(p);
  }
}

}  // namespace

double arc_length(const Sketch& sketch) {
  double len = 0.0;
  for (const auto& stroke : split_strokes(sketch)) len += stroke_length(stroke);
  return len;
}

std::vector<int> allocate_points(const std::vector<double>& stroke_lengths, int total) {
  const int n = static_cast<int>(stroke_lengths.size());
  if (n == 0) throw PreprocessError("no strokes to allocate points to");
  if (total < 2 * n) {
    throw PreprocessError("target length " + std::to_string(total) + " is below 2 points for each of " +
                          std::to_string(n) + " strokes");
  }
  const double sum = std::accumulate(stroke_lengths.begin(), stroke_lengths.end(), 0.0);
  std::vector<double> ideal(n);
  for (int k = 0; k < n; ++k) {
    ideal[k] = sum > 0.0 ? total * stroke_lengths[k] / sum : static_cast<double>(total) / n;
  }
  std::vector<int> count(n);
  int assigned = 0;
  for (int k = 0; k < n; ++k) {
    count[k] = std::max(2, static_cast<int>(std::floor(ideal[k] + 1e-9)));
    assigned += count[k];
  }
  // Largest-remainder correction in both directions; ties go to the lower index.
  while (assigned < total) {
    int best = 0;
    for (int k = 1; k < n; ++k) {
      if (ideal[k] - count[k] > ideal[best] - count[best]) best = k;
    }
    ++count[best];
    ++assigned;
  }
  while (assigned > total) {
    int best = -1;
    for (int k = 0; k < n; ++k) {
      if (count[k] <= 2) continue;
      if (best < 0 || count[k] - ideal[k] > count[best] - ideal[best]) best = k;
    }
    --count[best];
    --assigned;
  }
  return count;
}

Sketch resample(const Sketch& sketch, int target_len) {
  validate_sketch(sketch);
  if (target_len < 2) throw PreprocessError("target length must be >= 2");
  const auto strokes = split_strokes(sketch);
  std::vector<double> lengths;
  lengths.reserve(strokes.size());
  for (const auto& s : strokes) lengths.push_back(stroke_length(s));
  if (std::accumulate(lengths.begin(), lengths.end(), 0.0) <= 0.0) {
    throw PreprocessError("sketch has zero total arc length");
  }
  const auto counts = allocate_points(lengths, target_len);
  Sketch out;
  out.points.reserve(target_len);
  for (std::size_t k = 0; k < strokes.size(); ++k) resample_stroke(strokes[k], counts[k], out.points);
  return out;
}

Sketch normalize_box(const Sketch& sketch, double scale_box) {
  if (!(scale_box > 0.0)) throw PreprocessError("scale_box must be positive");
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  for (const auto& p : sketch.points) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  const double side = std::max(max_x - min_x, max_y - min_y);
  if (!(side > 0.0)) throw PreprocessError("sketch has an empty bounding box");
  const double s = scale_box / side;
  Sketch out = sketch;
  for (auto& p : out.points) {
    p.x = (p.x - min_x) * s;
    p.y = (p.y - min_y) * s;
  }
  return out;
}

Sketch preprocess(const Sketch& sketch, int target_len, double scale_box) {
  return normalize_box(resample(sketch, target_len), scale_box);
}

Sketch recenter(const Sketch& sketch) {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  for (const auto& p : sketch.points) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
  }
  Sketch out = sketch;
  for (auto& p : out.points) {
    p.x -= min_x;
    p.y -= min_y;
  }
  return out;
}

Sketch reverse_drawing(const Sketch& sketch) {
  auto strokes = split_strokes(sketch);
  Sketch out;
  out.points.reserve(sketch.points.size());
  for (auto it = strokes.rbegin(); it != strokes.rend(); ++it) {
    for (auto p = it->rbegin(); p != it->rend(); ++p) {
      out.points.push_back({p->x, p->y, kPenDown});
    }
    out.points.back().pen = kPenUp;
  }
  return out;
}

Matrix positions_matrix(const Sketch& sketch) {
  Matrix m(static_cast<Eigen::Index>(sketch.points.size()), 2);
  for (std::size_t i = 0; i < sketch.points.size(); ++i) {
    m(i, 0) = sketch.points[i].x;
    m(i, 1) = sketch.points[i].y;
  }
  return m;
}

PointSet to_point_set(const Sketch& sketch) { return PointSet{positions_matrix(sketch)}; }

PointSet to_point_set(const Sketch& sketch, int densify) {
  validate_sketch(sketch);
  if (densify < static_cast<int>(sketch.size())) {
    throw ContractError("densify must be at least the sketch length");
  }
  if (densify == static_cast<int>(sketch.size())) return to_point_set(sketch);
  return to_point_set(resample(sketch, densify));
}

double chamfer_distance(const PointSet& a, const PointSet& b) {
  if (a.size() == 0 || b.size() == 0) throw MetricError("chamfer distance of an empty point set");
  auto directed = [](const Matrix& from, const Matrix& to) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < from.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < to.rows(); ++j) {
        const double dx = from(i, 0) - to(j, 0);
        const double dy = from(i, 1) - to(j, 1);
        best = std::min(best, dx * dx + dy * dy);
      }
      total += best;
    }
    return total / static_cast<double>(from.rows());
  };
  return directed(a.points, b.points) + directed(b.points, a.points);
}

}  // namespace strokediff
