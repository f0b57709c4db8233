#pragma once

#include <cstddef>
#include <vector>

#include "strokediff/tensor.hpp"

namespace strokediff {

// Pen bit convention: -1 while drawing, +1 on the last point of a stroke.
inline constexpr int kPenDown = -1;
inline constexpr int kPenUp = 1;

struct StrokePoint {
  double x = 0.0;
  double y = 0.0;
  int pen = kPenDown;

  friend bool operator==(const StrokePoint&, const StrokePoint&) = default;
};

// Ordered (x, y, pen) points in absolute canvas coordinates.
struct Sketch {
  std::vector<StrokePoint> points;

  std::size_t size() const { return points.size(); }
  friend bool operator==(const Sketch&, const Sketch&) = default;
};

// Per-step offsets. Row j is (vx, vy, pen); the pen column is analog while
// diffusing and exactly +-1 for data. `origin` is the first absolute point.
struct VelocitySequence {
  Matrix values;  // (L, 3)
  double origin_x = 0.0;
  double origin_y = 0.0;

  Eigen::Index size() const { return values.rows(); }
};

// Unordered (x, y) collection; rows of `points` carry no meaning in order.
struct PointSet {
  Matrix points;  // (N, 2)

  Eigen::Index size() const { return points.rows(); }
};

// Throws DataError unless the sketch has >= 2 finite points with pen in {-1,+1}.
void validate_sketch(const Sketch& sketch);

// Threshold an analog pen bit at zero; ties go to pen-up.
int quantize_pen(double p_raw);

VelocitySequence to_velocities(const Sketch& sketch);
Sketch to_positions(const VelocitySequence& velocities);
Sketch to_positions(const Matrix& velocities, double origin_x, double origin_y);

// Splits at pen-up markers. A trailing run without a pen-up marker still
// forms a stroke.
std::vector<std::vector<StrokePoint>> split_strokes(const Sketch& sketch);

// Total polyline length summed over strokes (pen-up jumps excluded).
double arc_length(const Sketch& sketch);

// Per-stroke point budget proportional to arc length with a floor of two,
// summing to `total`. Throws PreprocessError when total < 2 * strokes.
std::vector<int> allocate_points(const std::vector<double>& stroke_lengths, int total);

// Equal arc-length resampling to exactly `target_len` points, no scaling.
Sketch resample(const Sketch& sketch, int target_len);

// Translate the bounding box to the origin and scale isotropically so that
// its longest side equals `scale_box`.
Sketch normalize_box(const Sketch& sketch, double scale_box);

// resample() followed by normalize_box().
Sketch preprocess(const Sketch& sketch, int target_len, double scale_box);

// Translate so the bounding box starts at (0, 0).
Sketch recenter(const Sketch& sketch);

// Reverse the drawing direction: stroke order and point order within each
// stroke are both reversed; pen-up markers stay at stroke ends.
Sketch reverse_drawing(const Sketch& sketch);

PointSet to_point_set(const Sketch& sketch, int densify);
PointSet to_point_set(const Sketch& sketch);

// Symmetric sum of mean squared nearest-neighbour distances.
double chamfer_distance(const PointSet& a, const PointSet& b);

Matrix positions_matrix(const Sketch& sketch);  // (L, 2)

}  // namespace strokediff
