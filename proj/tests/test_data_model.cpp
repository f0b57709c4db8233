#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "strokediff/batch.hpp"
#include "strokediff/dataset.hpp"
#include "strokediff/errors.hpp"
#include "strokediff/rng.hpp"
#include "strokediff/sketch.hpp"
#include "strokediff/sketch_io.hpp"

using namespace strokediff;

namespace {

Sketch make(std::initializer_list<StrokePoint> pts) { return Sketch{std::vector<StrokePoint>(pts)}; }

Sketch random_sketch(Rng& rng, int n) {
  Sketch s;
  for (int i = 0; i < n; ++i) {
    const bool up = i + 1 == n || rng.uniform() < 0.15;
    s.points.push_back({rng.normal() * 3.0, rng.normal() * 3.0, up ? kPenUp : kPenDown});
  }
  return s;
}

// Brute-force Chamfer distance as a plain double loop.
double chamfer_oracle(const Matrix& a, const Matrix& b) {
  auto directed = [](const Matrix& p, const Matrix& q) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < q.rows(); ++j) {
        const double dx = p(i, 0) - q(j, 0), dy = p(i, 1) - q(j, 1);
        best = std::min(best, dx * dx + dy * dy);
      }
      total += best;
    }
    return total / static_cast<double>(p.rows());
  };
  return directed(a, b) + directed(b, a);
}

// Every split of `total` into strokes with >= 2 points each, minimising the
// variance of per-point spacing length_k / n_k.
std::vector<int> allocation_oracle(const std::vector<double>& lengths, int total) {
  std::vector<int> best, cur(lengths.size(), 2);
  double best_var = std::numeric_limits<double>::infinity();
  auto score = [&](const std::vector<int>& n) {
    double mean = 0.0;
    for (std::size_t k = 0; k < n.size(); ++k) mean += lengths[k] / n[k];
    mean /= static_cast<double>(n.size());
    double var = 0.0;
    for (std::size_t k = 0; k < n.size(); ++k) var += std::pow(lengths[k] / n[k] - mean, 2);
    return var;
  };
  std::function<void(std::size_t, int)> rec = [&](std::size_t k, int left) {
    if (k + 1 == lengths.size()) {
      if (left < 2) return;
      cur[k] = left;
      const double v = score(cur);
      if (v < best_var - 1e-15) {
        best_var = v;
        best = cur;
      }
      return;
    }
    for (int n = 2; n <= left - 2 * static_cast<int>(lengths.size() - k - 1); ++n) {
      cur[k] = n;
      rec(k + 1, left - n);
    }
  };
  rec(0, total);
  return best;
}

}  // namespace

TEST_CASE("stroke3 lines parse as absolute coordinates") {
  std::istringstream in("[[0,0,-1],[1,0,-1],[1,1,1]]\n");
  const auto s = parse_sketches(in, SketchFormat::kStroke3Jsonl);
  REQUIRE(s.size() == 1);
  CHECK(s[0] == make({{0, 0, -1}, {1, 0, -1}, {1, 1, 1}}));
}

TEST_CASE("offset lines are cumulatively summed") {
  std::istringstream in("[[0,0,-1],[1,0,-1],[0,1,1]]\n");
  const auto s = parse_sketches(in, SketchFormat::kOffsetsJsonl);
  REQUIRE(s.size() == 1);
  CHECK(s[0] == make({{0, 0, -1}, {1, 0, -1}, {1, 1, 1}}));
}

TEST_CASE("zero/one pen encoding is remapped") {
  std::istringstream in("[[0,0,0],[1,0,0],[1,1,1]]\n");
  const auto s = parse_sketches(in, SketchFormat::kStroke3Jsonl);
  CHECK(s[0].points[0].pen == kPenDown);
  CHECK(s[0].points[2].pen == kPenUp);
}

TEST_CASE("parse errors name the line") {
  std::istringstream empty("[[0,0,-1],[1,0,1]]\n\n");
  CHECK_THROWS_WITH_AS(parse_sketches(empty, SketchFormat::kStroke3Jsonl), doctest::Contains("line 2"), ParseError);
  std::istringstream junk("[[0,0,-1],[1,0,1]]\n[[0,0,\n");
  CHECK_THROWS_AS(parse_sketches(junk, SketchFormat::kStroke3Jsonl), ParseError);
  std::istringstream pen("[[0,0,2],[1,0,1]]\n");
  CHECK_THROWS_AS(parse_sketches(pen, SketchFormat::kStroke3Jsonl), DataError);
}

TEST_CASE("header line overrides the format") {
  std::istringstream in("{\"format\":\"offsets-jsonl\"}\n[[0,0,-1],[1,0,-1],[0,1,1]]\n");
  const auto s = parse_sketches(in, SketchFormat::kStroke3Jsonl);
  CHECK(s[0].points[2].x == 1.0);
  CHECK(s[0].points[2].y == 1.0);
}

TEST_CASE("written files parse back identically") {
  Rng rng(3);
  std::vector<Sketch> sketches{random_sketch(rng, 7), random_sketch(rng, 12)};
  std::istringstream in(format_sketches(sketches));
  CHECK(parse_sketches(in, SketchFormat::kStroke3Jsonl) == sketches);
}

TEST_CASE("quantize_pen thresholds at zero with ties to pen-up") {
  CHECK(quantize_pen(0.3) == kPenUp);
  CHECK(quantize_pen(-0.2) == kPenDown);
  CHECK(quantize_pen(0.0) == kPenUp);
  CHECK(quantize_pen(-0.0) == kPenUp);
  CHECK_THROWS_AS(quantize_pen(std::numeric_limits<double>::quiet_NaN()), DataError);
}

TEST_CASE("velocity encoding") {
  const Sketch x = make({{0, 0, -1}, {1, 0, -1}, {1, 1, 1}});
  const VelocitySequence v = to_velocities(x);
  Matrix expected(3, 3);
  expected << 1, 0, -1, 0, 1, -1, 0, 0, 1;
  CHECK(v.values == expected);
  CHECK(v.origin_x == 0.0);
  CHECK(v.origin_y == 0.0);
  CHECK(to_positions(v) == x);

  const Sketch c = to_positions(Matrix::Zero(4, 3), 5.0, 5.0);
  for (const auto& p : c.points) {
    CHECK(p.x == 5.0);
    CHECK(p.y == 5.0);
  }
}

TEST_CASE("velocity round trip on random sketches") {
  Rng rng(11);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Sketch s = random_sketch(rng, 2 + i % 30);
    const Sketch back = to_positions(to_velocities(s));
    REQUIRE(back.size() == s.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
      worst = std::max({worst, std::abs(back.points[j].x - s.points[j].x), std::abs(back.points[j].y - s.points[j].y)});
      CHECK(back.points[j].pen == s.points[j].pen);
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("validate_sketch rejects short or non-finite input") {
  CHECK_THROWS_AS(validate_sketch(make({{0, 0, 1}})), DataError);
  CHECK_THROWS_AS(validate_sketch(make({{0, 0, -1}, {std::nan(""), 0, 1}})), DataError);
  CHECK_THROWS_AS(validate_sketch(make({{0, 0, 0}, {1, 0, 1}})), DataError);
  CHECK_NOTHROW(validate_sketch(make({{0, 0, -1}, {1, 0, 1}})));
}

TEST_CASE("resampling a straight stroke is equispaced") {
  const Sketch s = make({{0, 0, -1}, {0, 10, 1}});
  const Sketch r = resample(s, 5);
  REQUIRE(r.size() == 5);
  const double ys[] = {0, 2.5, 5, 7.5, 10};
  for (int i = 0; i < 5; ++i) {
    CHECK(r.points[i].x == doctest::Approx(0.0));
    CHECK(r.points[i].y == doctest::Approx(ys[i]).epsilon(1e-12));
  }
  CHECK(r.points[4].pen == kPenUp);
}

TEST_CASE("preprocess fits the unit box") {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const Sketch p = preprocess(random_sketch(rng, 10), 24, 1.0);
    CHECK(p.size() == 24);
    const Matrix x = positions_matrix(p);
    const double side = std::max(x.col(0).maxCoeff() - x.col(0).minCoeff(), x.col(1).maxCoeff() - x.col(1).minCoeff());
    CHECK(std::abs(side - 1.0) <= 1e-9);
    CHECK(x.minCoeff() >= -1e-12);
  }
  CHECK_THROWS_AS(preprocess(make({{1, 1, -1}, {1, 1, 1}}), 8, 1.0), PreprocessError);
}

TEST_CASE("two strokes of length 3 and 1 get 6 and 2 points") {
  CHECK(allocate_points({3.0, 1.0}, 8) == std::vector<int>{6, 2});
  CHECK(allocation_oracle({3.0, 1.0}, 8) == std::vector<int>{6, 2});
  const Sketch s = make({{0, 0, -1}, {3, 0, 1}, {0, 1, -1}, {1, 1, 1}});
  const Sketch r = resample(s, 8);
  const auto strokes = split_strokes(r);
  REQUIRE(strokes.size() == 2);
  CHECK(strokes[0].size() == 6);
  CHECK(strokes[1].size() == 2);
}

TEST_CASE("allocation agrees with the spacing-variance oracle when quotas are integral") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int strokes = 2 + trial % 2;
    std::vector<int> n;
    std::vector<double> lengths;
    int total = 0;
    for (int k = 0; k < strokes; ++k) {
      n.push_back(2 + rng.uniform_int(0, 8));
      total += n.back();
    }
    const double spacing = 0.5 + rng.uniform();
    for (int k = 0; k < strokes; ++k) lengths.push_back(spacing * n[k]);
    CHECK(allocate_points(lengths, total) == n);
    CHECK(allocation_oracle(lengths, total) == n);
  }
  CHECK_THROWS_AS(allocate_points({1.0, 1.0, 1.0}, 5), PreprocessError);
}

TEST_CASE("short strokes keep the two-point floor") {
  const auto n = allocate_points({100.0, 0.01}, 10);
  CHECK(n == std::vector<int>{8, 2});
}

TEST_CASE("point sets") {
  const Sketch seg = make({{0, 0, -1}, {2, 0, 1}});
  const PointSet p = to_point_set(seg, 3);
  REQUIRE(p.size() == 3);
  CHECK(p.points(1, 0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(to_point_set(seg, 1), ContractError);

  Rng rng(2);
  const Sketch s = random_sketch(rng, 9);
  const PointSet same = to_point_set(s, 9);
  CHECK(same.points == positions_matrix(s));
}

TEST_CASE("densified circle is evenly spaced") {
  const Sketch c = preprocess(make_circle(0.0, 0.0, 1.0, 0.3, false), 32, 1.0);
  const PointSet p = to_point_set(c, 64);
  std::vector<double> nn;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      // The closed loop ends where it starts; coincident points are one set element.
      const double d = (p.points.row(i) - p.points.row(j)).norm();
      if (d > 1e-12) best = std::min(best, d);
    }
    nn.push_back(best);
  }
  double mean = 0.0, var = 0.0;
  for (double d : nn) mean += d;
  mean /= nn.size();
  for (double d : nn) var += (d - mean) * (d - mean);
  const double cv = std::sqrt(var / nn.size()) / mean;
  CHECK(cv < 0.05);
}

TEST_CASE("chamfer distance") {
  Matrix a(1, 2), b(1, 2);
  a << 0, 0;
  b << 3, 4;
  CHECK(chamfer_distance(PointSet{a}, PointSet{b}) == 50.0);
  CHECK(chamfer_distance(PointSet{a}, PointSet{a}) == 0.0);
  CHECK_THROWS_AS(chamfer_distance(PointSet{Matrix(0, 2)}, PointSet{b}), MetricError);

  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix p = rng.normal(1 + trial % 32, 2);
    const Matrix q = rng.normal(1 + (trial * 7) % 32, 2);
    CHECK(chamfer_distance(PointSet{p}, PointSet{q}) == chamfer_oracle(p, q));
    CHECK(chamfer_distance(PointSet{p}, PointSet{q}) == chamfer_distance(PointSet{q}, PointSet{p}));
  }
}

TEST_CASE("reverse_drawing keeps stroke boundaries") {
  const Sketch s = make({{0, 0, -1}, {1, 0, 1}, {5, 5, -1}, {6, 5, -1}, {7, 5, 1}});
  const Sketch r = reverse_drawing(s);
  CHECK(r == make({{7, 5, -1}, {6, 5, -1}, {5, 5, 1}, {1, 0, -1}, {0, 0, 1}}));
  CHECK(reverse_drawing(r) == s);
}

TEST_CASE("batches pad with zeros and mask") {
  Rng rng(1);
  const SketchBatch b = make_batch(std::vector<Matrix>{rng.normal(3, 3), rng.normal(5, 3)});
  CHECK(b.max_length() == 5);
  Matrix mask(2, 5);
  mask << 1, 1, 1, 0, 0, 1, 1, 1, 1, 1;
  CHECK(b.mask == mask);
  CHECK(b.velocities[0].bottomRows(2).isZero(0.0));
  const SketchBatch single = make_batch(std::vector<Matrix>{rng.normal(4, 3)});
  CHECK(single.mask == Matrix::Ones(1, 4));
}

TEST_CASE("batch statistics ignore padding") {
  Matrix a(2, 3), c(4, 3);
  a << 1, 2, -1, 3, 4, 1;
  c << 1, 2, -1, 3, 4, 1, 1, 2, -1, 3, 4, 1;
  SketchBatch padded = make_batch(std::vector<Matrix>{a, c});
  padded.velocities[0].bottomRows(2).setConstant(1e6);
  const ChannelStats s = masked_channel_stats(padded);
  CHECK(s.mean(0) == doctest::Approx(2.0));
  CHECK(s.mean(1) == doctest::Approx(3.0));
  CHECK(s.std(2) == doctest::Approx(1.0));
}

TEST_CASE("toy datasets are deterministic and fit the unit box") {
  ToyDatasetOptions o;
  o.shape = ToyShape::kCircles;
  o.n = 100;
  o.length = 32;
  o.seed = 7;
  const auto a = generate_toy_dataset(o);
  const auto b = generate_toy_dataset(o);
  CHECK(format_sketches(a.train) == format_sketches(b.train));
  CHECK(format_sketches(a.test) == format_sketches(b.test));
  CHECK(a.train.size() == 80);
  CHECK(a.validation.size() == 10);
  CHECK(a.test.size() == 10);
  for (const auto& s : a.train) {
    CHECK(s.size() == 32);
    const Matrix x = positions_matrix(s);
    CHECK(x.minCoeff() >= -1e-12);
    CHECK(x.maxCoeff() <= 1.0 + 1e-12);
  }
  o.n = 9;
  CHECK_THROWS_AS(generate_toy_dataset(o), ConfigError);
}

TEST_CASE("noise-free circles lie on a least-squares circle") {
  ToyDatasetOptions o;
  o.shape = ToyShape::kCircles;
  o.n = 20;
  o.seed = 4;
  for (const auto& s : generate_toy_dataset(o).train) {
    // Kasa fit: x^2 + y^2 + D x + E y + F = 0 in the least-squares sense.
    const Matrix x = positions_matrix(s);
    Matrix A(x.rows(), 3);
    Eigen::VectorXd rhs(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      A(i, 0) = x(i, 0);
      A(i, 1) = x(i, 1);
      A(i, 2) = 1.0;
      rhs(i) = -(x(i, 0) * x(i, 0) + x(i, 1) * x(i, 1));
    }
    const Eigen::VectorXd sol = A.colPivHouseholderQr().solve(rhs);
    const double cx = -sol(0) / 2, cy = -sol(1) / 2;
    const double r = std::sqrt(cx * cx + cy * cy - sol(2));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      CHECK(std::abs(std::hypot(x(i, 0) - cx, x(i, 1) - cy) - r) < 1e-6);
    }
  }
}

TEST_CASE("two-class dataset is balanced") {
  ToyDatasetOptions o;
  o.shape = ToyShape::kTwoClass;
  o.n = 100;
  o.seed = 2;
  const auto d = generate_toy_dataset(o);
  REQUIRE(d.labeled());
  int ones = 0;
  for (auto l : d.train_labels) ones += l;
  for (auto l : d.validation_labels) ones += l;
  for (auto l : d.test_labels) ones += l;
  CHECK(ones == 50);
  CHECK(d.total() == 100);
}

TEST_CASE("datasets round-trip through a directory") {
  ToyDatasetOptions o;
  o.shape = ToyShape::kTwoClass;
  o.n = 20;
  const auto d = generate_toy_dataset(o);
  const auto dir = std::filesystem::temp_directory_path() / "strokediff_test_dataset";
  std::filesystem::remove_all(dir);
  save_dataset(dir, d, {"toy:two-class", 32, 1.0, 0, 0.0});
  const auto back = load_dataset(dir);
  CHECK(back.train == d.train);
  CHECK(back.test_labels == d.test_labels);
  CHECK(back.class_names == d.class_names);
  std::filesystem::remove_all(dir);
}
