#include "strokediff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "strokediff/errors.hpp"
#include "strokediff/rng.hpp"
#include "strokediff/sketch_io.hpp"

namespace strokediff {

using nlohmann::json;

ToyShape parse_toy_shape(const std::string& name) {
  if (name == "lines") return ToyShape::kLines;
  if (name == "circles") return ToyShape::kCircles;
  if (name == "polygons") return ToyShape::kPolygons;
  if (name == "zigzags") return ToyShape::kZigzags;
  if (name == "two-class") return ToyShape::kTwoClass;
  throw ConfigError("unknown toy dataset '" + name + "'");
}

std::string to_string(ToyShape shape) {
  switch (shape) {
    case ToyShape::kLines: return "lines";
    case ToyShape::kCircles: return "circles";
    case ToyShape::kPolygons: return "polygons";
    case ToyShape::kZigzags: return "zigzags";
    case ToyShape::kTwoClass: return "two-class";
  }
  return "unknown";
}

namespace {

constexpr int kCircleSegments = 4096;

Sketch polyline(const std::vector<std::pair<double, double>>& pts) {
  Sketch s;
  for (const auto& [x, y] : pts) s.points.push_back({x, y, kPenDown});
  s.points.back().pen = kPenUp;
  return s;
}

Sketch make_polygon(int sides, double rotation) {
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i <= sides; ++i) {
    const double a = rotation + 2.0 * std::numbers::pi * i / sides;
    pts.emplace_back(std::cos(a), std::sin(a));
  }
  return polyline(pts);
}

Sketch make_lines(Rng& rng) {
  const int strokes = rng.uniform_int(2, 3);
  Sketch s;
  for (int k = 0; k < strokes; ++k) {
    double x0, y0, x1, y1;
    do {
      x0 = rng.uniform();
      y0 = rng.uniform();
      x1 = rng.uniform();
      y1 = rng.uniform();
    } while (std::hypot(x1 - x0, y1 - y0) < 0.4);
    s.points.push_back({x0, y0, kPenDown});
    s.points.push_back({x1, y1, kPenUp});
  }
  return s;
}

Sketch random_shape(ToyShape shape, Rng& rng) {
  switch (shape) {
    case ToyShape::kLines:
      return make_lines(rng);
    case ToyShape::kCircles: {
      const double start = 2.0 * std::numbers::pi * rng.uniform();
      const bool clockwise = rng.uniform() < 0.5;
      return make_circle(0.0, 0.0, 1.0, start, clockwise);
    }
    case ToyShape::kPolygons:
      return make_polygon(rng.uniform_int(3, 6), 2.0 * std::numbers::pi * rng.uniform());
    case ToyShape::kZigzags:
      return make_zigzag(rng.uniform_int(3, 6), 0.2 + 0.5 * rng.uniform(),
                         2.0 * std::numbers::pi * rng.uniform());
    case ToyShape::kTwoClass:
      break;
  }
  throw ConfigError("two-class has no single shape");
}

}  // namespace

Sketch make_circle(double cx, double cy, double radius, double start_angle, bool clockwise) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(kCircleSegments + 1);
  const double dir = clockwise ? -1.0 : 1.0;
  for (int i = 0; i <= kCircleSegments; ++i) {
    const double a = start_angle + dir * 2.0 * std::numbers::pi * i / kCircleSegments;
    pts.emplace_back(cx + radius * std::cos(a), cy + radius * std::sin(a));
  }
  return polyline(pts);
}

Sketch make_zigzag(int teeth, double amplitude, double rotation) {
  std::vector<std::pair<double, double>> pts;
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  const int corners = 2 * teeth + 1;
  for (int i = 0; i < corners; ++i) {
    const double u = static_cast<double>(i) / (corners - 1);
    const double v = (i % 2 == 0 ? -0.5 : 0.5) * amplitude;
    pts.emplace_back(c * u - s * v, s * u + c * v);
  }
  return polyline(pts);
}

DatasetSplit generate_toy_dataset(const ToyDatasetOptions& options) {
  if (options.n < 10) throw ConfigError("toy dataset needs n >= 10");
  if (options.length < 2) throw ConfigError("toy dataset needs length >= 2");
  Rng rng(options.seed);

  std::vector<Sketch> sketches;
  std::vector<int> labels;
  sketches.reserve(options.n);
  for (int i = 0; i < options.n; ++i) {
    ToyShape shape = options.shape;
    if (shape == ToyShape::kTwoClass) {
      const int label = i % 2;
      labels.push_back(label);
      shape = label == 0 ? ToyShape::kCircles : ToyShape::kZigzags;
    }
    Sketch s = resample(random_shape(shape, rng), options.length);
    if (options.noise > 0.0) {
      for (auto& p : s.points) {
        p.x += options.noise * rng.normal();
        p.y += options.noise * rng.normal();
      }
    }
    sketches.push_back(normalize_box(s, 1.0));
  }

  std::vector<int> order(options.n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());

  const int n_train = static_cast<int>(std::lround(0.8 * options.n));
  const int n_val = static_cast<int>(std::lround(0.1 * options.n));
  DatasetSplit split;
  const bool labeled = options.shape == ToyShape::kTwoClass;
  if (labeled) split.class_names = {"circle", "zigzag"};
  for (int k = 0; k < options.n; ++k) {
    const int idx = order[k];
    auto& dst = k < n_train ? split.train : (k < n_train + n_val ? split.validation : split.test);
    dst.push_back(sketches[idx]);
    if (labeled) {
      auto& lab = k < n_train ? split.train_labels
                              : (k < n_train + n_val ? split.validation_labels : split.test_labels);
      lab.push_back(labels[idx]);
    }
  }
  return split;
}

void save_dataset(const std::filesystem::path& dir, const DatasetSplit& split, const DatasetManifestInfo& info) {
  std::filesystem::create_directories(dir);
  json splits = json::object();
  auto add = [&](const std::string& name, const std::vector<Sketch>& sk, const std::vector<int>& labels) {
    const std::string file = name + ".jsonl";
    write_sketch_file(dir / file, sk);
    json entry{{"file", file}, {"count", sk.size()}};
    if (split.labeled()) entry["labels"] = labels;
    splits[name] = entry;
  };
  add("train", split.train, split.train_labels);
  add("validation", split.validation, split.validation_labels);
  add("test", split.test, split.test_labels);
  json manifest{{"splits", splits},
                {"labels", split.class_names},
                {"preprocess", {{"target_len", info.target_len}, {"scale_box", info.scale_box}}},
                {"seed", info.seed},
                {"generator", info.generator},
                {"noise", info.noise}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

DatasetSplit load_dataset(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw ParseError("bad dataset manifest: " + std::string(e.what()));
  }
  DatasetSplit split;
  try {
    split.class_names = manifest.value("labels", std::vector<std::string>{});
    const auto& splits = manifest.at("splits");
    auto load = [&](const std::string& name, std::vector<Sketch>& sk, std::vector<int>& labels) {
      if (!splits.contains(name)) return;
      const auto& entry = splits.at(name);
      sk = parse_sketch_file(dir / entry.at("file").get<std::string>(), SketchFormat::kStroke3Jsonl);
      if (entry.contains("labels")) labels = entry.at("labels").get<std::vector<int>>();
      if (!labels.empty() && labels.size() != sk.size()) {
        throw ParseError("label count mismatch in split " + name);
      }
    };
    load("train", split.train, split.train_labels);
    load("validation", split.validation, split.validation_labels);
    load("test", split.test, split.test_labels);
  } catch (const json::exception& e) {
    throw ParseError("bad dataset manifest: " + std::string(e.what()));
  }
  return split;
}

}  // namespace strokediff
