#include "strokediff/sketch_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "strokediff/errors.hpp"

namespace strokediff {

using nlohmann::json;

SketchFormat parse_sketch_format(const std::string& name) {
  if (name == "stroke3-jsonl") return SketchFormat::kStroke3Jsonl;
  if (name == "offsets-jsonl") return SketchFormat::kOffsetsJsonl;
  throw ConfigError("unknown sketch format '" + name + "'");
}

std::string to_string(SketchFormat format) {
  return format == SketchFormat::kStroke3Jsonl ? "stroke3-jsonl" : "offsets-jsonl";
}

namespace {

int normalize_pen(double raw) {
  if (raw == 1.0) return kPenUp;
  if (raw == 0.0 || raw == -1.0) return kPenDown;
  throw DataError("pen value outside {-1, 0, 1}");
}

Sketch parse_rows(const json& rows, bool absolute) {
  if (!rows.is_array()) throw ParseError("sketch must be a JSON array");
  Sketch s;
  s.points.reserve(rows.size());
  double x = 0.0;
  double y = 0.0;
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != 3) throw ParseError("sketch rows must be [a, b, pen] triples");
    for (const auto& v : row) {
      if (!v.is_number()) throw ParseError("sketch rows must be numeric");
    }
    const double a = row[0].get<double>();
    const double b = row[1].get<double>();
    if (absolute) {
      x = a;
      y = b;
    } else {
      x += a;
      y += b;
    }
    s.points.push_back({x, y, normalize_pen(row[2].get<double>())});
  }
  validate_sketch(s);
  return s;
}

}  // namespace

Sketch sketch_from_json(const json& j) {
  try {
    return parse_rows(j, true);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad sketch JSON: ") + e.what());
  }
}

json sketch_to_json(const Sketch& sketch) {
  json rows = json::array();
  for (const auto& p : sketch.points) rows.push_back(json::array({p.x, p.y, p.pen}));
  return rows;
}

std::vector<Sketch> parse_sketches(std::istream& in, SketchFormat format) {
  bool absolute = format == SketchFormat::kStroke3Jsonl;
  std::vector<Sketch> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    json parsed;
    try {
      parsed = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (line_no == 1 && parsed.is_object()) {
      if (parsed.contains("absolute")) absolute = parsed.at("absolute").get<bool>();
      if (parsed.contains("format")) {
        const auto f = parse_sketch_format(parsed.at("format").get<std::string>());
        if (!parsed.contains("absolute")) absolute = f == SketchFormat::kStroke3Jsonl;
      }
      continue;
    }
    try {
      out.push_back(parse_rows(parsed, absolute));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Sketch> parse_sketch_file(const std::filesystem::path& path, SketchFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open sketch file " + path.string());
  return parse_sketches(in, format);
}

std::string format_sketches(const std::vector<Sketch>& sketches) {
  std::string out = json{{"format", "stroke3-jsonl"}, {"absolute", true}}.dump() + "\n";
  for (const auto& s : sketches) out += sketch_to_json(s).dump() + "\n";
  return out;
}

void write_sketch_file(const std::filesystem::path& path, const std::vector<Sketch>& sketches) {
  write_file_atomic(path, format_sketches(sketches));
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace strokediff
