#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "strokediff/sketch.hpp"

namespace strokediff {

enum class SketchFormat {
  kStroke3Jsonl,  // rows are absolute [x, y, pen]
  kOffsetsJsonl,  // rows are per-step [dx, dy, pen], cumulatively summed on load
};

SketchFormat parse_sketch_format(const std::string& name);
std::string to_string(SketchFormat format);

// One sketch per line. An optional first line of the form
// {"format": "...", "absolute": bool} overrides `format`.
std::vector<Sketch> parse_sketches(std::istream& in, SketchFormat format);
std::vector<Sketch> parse_sketch_file(const std::filesystem::path& path, SketchFormat format);

// Writes the header line followed by absolute [x, y, pen] rows.
void write_sketch_file(const std::filesystem::path& path, const std::vector<Sketch>& sketches);
std::string format_sketches(const std::vector<Sketch>& sketches);

// JSON array of [x, y, pen] triples. Pen accepts {0, 1} or {-1, +1}.
Sketch sketch_from_json(const nlohmann::json& j);
nlohmann::json sketch_to_json(const Sketch& sketch);

// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace strokediff
