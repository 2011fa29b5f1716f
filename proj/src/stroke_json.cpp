#include "idip/stroke_json.hpp"

#include <cmath>
#include <limits>

namespace idip {

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw FieldError(path + "." + key, "is required");
  return *it;
}

int integer(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number_integer()) throw FieldError(path, "must be an integer");
  const auto v = j.get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw FieldError(path, "is out of range");
  }
  return static_cast<int>(v);
}

}  // namespace

PaintStroke stroke_from_json(const nlohmann::json& j, const std::string& path, bool allow_phase) {
  if (!j.is_object()) throw FieldError(path, "must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "phase" && allow_phase) continue;
    if (key != "mode" && key != "color" && key != "radius" && key != "points") {
      throw FieldError(path + "." + key, "is not a stroke field");
    }
  }
  PaintStroke s;
  const auto& mode = field(j, "mode", path);
  if (mode == "guidance") {
    s.mode = StrokeMode::Guidance;
  } else if (mode == "correction") {
    s.mode = StrokeMode::Correction;
  } else {
    throw FieldError(path + ".mode", "must be \"guidance\" or \"correction\"");
  }

  if (auto it = j.find("color"); it != j.end()) {
    const auto cpath = path + ".color";
    if (!it->is_array() || it->size() != 3) throw FieldError(cpath, "must be an array of 3 numbers");
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& v = (*it)[c];
      const auto vpath = cpath + "[" + std::to_string(c) + "]";
      if (!v.is_number()) throw FieldError(vpath, "must be a number");
      const double x = v.get<double>();
      if (!(x >= 0.0 && x <= 1.0)) throw FieldError(vpath, "must lie in [0, 1]");
      s.color[c] = static_cast<float>(x);
    }
  } else if (s.mode == StrokeMode::Guidance) {
    throw FieldError(path + ".color", "is required for guidance strokes");
  }

  if (auto it = j.find("radius"); it != j.end()) {
    s.radius = integer(*it, path + ".radius");
    if (s.radius < 1) throw FieldError(path + ".radius", "must be >= 1");
  }

  const auto& points = field(j, "points", path);
  const auto ppath = path + ".points";
  if (!points.is_array()) throw FieldError(ppath, "must be an array of [x, y] pairs");
  s.points.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto ip = ppath + "[" + std::to_string(i) + "]";
    const auto& p = points[i];
    if (!p.is_array() || p.size() != 2) throw FieldError(ip, "must be an [x, y] pair");
    s.points.push_back({integer(p[0], ip + "[0]"), integer(p[1], ip + "[1]")});
  }
  return s;
}

nlohmann::json stroke_to_json(const PaintStroke& stroke) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : stroke.points) points.push_back({p[0], p[1]});
  return {{"mode", stroke.mode == StrokeMode::Guidance ? "guidance" : "correction"},
          {"color", {stroke.color[0], stroke.color[1], stroke.color[2]}},
          {"radius", stroke.radius},
          {"points", std::move(points)}};
}

std::vector<PaintStroke> strokes_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) throw FieldError(path, "must be an array of strokes");
  std::vector<PaintStroke> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(stroke_from_json(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::vector<ScriptedStroke> stroke_script_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw FieldError("$", "stroke script must be an array");
  std::vector<ScriptedStroke> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto path = "$[" + std::to_string(i) + "]";
    ScriptedStroke s;
    s.stroke = stroke_from_json(j[i], path, true);
    if (auto it = j[i].find("phase"); it != j[i].end()) {
      s.phase = integer(*it, path + ".phase");
      if (s.phase < 1) throw FieldError(path + ".phase", "must be >= 1");
    }
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json stroke_script_to_json(const std::vector<ScriptedStroke>& script) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : script) {
    auto j = stroke_to_json(s.stroke);
    j["phase"] = s.phase;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace idip
