#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idip/session.hpp"

namespace idip {

/// Malformed request body; `field` is a path such as "strokes[2].color[1]".
class FieldError : public std::invalid_argument {
 public:
  FieldError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// {mode: "guidance"|"correction", color: [r,g,b], radius: int, points: [[x,y],...]}
PaintStroke stroke_from_json(const nlohmann::json& j, const std::string& path, bool allow_phase = false);
nlohmann::json stroke_to_json(const PaintStroke& stroke);

std::vector<PaintStroke> strokes_from_json(const nlohmann::json& j, const std::string& path);

/// Stroke script entry: a stroke plus the index of the phase boundary it is
/// applied at (phase 1 = after the first phase).
struct ScriptedStroke {
  int phase = 1;
  PaintStroke stroke;
};

/// A JSON array of stroke objects, each with an integer "phase" >= 1.
std::vector<ScriptedStroke> stroke_script_from_json(const nlohmann::json& j);
nlohmann::json stroke_script_to_json(const std::vector<ScriptedStroke>& script);

}  // namespace idip
