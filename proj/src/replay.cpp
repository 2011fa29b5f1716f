#include "idip/replay.hpp"

#include <cmath>
#include <stdexcept>

namespace idip {

ReplayResult replay(const TripletData& triplet, const ReplayOptions& options) {
  if (options.phases < 1) throw std::invalid_argument("replay needs at least one phase");
  const int iterations =
      options.iterations_per_phase > 0 ? options.iterations_per_phase : options.config.iterations_per_phase;
  for (const auto& s : options.script) {
    if (s.phase < 1 || s.phase >= options.phases) {
      throw std::invalid_argument("stroke script phase " + std::to_string(s.phase) + " is outside [1, " +
                                  std::to_string(options.phases - 1) + "]");
    }
  }

  RestorationSession session(triplet.id, triplet.corrupted, triplet.mask, options.config);
  ReplayResult result;
  for (int phase = 0; phase < options.phases; ++phase) {
    if (phase > 0) {
      std::vector<PaintStroke> strokes;
      for (const auto& s : options.script) {
        if (s.phase == phase) strokes.push_back(s.stroke);
      }
      session.apply_refinement(strokes);
    }
    result.snapshots.push_back(session.run_phase(iterations, options.observer));
  }
  result.restored = result.snapshots.back()->restored;
  return result;
}

ReplayResult restore(const TripletData& triplet, const RestorationConfig& config, int iterations,
                     const PhaseObserver& observer) {
  ReplayOptions options;
  options.config = config;
  options.phases = 1;
  options.iterations_per_phase = iterations;
  options.observer = observer;
  return replay(triplet, options);
}

std::vector<ScriptedStroke> truth_guidance_script(const TripletData& triplet, double fraction, int phase) {
  if (!triplet.truth) throw std::invalid_argument("triplet " + triplet.id + " has no truth image");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must be in [0, 1]");
  const Image& truth = *triplet.truth;
  const DamageMask& mask = triplet.mask;
  const auto budget = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(mask.damaged_count())));

  std::vector<ScriptedStroke> script;
  script.reserve(budget);
  for (std::size_t y = 0; y < mask.height() && script.size() < budget; ++y) {
    for (std::size_t x = 0; x < mask.width() && script.size() < budget; ++x) {
      if (mask.known(x, y)) continue;
      ScriptedStroke s;
      s.phase = phase;
      s.stroke.mode = StrokeMode::Guidance;
      s.stroke.radius = 1;
      for (std::size_t c = 0; c < 3; ++c) s.stroke.color[c] = truth.at(c, y, x);
      s.stroke.points = {{static_cast<int>(x), static_cast<int>(y)}};
      script.push_back(std::move(s));
    }
  }
  return script;
}

}  // namespace idip
