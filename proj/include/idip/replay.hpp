#pragma once

#include <memory>
#include <vector>

#include "idip/config.hpp"
#include "idip/image_io.hpp"
#include "idip/session.hpp"
#include "idip/stroke_json.hpp"

namespace idip {

struct ReplayOptions {
  RestorationConfig config{};
  int phases = 2;
  /// <= 0 uses config.iterations_per_phase.
  int iterations_per_phase = 0;
  /// Strokes with phase p are applied after the p-th phase completes.
  std::vector<ScriptedStroke> script;
  PhaseObserver observer{};
};

struct ReplayResult {
  Image restored;
  std::vector<std::shared_ptr<const SessionSnapshot>> snapshots;
};

/// Headless iDIP run: phase, scripted refinement, phase, ...
ReplayResult replay(const TripletData& triplet, const ReplayOptions& options);

/// Plain DIP: one phase of `iterations` with no refinement.
ReplayResult restore(const TripletData& triplet, const RestorationConfig& config, int iterations,
                     const PhaseObserver& observer = {});

/// Guidance dabs (radius 1) carrying ground-truth colours for the first
/// round(fraction * damaged) damaged pixels in raster order. Needs truth.
std::vector<ScriptedStroke> truth_guidance_script(const TripletData& triplet, double fraction, int phase = 1);

}  // namespace idip
