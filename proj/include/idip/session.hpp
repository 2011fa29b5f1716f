#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "idip/config.hpp"
#include "idip/dip.hpp"
#include "idip/image.hpp"
#include "idip/network.hpp"

namespace idip {

enum class SessionStatus { Idle, Optimizing, Stopped };
std::string_view status_name(SessionStatus status);

enum class StrokeMode { Guidance, Correction };

/// A brush stroke in image coordinates. Each point covers the pixels strictly
/// within `radius` of it (radius 1 covers the point alone); coverage outside
/// the image is clipped.
struct PaintStroke {
  StrokeMode mode = StrokeMode::Guidance;
  std::array<float, 3> color{0.0f, 0.0f, 0.0f};
  int radius = 1;
  std::vector<std::array<int, 2>> points;  // (x, y)
};

struct RefinementSummary {
  std::size_t known_before = 0;
  std::size_t known_after = 0;
  std::size_t pixels_changed = 0;
};

/// Immutable record of one optimization phase.
struct SessionSnapshot {
  int phase = 0;
  Image presented;  // x_n, shown before the refinement
  Image refined;    // x_n', the image the phase optimized against
  Image restored;   // x_n*, known pixels from x_n', damaged from the network
  DamageMask mask;
  std::vector<LossValue> loss_trace;
  double duration_seconds = 0.0;
  bool stopped_early = false;
};

struct PhaseProgress {
  int phase;
  int iteration;
  double loss;
  const Tensor<float>& output;
};

using PhaseObserver = std::function<void(const PhaseProgress&)>;

/// Interactive restoration loop: present x_n, refine it by painting, then
/// optimize again starting from the previous phase's parameters.
///
/// Not thread-safe except for stop() and status(), which may be called from
/// any thread while run_phase() is running on another.
class RestorationSession {
 public:
  /// Images that are not a multiple of 2^depth are reflection-padded; all
  /// accessors return the original size.
  RestorationSession(std::string id, const Image& corrupted, const DamageMask& mask,
                     RestorationConfig config);
  ~RestorationSession();

  RestorationSession(const RestorationSession&) = delete;
  RestorationSession& operator=(const RestorationSession&) = delete;

  /// Guidance paints damaged pixels and makes them known; correction marks
  /// pixels damaged and restores their corrupted values. Strokes apply in
  /// order. Rejected while optimizing.
  RefinementSummary apply_refinement(std::span<const PaintStroke> strokes);

  /// One optimization phase against the current refined image and mask.
  std::shared_ptr<const SessionSnapshot> run_phase(int iterations, const PhaseObserver& observer = {});

  /// Ends a running phase at the next iteration boundary. No-op when idle.
  void stop();

  const std::string& id() const { return id_; }
  const RestorationConfig& config() const { return config_; }
  std::uint64_t seed() const { return config_.seed; }
  /// Number of completed phases.
  int phase() const { return phase_; }
  SessionStatus status() const { return status_.load(); }
  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }

  Image original() const;
  Image target() const;
  DamageMask mask() const;
  DamageMask original_mask() const;
  /// x_n: the corrupted image before the first phase, else the last restoration.
  Image presented() const;
  /// x_n': presented image with the current known pixels substituted.
  Image refined() const;
  const std::vector<std::shared_ptr<const SessionSnapshot>>& history() const { return history_; }

  /// Composite of the current target and a network output, cropped.
  Image compose(const Tensor<float>& output) const;

  std::uint64_t parameter_checksum() const { return params_.checksum(); }
  const ModelParameters<float>& parameters() const { return params_; }

  /// Lossless container of the full idle state (format tag "idip-session").
  nlohmann::json to_json() const;
  static std::unique_ptr<RestorationSession> from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<RestorationSession> load(const std::filesystem::path& path);

  static constexpr int kFormatVersion = 1;

 private:
  struct Restore {};
  RestorationSession(Restore, std::string id, RestorationConfig config, Image original,
                     DamageMask original_mask, std::size_t width, std::size_t height);

  std::string id_;
  RestorationConfig config_;
  std::size_t width_;
  std::size_t height_;

  Image original_;  // x_0, padded
  DamageMask original_mask_;
  Image target_;    // x_0 with guidance paint on known pixels
  DamageMask mask_;
  Image presented_;

  DipNetwork<float> network_;
  ModelParameters<float> params_;
  Tensor<float> noise_;

  int phase_ = 0;
  std::vector<std::shared_ptr<const SessionSnapshot>> history_;

  std::atomic<SessionStatus> status_{SessionStatus::Idle};
  mutable std::mutex control_mutex_;
  std::stop_source stop_source_;
};

}  // namespace idip
