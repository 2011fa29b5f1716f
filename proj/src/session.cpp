#include "idip/session.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "idip/base64.hpp"
#include "idip/error.hpp"
#include "idip/image_io.hpp"
#include "idip/rng.hpp"

namespace idip {

namespace {

constexpr std::uint64_t kPerturbationStream = 2;
constexpr const char* kFormatTag = "idip-session";

nlohmann::json image_payload(const Image& image) {
  return {{"width", image.width}, {"height", image.height}, {"f32", encode_floats(image.pixels)}};
}

Image image_from_payload(const nlohmann::json& j) {
  Image image(j.at("width").get<std::size_t>(), j.at("height").get<std::size_t>());
  auto values = decode_floats(j.at("f32").get<std::string>());
  if (values.size() != image.pixels.size()) throw std::invalid_argument("image payload size mismatch");
  image.pixels = std::move(values);
  return image;
}

std::string mask_payload(const DamageMask& mask) { return base64_encode(encode_mask_png(mask)); }

DamageMask mask_from_payload(const nlohmann::json& j) {
  return decode_mask_png(base64_decode(j.get<std::string>()));
}

SessionStatus parse_status(std::string_view name) {
  if (name == "idle") return SessionStatus::Idle;
  if (name == "stopped") return SessionStatus::Stopped;
  throw std::invalid_argument("session file has non-restorable status '" + std::string(name) + "'");
}

}  // namespace

std::string_view status_name(SessionStatus status) {
  switch (status) {
    case SessionStatus::Idle:
      return "idle";
    case SessionStatus::Optimizing:
      return "optimizing";
    case SessionStatus::Stopped:
      return "stopped";
  }
  return "unknown";
}

RestorationSession::RestorationSession(Restore, std::string id, RestorationConfig config,
                                       Image original, DamageMask original_mask, std::size_t width,
                                       std::size_t height)
    : id_(std::move(id)),
      config_(std::move(config)),
      width_(width),
      height_(height),
      original_(std::move(original)),
      original_mask_(std::move(original_mask)),
      target_(original_),
      mask_(original_mask_),
      presented_(original_),
      network_(config_.network) {
  auto built = build_network<float>(config_.network, config_.seed);
  params_ = std::move(built.second);
  noise_ = make_noise<float>(config_.network.noise_channels, original_.height, original_.width,
                             config_.seed);
}

RestorationSession::RestorationSession(std::string id, const Image& corrupted, const DamageMask& mask,
                                       RestorationConfig config)
    : RestorationSession(Restore{}, std::move(id), config,
                         pad_to_multiple(corrupted, (config.validate(), config.network.size_multiple())),
                         pad_to_multiple(mask, config.network.size_multiple()), corrupted.width,
                         corrupted.height) {
  if (corrupted.width != mask.width() || corrupted.height != mask.height()) {
    throw ShapeError("session image is " + std::to_string(corrupted.width) + "x" +
                     std::to_string(corrupted.height) + " but mask is " + std::to_string(mask.width()) +
                     "x" + std::to_string(mask.height()));
  }
  if (corrupted.width == 0 || corrupted.height == 0) throw ShapeError("session image is empty");
  if (mask.known_count() == 0) {
    throw std::invalid_argument("mask has no known pixels; nothing to optimize against");
  }
}

RestorationSession::~RestorationSession() = default;

Image RestorationSession::original() const { return crop(original_, width_, height_); }
Image RestorationSession::target() const { return crop(target_, width_, height_); }
DamageMask RestorationSession::mask() const { return crop(mask_, width_, height_); }
DamageMask RestorationSession::original_mask() const { return crop(original_mask_, width_, height_); }
Image RestorationSession::presented() const { return crop(presented_, width_, height_); }
Image RestorationSession::refined() const { return crop(composite(target_, presented_, mask_), width_, height_); }

Image RestorationSession::compose(const Tensor<float>& output) const {
  return crop(composite(target_, tensor_to_image(output), mask_), width_, height_);
}

RefinementSummary RestorationSession::apply_refinement(std::span<const PaintStroke> strokes) {
  if (status() == SessionStatus::Optimizing) {
    throw SessionStateError("cannot refine while a phase is optimizing");
  }
  for (const auto& stroke : strokes) {
    if (stroke.radius < 1) throw std::invalid_argument("stroke radius must be >= 1");
    for (float c : stroke.color) {
      if (!(c >= 0.0f && c <= 1.0f)) throw std::invalid_argument("stroke color channels must lie in [0, 1]");
    }
  }
  RefinementSummary summary;
  summary.known_before = mask_.known_count();
  const auto plane = target_.plane_size();
  for (const auto& stroke : strokes) {
    const int reach = stroke.radius - 1;
    const long r2 = static_cast<long>(stroke.radius) * stroke.radius;
    for (const auto& [px, py] : stroke.points) {
      for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
          if (static_cast<long>(dx) * dx + static_cast<long>(dy) * dy >= r2) continue;
          const long x = static_cast<long>(px) + dx;
          const long y = static_cast<long>(py) + dy;
          if (x < 0 || y < 0 || x >= static_cast<long>(width_) || y >= static_cast<long>(height_)) continue;
          const auto ux = static_cast<std::size_t>(x), uy = static_cast<std::size_t>(y);
          const auto index = uy * target_.width + ux;
          if (stroke.mode == StrokeMode::Guidance) {
            if (mask_.known(ux, uy)) continue;
            for (std::size_t c = 0; c < Image::kChannels; ++c) target_.pixels[c * plane + index] = stroke.color[c];
            mask_.set_known(ux, uy, true);
            ++summary.pixels_changed;
          } else {
            bool changed = mask_.known(ux, uy);
            for (std::size_t c = 0; c < Image::kChannels; ++c) {
              auto& v = target_.pixels[c * plane + index];
              const float original = original_.pixels[c * plane + index];
              changed = changed || v != original;
              v = original;
            }
            mask_.set_known(ux, uy, false);
            if (changed) ++summary.pixels_changed;
          }
        }
      }
    }
  }
  summary.known_after = mask_.known_count();
  return summary;
}

std::shared_ptr<const SessionSnapshot> RestorationSession::run_phase(int iterations,
                                                                     const PhaseObserver& observer) {
  if (iterations < 1) throw std::invalid_argument("phase iterations must be >= 1");
  {
    std::lock_guard lock(control_mutex_);
    if (status_ == SessionStatus::Optimizing) throw SessionStateError("a phase is already optimizing");
    if (mask_.known_count() == 0) throw SessionStateError("mask has no known pixels; nothing to optimize against");
    stop_source_ = std::stop_source{};
    status_ = SessionStatus::Optimizing;
  }
  const auto started = std::chrono::steady_clock::now();
  const auto target = image_to_tensor<float>(target_);
  OptimizeOptions options;
  options.iterations = iterations;
  options.adam = config_.adam;
  options.noise_perturbation = config_.noise_perturbation;
  options.perturbation_seed = mix_seed(config_.seed, kPerturbationStream);
  options.stop = stop_source_.get_token();
  const int phase = phase_;
  IterationObserver<float> forward;
  if (observer) {
    forward = [&](const IterationEvent<float>& e) { observer(PhaseProgress{phase, e.iteration, e.loss, e.output}); };
  }

  OptimizeResult<float> result;
  try {
    result = optimize(OptimizationProblem<float>{network_, params_, noise_, target, mask_}, options, forward);
  } catch (...) {
    std::lock_guard lock(control_mutex_);
    status_ = SessionStatus::Idle;
    throw;
  }

  auto snapshot = std::make_shared<SessionSnapshot>();
  const Image restored = composite(target_, tensor_to_image(result.output), mask_);
  snapshot->phase = phase;
  snapshot->presented = crop(presented_, width_, height_);
  snapshot->refined = refined();
  snapshot->restored = crop(restored, width_, height_);
  snapshot->mask = crop(mask_, width_, height_);
  snapshot->loss_trace = std::move(result.trace);
  snapshot->duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  snapshot->stopped_early = result.cancelled;

  presented_ = restored;
  history_.push_back(snapshot);
  phase_ += 1;
  {
    std::lock_guard lock(control_mutex_);
    status_ = result.cancelled ? SessionStatus::Stopped : SessionStatus::Idle;
  }
  return snapshot;
}

void RestorationSession::stop() {
  std::lock_guard lock(control_mutex_);
  if (status_ == SessionStatus::Optimizing) stop_source_.request_stop();
}

nlohmann::json RestorationSession::to_json() const {
  if (status() == SessionStatus::Optimizing) throw SessionStateError("only idle sessions can be saved");
  nlohmann::json j;
  j["format"] = kFormatTag;
  j["version"] = kFormatVersion;
  j["id"] = id_;
  j["config"] = config_to_json(config_);
  j["status"] = std::string(status_name(status()));
  j["phase"] = phase_;
  j["width"] = width_;
  j["height"] = height_;
  j["original"] = image_payload(original_);
  j["original_mask"] = mask_payload(original_mask_);
  j["target"] = image_payload(target_);
  j["mask"] = mask_payload(mask_);
  j["presented"] = image_payload(presented_);
  j["step"] = params_.step;
  auto& params = j["parameters"] = nlohmann::json::array();
  for (const auto& e : params_.entries()) {
    params.push_back({{"name", e.name},
                      {"shape", e.value.shape()},
                      {"value", encode_floats(e.value.data())},
                      {"first_moment", encode_floats(e.first_moment)},
                      {"second_moment", encode_floats(e.second_moment)}});
  }
  auto& history = j["history"] = nlohmann::json::array();
  for (const auto& s : history_) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& l : s->loss_trace) trace.push_back({l.iteration, l.value});
    history.push_back({{"phase", s->phase},
                       {"presented", image_payload(s->presented)},
                       {"refined", image_payload(s->refined)},
                       {"restored", image_payload(s->restored)},
                       {"mask", mask_payload(s->mask)},
                       {"loss_trace", std::move(trace)},
                       {"duration_seconds", s->duration_seconds},
                       {"stopped_early", s->stopped_early}});
  }
  return j;
}

std::unique_ptr<RestorationSession> RestorationSession::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormatTag) throw std::invalid_argument("not an idip session file");
    const int version = j.at("version").get<int>();
    if (version != kFormatVersion) {
      throw std::invalid_argument("unsupported session format version " + std::to_string(version));
    }
    auto config = config_from_json(j.at("config"));
    auto original = image_from_payload(j.at("original"));
    auto original_mask = mask_from_payload(j.at("original_mask"));
    std::unique_ptr<RestorationSession> s(new RestorationSession(
        Restore{}, j.at("id").get<std::string>(), config, std::move(original), std::move(original_mask),
        j.at("width").get<std::size_t>(), j.at("height").get<std::size_t>()));
    s->target_ = image_from_payload(j.at("target"));
    s->mask_ = mask_from_payload(j.at("mask"));
    s->presented_ = image_from_payload(j.at("presented"));
    s->phase_ = j.at("phase").get<int>();
    s->status_ = parse_status(j.at("status").get<std::string>());
    const auto& params = j.at("parameters");
    auto& entries = s->params_.entries();
    if (params.size() != entries.size()) throw std::invalid_argument("parameter count does not match the config");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& p = params[i];
      auto& e = entries[i];
      if (p.at("name").get<std::string>() != e.name || p.at("shape").get<Shape>() != e.value.shape()) {
        throw std::invalid_argument("parameter " + e.name + " does not match the config layout");
      }
      auto value = decode_floats(p.at("value").get<std::string>());
      auto m = decode_floats(p.at("first_moment").get<std::string>());
      auto v = decode_floats(p.at("second_moment").get<std::string>());
      if (value.size() != e.value.size() || m.size() != value.size() || v.size() != value.size()) {
        throw std::invalid_argument("parameter " + e.name + " payload has the wrong length");
      }
      std::copy(value.begin(), value.end(), e.value.mutable_data().begin());
      e.first_moment = std::move(m);
      e.second_moment = std::move(v);
    }
    s->params_.step = j.at("step").get<std::int64_t>();
    for (const auto& h : j.at("history")) {
      auto snap = std::make_shared<SessionSnapshot>();
      snap->phase = h.at("phase").get<int>();
      snap->presented = image_from_payload(h.at("presented"));
      snap->refined = image_from_payload(h.at("refined"));
      snap->restored = image_from_payload(h.at("restored"));
      snap->mask = mask_from_payload(h.at("mask"));
      for (const auto& l : h.at("loss_trace")) snap->loss_trace.push_back({l.at(1).get<double>(), l.at(0).get<int>()});
      snap->duration_seconds = h.at("duration_seconds").get<double>();
      snap->stopped_early = h.at("stopped_early").get<bool>();
      s->history_.push_back(std::move(snap));
    }
    if (static_cast<int>(s->history_.size()) != s->phase_) {
      throw std::invalid_argument("session history length does not match the phase counter");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed session file: ") + e.what());
  }
}

void RestorationSession::save(const std::filesystem::path& path) const {
  const auto text = to_json().dump();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write session file " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<RestorationSession> RestorationSession::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open session file " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

}  // namespace idip
