#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "idip/config.hpp"
#include "idip/metrics.hpp"
#include "idip/session.hpp"

namespace httplib {
class Server;
}

namespace idip {

struct ServiceOptions {
  std::size_t workers = 2;
  std::size_t max_payload_bytes = 32u << 20;
  int progress_every = 25;
  std::size_t preview_max_side = 256;
  std::size_t event_history = 1024;
  int max_phase_iterations = 100000;
  std::optional<std::filesystem::path> state_dir;
  RestorationConfig defaults{};
};

/// Request failure with an HTTP status and a machine-readable code.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message, std::string field = {})
      : std::runtime_error(message), status_(status), code_(std::move(code)), field_(std::move(field)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const std::string& field() const { return field_; }
  nlohmann::json to_json() const;

 private:
  int status_;
  std::string code_;
  std::string field_;
};

struct SessionView {
  std::string id;
  int phase = 0;
  SessionStatus status = SessionStatus::Idle;
  bool queued = false;
  std::size_t width = 0;
  std::size_t height = 0;
  double known_fraction = 0.0;
  std::optional<double> latest_loss;
  std::uint64_t sequence = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  friend bool operator==(const SessionView&, const SessionView&) = default;
};

/// One message on a session's progress stream. Types: "progress" (throttled,
/// carries a downscaled preview), "snapshot" (phase end, full-resolution
/// composite), "cancelled" (stopped before it started), "error" (aborted).
struct StreamEvent {
  std::uint64_t sequence = 0;
  std::string type;
  nlohmann::json data;

  /// Ends the current phase's stream.
  bool terminal() const { return type != "progress"; }
  std::string to_sse() const;
};

/// Multi-session host: a bounded worker pool runs phases; request-side calls
/// never wait on optimization.
class SessionManager {
 public:
  explicit SessionManager(ServiceOptions options = {});
  ~SessionManager();

  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  const ServiceOptions& options() const { return options_; }

  /// Body: {image: base64 PNG, mask: base64 PNG, id?, seed?, config?}.
  SessionView create(const nlohmann::json& body);
  SessionView create(std::string id, const Image& image, const DamageMask& mask, RestorationConfig config);

  SessionView view(const std::string& id) const;
  std::vector<SessionView> list() const;

  std::pair<RefinementSummary, SessionView> refine(const std::string& id, const std::vector<PaintStroke>& strokes);
  /// Queues a phase; `iterations` <= 0 uses the session's iterations_per_phase.
  SessionView start_phase(const std::string& id, int iterations = 0);
  SessionView stop(const std::string& id);
  void remove(const std::string& id);

  /// Events with sequence > `after`, waiting up to `timeout` for the first.
  std::vector<StreamEvent> events_after(const std::string& id, std::uint64_t after,
                                        std::chrono::milliseconds timeout) const;
  /// Blocks until the session has no queued or running phase.
  SessionView wait_idle(const std::string& id, std::chrono::milliseconds timeout) const;

  Image result(const std::string& id) const;
  Image original(const std::string& id) const;
  DamageMask mask(const std::string& id) const;
  MetricReport metrics(const std::string& id, const Image& truth, std::size_t window_k) const;

  /// Stops every phase and joins the workers.
  void shutdown();

 private:
  struct Entry;
  struct Job {
    std::shared_ptr<Entry> entry;
    int iterations;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  std::string allocate_id(const std::string& requested);
  void worker_loop();
  void run_job(const Job& job);
  void persist(Entry& entry) const;
  void load_state_dir();
  SessionView make_view(const Entry& entry) const;

  ServiceOptions options_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<Job> queue_;
  bool shutting_down_ = false;
  std::vector<std::thread> workers_;
};

/// JSON-over-HTTP front end; every route lives under /v1.
class HttpService {
 public:
  explicit HttpService(SessionManager& manager);
  ~HttpService();

  /// Binds `host:port` (port 0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();

  SessionManager& manager_;
  std::unique_ptr<httplib::Server> server_;
  int port_ = -1;
};

}  // namespace idip
