#include "idip/service.hpp"

#include <httplib.h>

#include <atomic>
#include <fstream>
#include <iostream>
#include <regex>

#include "idip/base64.hpp"
#include "idip/error.hpp"
#include "idip/image_io.hpp"
#include "idip/stroke_json.hpp"

namespace idip {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxImageSide = 4096;
const std::regex kIdPattern("[A-Za-z0-9_-]{1,64}");

ServiceError not_found(const std::string& id) {
  return ServiceError(404, "not_found", "no session '" + id + "'");
}

ServiceError conflict(const std::string& message) { return ServiceError(409, "conflict", message); }

ServiceError bad_request(const std::string& field, const std::string& message) {
  return ServiceError(400, "bad_request", field + ": " + message, field);
}

std::vector<std::uint8_t> decode_field(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end()) throw bad_request(key, "is required");
  if (!it->is_string()) throw bad_request(key, "must be a base64 PNG string");
  try {
    return base64_decode(it->get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw bad_request(key, e.what());
  }
}

Image image_field(const json& body, const char* key) {
  auto bytes = decode_field(body, key);
  try {
    return decode_png(bytes);
  } catch (const ImageError& e) {
    throw bad_request(key, e.what());
  }
}

DamageMask mask_field(const json& body, const char* key) {
  auto bytes = decode_field(body, key);
  try {
    return decode_mask_png(bytes);
  } catch (const ImageError& e) {
    throw bad_request(key, e.what());
  }
}

json image_payload(const Image& image) {
  return {{"width", image.width}, {"height", image.height}, {"png", base64_encode(encode_png(image))}};
}

std::optional<double> last_loss(const RestorationSession& s) {
  for (auto it = s.history().rbegin(); it != s.history().rend(); ++it) {
    if (!(*it)->loss_trace.empty()) return (*it)->loss_trace.back().value;
  }
  return std::nullopt;
}

}  // namespace

json ServiceError::to_json() const {
  json error = {{"code", code_}, {"message", what()}};
  if (!field_.empty()) error["field"] = field_;
  return {{"error", std::move(error)}};
}

json SessionView::to_json() const {
  return {{"id", id},
          {"phase", phase},
          {"status", std::string(status_name(status))},
          {"queued", queued},
          {"width", width},
          {"height", height},
          {"known_fraction", known_fraction},
          {"latest_loss", latest_loss ? json(*latest_loss) : json(nullptr)},
          {"sequence", sequence},
          {"seed", seed}};
}

std::string StreamEvent::to_sse() const {
  return "id: " + std::to_string(sequence) + "\nevent: " + type + "\ndata: " + data.dump() + "\n\n";
}

// Everything except `session` and `stop_requested` is guarded by `mutex`.
// The session itself is touched by request handlers only while !busy, and by
// the worker only while busy.
struct SessionManager::Entry {
  std::string id;
  std::unique_ptr<RestorationSession> session;

  mutable std::mutex mutex;
  mutable std::condition_variable changed;
  bool busy = false;
  bool queued = false;
  bool cancel_queued = false;
  std::atomic<bool> stop_requested{false};

  int phase = 0;
  SessionStatus status = SessionStatus::Idle;
  double known_fraction = 0.0;
  std::optional<double> latest_loss;
  Image result;
  DamageMask mask;

  std::deque<StreamEvent> events;
  std::uint64_t sequence = 0;

  // Caller holds `mutex` and the session is not optimizing.
  void refresh() {
    phase = session->phase();
    status = session->status();
    mask = session->mask();
    known_fraction = mask.known_fraction();
    result = session->presented();
    latest_loss = last_loss(*session);
  }

  void push(std::string type, json data, std::size_t limit) {
    events.push_back({++sequence, std::move(type), std::move(data)});
    while (events.size() > limit) events.pop_front();
    changed.notify_all();
  }
};

SessionManager::SessionManager(ServiceOptions options) : options_(std::move(options)) {
  if (options_.workers == 0) throw std::invalid_argument("service needs at least one worker");
  if (options_.progress_every < 1) throw std::invalid_argument("progress cadence must be >= 1");
  options_.defaults.validate();
  if (options_.state_dir) {
    fs::create_directories(*options_.state_dir);
    load_state_dir();
  }
  for (std::size_t i = 0; i < options_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

SessionManager::~SessionManager() { shutdown(); }

void SessionManager::shutdown() {
  {
    std::lock_guard lock(queue_mutex_);
    if (shutting_down_ && workers_.empty()) return;
    shutting_down_ = true;
  }
  {
    std::lock_guard lock(sessions_mutex_);
    for (auto& [id, entry] : sessions_) {
      std::lock_guard elock(entry->mutex);
      entry->cancel_queued = entry->queued;
      entry->stop_requested = true;
      entry->session->stop();
    }
  }
  queue_cv_.notify_all();
  for (auto& w : workers_) w.join();
  workers_.clear();
}

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw not_found(id);
  return it->second;
}

std::string SessionManager::allocate_id(const std::string& requested) {
  if (!requested.empty()) {
    if (!std::regex_match(requested, kIdPattern)) {
      throw bad_request("id", "must be 1-64 characters from [A-Za-z0-9_-]");
    }
    if (sessions_.count(requested)) throw conflict("session '" + requested + "' already exists");
    return requested;
  }
  std::string id;
  do {
    id = "session-" + std::to_string(next_id_++);
  } while (sessions_.count(id));
  return id;
}

SessionView SessionManager::make_view(const Entry& e) const {
  SessionView v;
  v.id = e.id;
  v.phase = e.phase;
  v.status = e.busy ? SessionStatus::Optimizing : e.status;
  v.queued = e.queued;
  v.width = e.result.width;
  v.height = e.result.height;
  v.known_fraction = e.known_fraction;
  v.latest_loss = e.latest_loss;
  v.sequence = e.sequence;
  v.seed = e.session->seed();
  return v;
}

SessionView SessionManager::create(const json& body) {
  if (!body.is_object()) throw bad_request("$", "request body must be a JSON object");
  for (const auto& [key, value] : body.items()) {
    if (key != "image" && key != "mask" && key != "id" && key != "seed" && key != "config") {
      throw bad_request(key, "is not a session field");
    }
  }
  Image image = image_field(body, "image");
  DamageMask mask = mask_field(body, "mask");
  RestorationConfig config = options_.defaults;
  if (auto it = body.find("config"); it != body.end()) {
    try {
      config = config_from_json(*it, options_.defaults);
    } catch (const std::exception& e) {
      throw bad_request("config", e.what());
    }
  }
  if (auto it = body.find("seed"); it != body.end()) {
    if (!it->is_number_unsigned()) throw bad_request("seed", "must be a non-negative integer");
    config.seed = it->get<std::uint64_t>();
  }
  std::string id;
  if (auto it = body.find("id"); it != body.end()) {
    if (!it->is_string()) throw bad_request("id", "must be a string");
    id = it->get<std::string>();
  }
  return create(std::move(id), image, mask, std::move(config));
}

SessionView SessionManager::create(std::string id, const Image& image, const DamageMask& mask,
                                   RestorationConfig config) {
  if (image.width > kMaxImageSide || image.height > kMaxImageSide) {
    throw bad_request("image", "sides are limited to " + std::to_string(kMaxImageSide) + " pixels");
  }
  if (image.width != mask.width() || image.height != mask.height()) {
    throw bad_request("mask", "size " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                                  " does not match the image " + std::to_string(image.width) + "x" +
                                  std::to_string(image.height));
  }
  if (mask.known_count() == 0) throw bad_request("mask", "has no known pixels");

  std::lock_guard lock(sessions_mutex_);
  auto entry = std::make_shared<Entry>();
  entry->id = allocate_id(id);
  entry->session = std::make_unique<RestorationSession>(entry->id, image, mask, std::move(config));
  std::lock_guard elock(entry->mutex);
  entry->refresh();
  persist(*entry);
  sessions_.emplace(entry->id, entry);
  return make_view(*entry);
}

SessionView SessionManager::view(const std::string& id) const {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  return make_view(*e);
}

std::vector<SessionView> SessionManager::list() const {
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::lock_guard lock(sessions_mutex_);
    for (const auto& [id, e] : sessions_) entries.push_back(e);
  }
  std::vector<SessionView> out;
  for (const auto& e : entries) {
    std::lock_guard lock(e->mutex);
    out.push_back(make_view(*e));
  }
  return out;
}

std::pair<RefinementSummary, SessionView> SessionManager::refine(const std::string& id,
                                                                 const std::vector<PaintStroke>& strokes) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  if (e->busy) throw conflict("session '" + id + "' is optimizing; strokes are accepted between phases");
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    const auto& s = strokes[i];
    for (std::size_t p = 0; p < s.points.size(); ++p) {
      const auto [x, y] = s.points[p];
      // Far-away points cannot reach the image; reject them as malformed.
      const long limit = static_cast<long>(kMaxImageSide) * 4;
      if (std::abs(static_cast<long>(x)) > limit || std::abs(static_cast<long>(y)) > limit) {
        throw bad_request("strokes[" + std::to_string(i) + "].points[" + std::to_string(p) + "]",
                          "coordinate is implausibly far outside the image");
      }
    }
  }
  auto summary = e->session->apply_refinement(strokes);
  e->refresh();
  persist(*e);
  return {summary, make_view(*e)};
}

SessionView SessionManager::start_phase(const std::string& id, int iterations) {
  auto e = find(id);
  std::unique_lock lock(e->mutex);
  if (iterations <= 0) iterations = e->session->config().iterations_per_phase;
  if (iterations > options_.max_phase_iterations) {
    throw bad_request("iterations", "must be <= " + std::to_string(options_.max_phase_iterations));
  }
  if (e->busy) throw conflict("session '" + id + "' already has a phase queued or running");
  if (e->mask.known_count() == 0) throw conflict("session '" + id + "' has no known pixels to fit");
  {
    std::lock_guard qlock(queue_mutex_);
    if (shutting_down_) throw ServiceError(503, "shutting_down", "service is shutting down");
    e->busy = true;
    e->queued = true;
    e->cancel_queued = false;
    e->stop_requested = false;
    queue_.push_back({e, iterations});
  }
  queue_cv_.notify_one();
  return make_view(*e);
}

SessionView SessionManager::stop(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  if (e->queued) {
    e->cancel_queued = true;
  } else if (e->busy) {
    e->stop_requested = true;
    e->session->stop();
  }
  return make_view(*e);
}

void SessionManager::remove(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw not_found(id);
  {
    std::lock_guard elock(it->second->mutex);
    if (it->second->busy) throw conflict("session '" + id + "' is optimizing; stop it first");
    it->second->changed.notify_all();
  }
  if (options_.state_dir) fs::remove(*options_.state_dir / (id + ".json"));
  sessions_.erase(it);
}

std::vector<StreamEvent> SessionManager::events_after(const std::string& id, std::uint64_t after,
                                                      std::chrono::milliseconds timeout) const {
  auto e = find(id);
  std::unique_lock lock(e->mutex);
  e->changed.wait_for(lock, timeout, [&] { return e->sequence > after; });
  std::vector<StreamEvent> out;
  for (const auto& ev : e->events) {
    if (ev.sequence > after) out.push_back(ev);
  }
  return out;
}

SessionView SessionManager::wait_idle(const std::string& id, std::chrono::milliseconds timeout) const {
  auto e = find(id);
  std::unique_lock lock(e->mutex);
  if (!e->changed.wait_for(lock, timeout, [&] { return !e->busy; })) {
    throw ServiceError(504, "timeout", "session '" + id + "' is still optimizing");
  }
  return make_view(*e);
}

Image SessionManager::result(const std::string& id) const {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  return e->result;
}

Image SessionManager::original(const std::string& id) const {
  auto e = find(id);
  // The original never changes after creation.
  return e->session->original();
}

DamageMask SessionManager::mask(const std::string& id) const {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  return e->mask;
}

MetricReport SessionManager::metrics(const std::string& id, const Image& truth, std::size_t window_k) const {
  const Image restored = result(id);
  if (truth.width != restored.width || truth.height != restored.height) {
    throw bad_request("truth", "size does not match the session image");
  }
  if (window_k < 1 || window_k > std::min(truth.width, truth.height)) {
    throw bad_request("window_k", "must lie in [1, min(width, height)]");
  }
  return evaluate(restored, truth, window_k, id);
}

void SessionManager::worker_loop() {
  for (;;) {
    Job job;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return shutting_down_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    run_job(job);
  }
}

void SessionManager::run_job(const Job& job) {
  Entry& e = *job.entry;
  RestorationSession& s = *e.session;
  {
    std::lock_guard lock(e.mutex);
    e.queued = false;
    if (e.cancel_queued) {
      e.cancel_queued = false;
      e.busy = false;
      e.push("cancelled", {{"phase", e.phase}}, options_.event_history);
      return;
    }
  }

  const int phase = s.phase();
  const int total = job.iterations;
  auto observer = [&](const PhaseProgress& p) {
    if (e.stop_requested) s.stop();
    if (p.iteration % options_.progress_every != 0 && p.iteration != total) return;
    const Image preview = downscale_nearest(s.compose(p.output), options_.preview_max_side);
    json data = {{"phase", phase},
                 {"iteration", p.iteration},
                 {"iterations", total},
                 {"loss", p.loss},
                 {"preview", image_payload(preview)}};
    std::lock_guard lock(e.mutex);
    e.latest_loss = p.loss;
    e.push("progress", std::move(data), options_.event_history);
  };

  std::shared_ptr<const SessionSnapshot> snapshot;
  std::string failure;
  int failed_at = 0;
  try {
    snapshot = s.run_phase(total, observer);
  } catch (const OptimizationAborted& ex) {
    failure = ex.what();
    failed_at = ex.iteration();
  } catch (const std::exception& ex) {
    failure = ex.what();
  }

  std::lock_guard lock(e.mutex);
  e.refresh();
  e.busy = false;
  e.stop_requested = false;
  if (snapshot) {
    const auto& trace = snapshot->loss_trace;
    e.push("snapshot",
           {{"phase", snapshot->phase},
            {"iterations_run", trace.size()},
            {"stopped_early", snapshot->stopped_early},
            {"duration_seconds", snapshot->duration_seconds},
            {"final_loss", trace.empty() ? json(nullptr) : json(trace.back().value)},
            {"known_fraction", e.known_fraction},
            {"image", image_payload(snapshot->restored)}},
           options_.event_history);
  } else {
    e.push("error", {{"phase", phase}, {"iteration", failed_at}, {"message", failure}}, options_.event_history);
  }
  try {
    persist(e);
  } catch (const std::exception& ex) {
    std::cerr << "idip: cannot persist session " << e.id << ": " << ex.what() << "\n";
  }
}

void SessionManager::persist(Entry& e) const {
  if (!options_.state_dir) return;
  const auto path = *options_.state_dir / (e.id + ".json");
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << json{{"sequence", e.sequence}, {"session", e.session->to_json()}}.dump();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void SessionManager::load_state_dir() {
  std::vector<fs::path> files;
  for (const auto& item : fs::directory_iterator(*options_.state_dir)) {
    if (item.is_regular_file() && item.path().extension() == ".json") files.push_back(item.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    try {
      std::ifstream in(path, std::ios::binary);
      const auto j = json::parse(in);
      auto entry = std::make_shared<Entry>();
      entry->session = RestorationSession::from_json(j.at("session"));
      entry->id = entry->session->id();
      entry->sequence = j.at("sequence").get<std::uint64_t>();
      entry->refresh();
      sessions_.emplace(entry->id, std::move(entry));
    } catch (const std::exception& ex) {
      std::cerr << "idip: skipping unreadable session file " << path << ": " << ex.what() << "\n";
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ServiceError(400, "malformed_json", std::string("request body is not valid JSON: ") + e.what(), "$");
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_png(httplib::Response& res, std::vector<std::uint8_t> bytes) {
  res.status = 200;
  res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const ServiceError& e) {
      send_json(res, e.status(), e.to_json());
    } catch (const FieldError& e) {
      send_json(res, 400, ServiceError(400, "bad_request", e.what(), e.field()).to_json());
    } catch (const SessionStateError& e) {
      send_json(res, 409, conflict(e.what()).to_json());
    } catch (const std::invalid_argument& e) {
      send_json(res, 400, ServiceError(400, "bad_request", e.what()).to_json());
    } catch (const std::exception& e) {
      send_json(res, 500, ServiceError(500, "internal", e.what()).to_json());
    }
  };
}

const char* kSession = R"(/v1/sessions/([A-Za-z0-9_-]+))";

std::string route(const char* suffix) { return std::string(kSession) + suffix; }

}  // namespace

HttpService::HttpService(SessionManager& manager)
    : manager_(manager), server_(std::make_unique<httplib::Server>()) {
  server_->set_payload_max_length(manager_.options().max_payload_bytes);
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  install_routes();
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port_;
}

void HttpService::listen() { server_->listen_after_bind(); }

void HttpService::stop() {
  if (server_) server_->stop();
}

void HttpService::install_routes() {
  auto& svr = *server_;
  auto& m = manager_;

  svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    const std::string code = res.status == 404 ? "not_found"
                             : res.status == 413 ? "payload_too_large"
                                                 : "http_" + std::to_string(res.status);
    const std::string message = res.status == 404 ? "no route for " + req.method + " " + req.path
                                : res.status == 413 ? "request body exceeds the upload limit"
                                                    : httplib::status_message(res.status);
    res.set_content(ServiceError(res.status, code, message).to_json().dump(), "application/json");
    return httplib::Server::HandlerResponse::Handled;
  });

  svr.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID");
    res.status = 204;
  });

  svr.Get("/v1/health", guarded([](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  }));

  svr.Get("/v1/sessions", guarded([&m](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const auto& v : m.list()) list.push_back(v.to_json());
    send_json(res, 200, {{"sessions", std::move(list)}});
  }));

  svr.Post("/v1/sessions", guarded([&m](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 201, m.create(parse_body(req)).to_json());
  }));

  svr.Get(kSession, guarded([&m](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, m.view(req.matches[1]).to_json());
  }));

  svr.Delete(kSession, guarded([&m](const httplib::Request& req, httplib::Response& res) {
    m.remove(req.matches[1]);
    res.status = 204;
  }));

  svr.Post(route("/strokes"), guarded([&m](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    m.view(id);
    const auto body = parse_body(req);
    std::vector<PaintStroke> strokes;
    if (body.is_array()) {
      strokes = strokes_from_json(body, "strokes");
    } else if (body.is_object() && body.contains("strokes")) {
      strokes = strokes_from_json(body.at("strokes"), "strokes");
    } else {
      throw bad_request("strokes", "is required");
    }
    auto [summary, view] = m.refine(id, strokes);
    send_json(res, 200,
              {{"refinement",
                {{"known_before", summary.known_before},
                 {"known_after", summary.known_after},
                 {"pixels_changed", summary.pixels_changed}}},
               {"session", view.to_json()}});
  }));

  svr.Post(route("/phases"), guarded([&m](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    m.view(id);
    const auto body = parse_body(req);
    int iterations = 0;
    if (!body.is_object()) throw bad_request("$", "request body must be a JSON object");
    if (auto it = body.find("iterations"); it != body.end()) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 1 ||
          it->get<std::int64_t>() > std::numeric_limits<int>::max()) {
        throw bad_request("iterations", "must be a positive integer");
      }
      iterations = it->get<int>();
    }
    send_json(res, 202, m.start_phase(id, iterations).to_json());
  }));

  svr.Post(route("/stop"), guarded([&m](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, m.stop(req.matches[1]).to_json());
  }));

  svr.Get(route("/events"), guarded([&m](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto view = m.view(id);
    std::uint64_t after = 0;
    const std::string resume = req.has_param("after") ? req.get_param_value("after")
                                                      : req.get_header_value("Last-Event-ID");
    if (!resume.empty()) {
      try {
        after = std::stoull(resume);
      } catch (const std::exception&) {
        throw bad_request("after", "must be a non-negative integer");
      }
    }
    const bool until_snapshot = req.get_param_value("until") == "snapshot";
    auto cursor = std::make_shared<std::uint64_t>(after);
    auto idle_polls = std::make_shared<int>(0);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [&m, id, cursor, idle_polls, until_snapshot](std::size_t, httplib::DataSink& sink) {
          std::vector<StreamEvent> events;
          try {
            events = m.events_after(id, *cursor, std::chrono::milliseconds(250));
          } catch (const ServiceError&) {
            sink.done();
            return true;
          }
          if (events.empty()) {
            if (++*idle_polls >= 60) {
              *idle_polls = 0;
              static const std::string keepalive = ": keepalive\n\n";
              return sink.write(keepalive.data(), keepalive.size());
            }
            return true;
          }
          *idle_polls = 0;
          for (const auto& ev : events) {
            const auto text = ev.to_sse();
            if (!sink.write(text.data(), text.size())) return false;
            *cursor = ev.sequence;
            if (until_snapshot && ev.terminal()) {
              sink.done();
              return true;
            }
          }
          return true;
        });
  }));

  auto image_route = [&svr](const char* suffix, std::function<Image(const std::string&)> get) {
    svr.Get(route(suffix), guarded([get](const httplib::Request& req, httplib::Response& res) {
      const auto image = get(req.matches[1]);
      if (req.get_param_value("encoding") == "base64") {
        send_json(res, 200, image_payload(image));
      } else {
        send_png(res, encode_png(image));
      }
    }));
  };
  image_route("/result", [&m](const std::string& id) { return m.result(id); });
  image_route("/original", [&m](const std::string& id) { return m.original(id); });

  svr.Get(route("/mask"), guarded([&m](const httplib::Request& req, httplib::Response& res) {
    const auto mask = m.mask(req.matches[1]);
    if (req.get_param_value("encoding") == "base64") {
      send_json(res, 200,
                {{"width", mask.width()}, {"height", mask.height()}, {"png", base64_encode(encode_mask_png(mask))}});
    } else {
      send_png(res, encode_mask_png(mask));
    }
  }));

  svr.Post(route("/metrics"), guarded([&m](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    m.view(id);
    const auto body = parse_body(req);
    if (!body.is_object()) throw bad_request("$", "request body must be a JSON object");
    const Image truth = image_field(body, "truth");
    std::size_t k = 1;
    if (auto it = body.find("window_k"); it != body.end()) {
      if (!it->is_number_unsigned()) throw bad_request("window_k", "must be a positive integer");
      k = it->get<std::size_t>();
    }
    const auto r = m.metrics(id, truth, k);
    send_json(res, 200, json::parse(to_json_line(r)));
  }));
}

}  // namespace idip
