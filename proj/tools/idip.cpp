#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "idip/config.hpp"
#include "idip/fixtures.hpp"
#include "idip/image_io.hpp"
#include "idip/metrics.hpp"
#include "idip/replay.hpp"
#include "idip/runtime.hpp"
#include "idip/service.hpp"
#include "idip/stroke_json.hpp"

namespace fs = std::filesystem;
using namespace idip;

namespace {

struct CommonFlags {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  bool deterministic = false;
  bool quiet = false;
  int progress = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "JSON config file (overrides $" + std::string(kConfigEnvVar) + ")")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "Seed for weights and network input");
  cmd->add_option("--iterations", flags.iterations, "Iterations per phase")->check(CLI::PositiveNumber);
  cmd->add_flag("--deterministic", flags.deterministic, "Single-threaded reproducible arithmetic (always on)");
  cmd->add_flag("-q,--quiet", flags.quiet, "Suppress the progress log");
  cmd->add_option("--progress", flags.progress, "Log the loss every N iterations to stderr (0 = off)")
      ->check(CLI::NonNegativeNumber);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

/// Defaults, then $IDIP_CONFIG, then --config, then individual flags.
RestorationConfig resolve_config(const CommonFlags& flags) {
  RestorationConfig config;
  if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') {
    config = config_from_json(read_json(env), config);
  }
  if (flags.config) {
    config = config_from_json(read_json(*flags.config), config);
  }
  if (flags.seed) config.seed = *flags.seed;
  if (flags.iterations) config.iterations_per_phase = *flags.iterations;
  config.validate();
  return config;
}

PhaseObserver progress_logger(const CommonFlags& flags, const std::string& label) {
  if (flags.quiet || flags.progress <= 0) return {};
  const int every = flags.progress;
  return [every, label](const PhaseProgress& p) {
    if (p.iteration % every == 0) {
      std::fprintf(stderr, "[%s] phase %d iteration %d loss %.6g\n", label.c_str(), p.phase + 1, p.iteration,
                   p.loss);
    }
  };
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw std::runtime_error("cannot write " + path.string());
}

std::string loss_csv(const ReplayResult& result) {
  std::string out = "phase,iteration,loss\n";
  char line[96];
  for (const auto& snap : result.snapshots) {
    for (const auto& v : snap->loss_trace) {
      std::snprintf(line, sizeof line, "%d,%d,%.17g\n", snap->phase + 1, v.iteration, v.value);
      out += line;
    }
  }
  return out;
}

/// restored.png, loss.csv, config.json and (with truth) metrics.jsonl.
std::optional<MetricReport> write_outputs(const fs::path& out_dir, const TripletData& triplet,
                                          const ReplayResult& result, const RestorationConfig& config,
                                          std::size_t window_k, bool per_phase) {
  fs::create_directories(out_dir);
  save_image(result.restored, out_dir / "restored.png");
  if (per_phase && result.snapshots.size() > 1) {
    for (const auto& snap : result.snapshots) {
      save_image(snap->restored, out_dir / ("phase_" + std::to_string(snap->phase + 1) + ".png"));
    }
  }
  write_text(out_dir / "loss.csv", loss_csv(result));
  write_text(out_dir / "config.json", config_to_json(config).dump(2) + "\n");

  if (!triplet.truth) {
    std::fprintf(stderr, "warning: %s has no truth image; metrics skipped\n", triplet.id.c_str());
    std::error_code ec;
    fs::remove(out_dir / "metrics.jsonl", ec);
    return std::nullopt;
  }
  MetricReport report = evaluate(result.restored, *triplet.truth, window_k, triplet.id);
  write_text(out_dir / "metrics.jsonl", to_json_line(report) + "\n");
  return report;
}

std::vector<ScriptedStroke> load_script(const std::optional<fs::path>& path) {
  if (!path) return {};
  return stroke_script_from_json(read_json(*path));
}

int run_restore(const CommonFlags& flags, const fs::path& input, const fs::path& out, std::size_t window_k) {
  const RestorationConfig config = resolve_config(flags);
  const TripletData triplet = load_triplet(triplet_at(input));
  const ReplayResult result =
      restore(triplet, config, config.iterations_per_phase, progress_logger(flags, triplet.id));
  const auto report = write_outputs(out, triplet, result, config, window_k, false);
  if (report) std::cout << format_table(std::span(&*report, 1));
  if (!flags.quiet) {
    std::fprintf(stderr, "%s: %d iterations in %.2fs -> %s\n", triplet.id.c_str(),
                 static_cast<int>(result.snapshots.back()->loss_trace.size()),
                 result.snapshots.back()->duration_seconds, (out / "restored.png").c_str());
  }
  return 0;
}

int run_replay(const CommonFlags& flags, const fs::path& input, const fs::path& out,
               const std::optional<fs::path>& strokes, int phases, std::size_t window_k) {
  ReplayOptions options;
  options.config = resolve_config(flags);
  options.phases = phases;
  options.script = load_script(strokes);
  const TripletData triplet = load_triplet(triplet_at(input));
  options.observer = progress_logger(flags, triplet.id);
  const ReplayResult result = replay(triplet, options);
  const auto report = write_outputs(out, triplet, result, options.config, window_k, true);
  if (report) std::cout << format_table(std::span(&*report, 1));
  if (!flags.quiet) {
    double seconds = 0.0;
    for (const auto& s : result.snapshots) seconds += s->duration_seconds;
    std::fprintf(stderr, "%s: %d phases, %zu scripted strokes in %.2fs -> %s\n", triplet.id.c_str(), phases,
                 options.script.size(), seconds, (out / "restored.png").c_str());
  }
  return 0;
}

int run_bench(const CommonFlags& flags, const fs::path& input, const fs::path& out, std::size_t window_k,
              const std::string& method, int jobs) {
  const RestorationConfig config = resolve_config(flags);
  const auto triplets = scan_dataset(input);
  if (triplets.empty()) throw std::runtime_error("no triplets under " + input.string());
  fs::create_directories(out);

  // Each worker writes only its triplet's directory; the merge below runs in id order.
  std::vector<std::optional<MetricReport>> reports(triplets.size());
  std::vector<std::string> failures(triplets.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < triplets.size(); i = next++) {
      const auto& t = triplets[i];
      try {
        const TripletData triplet = load_triplet(t);
        ReplayResult result;
        if (method == "dip") {
          result = restore(triplet, config, 2 * config.iterations_per_phase);
        } else {
          ReplayOptions options;
          options.config = config;
          const fs::path script = t.corrupted.parent_path() / "strokes.json";
          if (fs::exists(script)) options.script = load_script(script);
          result = replay(triplet, options);
        }
        reports[i] = write_outputs(out / t.id, triplet, result, config, window_k, false);
        if (!flags.quiet) {
          std::lock_guard lock(log_mutex);
          std::fprintf(stderr, "bench: %s done\n", t.id.c_str());
        }
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const int workers = std::clamp(jobs, 1, static_cast<int>(triplets.size()));
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  int failed = 0;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    if (!failures[i].empty()) {
      std::fprintf(stderr, "error: %s: %s\n", triplets[i].id.c_str(), failures[i].c_str());
      ++failed;
    }
  }

  std::vector<MetricReport> rows;
  std::string records;
  for (const auto& r : reports) {
    if (!r) continue;
    rows.push_back(*r);
    records += to_json_line(*r) + "\n";
  }
  write_text(out / "records.jsonl", records);
  std::cout << format_table(rows);
  return failed == 0 ? 0 : 1;
}

int run_fixtures(const fs::path& out, const std::vector<std::string>& kinds, std::size_t size, double damage,
                 std::uint64_t seed, double stroke_fraction) {
  fs::create_directories(out);
  for (const auto& name : kinds) {
    const TripletData data = make_fixture(parse_fixture_kind(name), size, damage, seed);
    const DatasetTriplet written = write_triplet(out, data);
    if (stroke_fraction > 0.0) {
      const auto script = truth_guidance_script(data, stroke_fraction);
      write_text(written.corrupted.parent_path() / "strokes.json", stroke_script_to_json(script).dump() + "\n");
    }
    std::cout << written.corrupted.parent_path().string() << "\n";
  }
  return 0;
}

int run_serve(const CommonFlags& flags, ServiceOptions options, const std::string& host, int port) {
  options.defaults = resolve_config(flags);

  // Block termination signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SessionManager manager(options);
  HttpService http(manager);
  const int bound = http.bind(host, port);
  std::fprintf(stderr, "idip serving on http://%s:%d/v1\n", host.c_str(), bound);
  std::fflush(stderr);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    std::fprintf(stderr, "signal %d, shutting down\n", sig);
    http.stop();
  });
  http.listen();
  // listen() also returns if the socket fails; release the waiter either way.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  manager.shutdown();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();

  CLI::App app{"Interactive deep-image-prior restoration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "idip 0.1.0");

  CommonFlags flags;
  fs::path input;
  fs::path out = "out";
  std::size_t window_k = 1;

  auto* restore_cmd = app.add_subcommand("restore", "Plain DIP on one triplet directory");
  restore_cmd->add_option("triplet", input, "Directory with corrupted.png, mask.png, optional truth.png")
      ->required()
      ->check(CLI::ExistingDirectory);
  restore_cmd->add_option("--out", out, "Output directory")->capture_default_str();
  restore_cmd->add_option("--metrics-window-k", window_k, "LMSE window side")->capture_default_str()->check(
      CLI::PositiveNumber);
  add_common(restore_cmd, flags);

  std::optional<fs::path> strokes;
  int phases = 2;
  auto* replay_cmd = app.add_subcommand("session-replay", "Scripted multi-phase iDIP run on one triplet");
  replay_cmd->add_option("triplet", input, "Triplet directory")->required()->check(CLI::ExistingDirectory);
  replay_cmd->add_option("--strokes", strokes, "Stroke script (JSON array of strokes with a phase index)")
      ->check(CLI::ExistingFile);
  replay_cmd->add_option("--phases", phases, "Number of phases")->capture_default_str()->check(
      CLI::PositiveNumber);
  replay_cmd->add_option("--out", out, "Output directory")->capture_default_str();
  replay_cmd->add_option("--metrics-window-k", window_k, "LMSE window side")->capture_default_str()->check(
      CLI::PositiveNumber);
  add_common(replay_cmd, flags);

  std::string method = "idip";
  int jobs = 1;
  auto* bench_cmd = app.add_subcommand("bench", "Restore every triplet under a directory and report metrics");
  bench_cmd->add_option("dataset", input, "Directory of triplet directories")->required()->check(
      CLI::ExistingDirectory);
  bench_cmd->add_option("--out", out, "Output directory (records.jsonl plus one directory per triplet)")
      ->capture_default_str();
  bench_cmd->add_option("--metrics-window-k", window_k, "LMSE window side")->capture_default_str()->check(
      CLI::PositiveNumber);
  bench_cmd
      ->add_option("--method", method,
                   "idip: two phases with <triplet>/strokes.json between them; dip: one phase of the same budget")
      ->capture_default_str()
      ->check(CLI::IsMember({"idip", "dip"}));
  bench_cmd->add_option("--jobs", jobs, "Parallel triplets")->capture_default_str()->check(CLI::PositiveNumber);
  add_common(bench_cmd, flags);

  std::vector<std::string> kinds{"gradient", "texture", "checker"};
  std::size_t size = 64;
  double damage = 0.25;
  std::uint64_t fixture_seed = 0;
  double stroke_fraction = 0.0;
  auto* fixtures_cmd = app.add_subcommand("fixtures", "Write synthetic triplets");
  fixtures_cmd->add_option("--out", out, "Dataset root")->capture_default_str();
  fixtures_cmd->add_option("--kinds", kinds, "gradient, texture, checker")->delimiter(',')->capture_default_str();
  fixtures_cmd->add_option("--size", size, "Side length")->capture_default_str()->check(CLI::Range(4, 4096));
  fixtures_cmd->add_option("--damage", damage, "Damaged fraction")->capture_default_str()->check(
      CLI::Range(0.0, 1.0));
  fixtures_cmd->add_option("--seed", fixture_seed, "Fixture seed")->capture_default_str();
  fixtures_cmd
      ->add_option("--strokes", stroke_fraction,
                   "Also write strokes.json painting truth colours into this fraction of damaged pixels")
      ->check(CLI::Range(0.0, 1.0));

  ServiceOptions service;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t upload_mb = service.max_payload_bytes >> 20;
  std::optional<fs::path> state_dir;
  auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP restoration service");
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port, "0 picks a free port")->capture_default_str()->check(
      CLI::Range(0, 65535));
  serve_cmd->add_option("--workers", service.workers, "Concurrent phases")->capture_default_str()->check(
      CLI::PositiveNumber);
  serve_cmd->add_option("--state-dir", state_dir, "Persist sessions here and reload them on start");
  serve_cmd->add_option("--max-upload-mb", upload_mb)->capture_default_str()->check(CLI::PositiveNumber);
  serve_cmd->add_option("--progress-every", service.progress_every, "Iterations between progress events")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  add_common(serve_cmd, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*restore_cmd) return run_restore(flags, input, out, window_k);
    if (*replay_cmd) return run_replay(flags, input, out, strokes, phases, window_k);
    if (*bench_cmd) return run_bench(flags, input, out, window_k, method, jobs);
    if (*fixtures_cmd) return run_fixtures(out, kinds, size, damage, fixture_seed, stroke_fraction);
    if (*serve_cmd) {
      service.max_payload_bytes = upload_mb << 20;
      service.state_dir = state_dir;
      return run_serve(flags, service, host, port);
    }
  } catch (const FieldError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
