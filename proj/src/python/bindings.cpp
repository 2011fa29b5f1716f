#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idip/config.hpp"
#include "idip/error.hpp"
#include "idip/fixtures.hpp"
#include "idip/image_io.hpp"
#include "idip/metrics.hpp"
#include "idip/replay.hpp"
#include "idip/runtime.hpp"
#include "idip/service.hpp"
#include "idip/session.hpp"
#include "idip/stroke_json.hpp"

namespace py = pybind11;
using namespace idip;

namespace {

nlohmann::json to_json(const py::handle& obj) {
  if (obj.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
  if (py::isinstance<py::int_>(obj)) return obj.cast<std::int64_t>();
  if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
  if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
  if (py::isinstance<py::dict>(obj)) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : obj.cast<py::dict>()) out[py::str(k).cast<std::string>()] = to_json(v);
    return out;
  }
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : obj) out.push_back(to_json(v));
    return out;
  }
  if (py::hasattr(obj, "tolist")) return to_json(obj.attr("tolist")());
  throw py::type_error("cannot convert " + py::str(py::type::of(obj)).cast<std::string>() + " to JSON");
}

py::object from_json(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null:
      return py::none();
    case nlohmann::json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer:
      return py::int_(j.get<std::int64_t>());
    case nlohmann::json::value_t::number_unsigned:
      return py::int_(j.get<std::uint64_t>());
    case nlohmann::json::value_t::number_float:
      return py::float_(j.get<double>());
    case nlohmann::json::value_t::string:
      return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& v : j) out.append(from_json(v));
      return out;
    }
    case nlohmann::json::value_t::object: {
      py::dict out;
      for (const auto& [k, v] : j.items()) out[py::str(k)] = from_json(v);
      return out;
    }
    default:
      throw py::type_error("unsupported JSON value");
  }
}

/// (H, W, 3) float32 in [0, 1].
py::array_t<float> image_to_array(const Image& image) {
  py::array_t<float> out({image.height, image.width, Image::kChannels});
  auto v = out.mutable_unchecked<3>();
  for (std::size_t c = 0; c < Image::kChannels; ++c)
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x) v(y, x, c) = image.at(c, y, x);
  return out;
}

/// Accepts (H, W, 3) floats in [0, 1] or uint8.
Image array_to_image(const py::array& array) {
  if (array.ndim() != 3 || array.shape(2) != 3) throw py::value_error("image must have shape (H, W, 3)");
  const auto h = static_cast<std::size_t>(array.shape(0));
  const auto w = static_cast<std::size_t>(array.shape(1));
  Image image(w, h);
  if (array.dtype().is(py::dtype::of<std::uint8_t>())) {
    auto v = py::array_t<std::uint8_t>::ensure(array).unchecked<3>();
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) image.at(c, y, x) = static_cast<float>(v(y, x, c)) / 255.0f;
    return image;
  }
  auto v = py::array_t<float, py::array::forcecast>::ensure(array).unchecked<3>();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const float value = v(y, x, c);
        if (!(value >= 0.0f && value <= 1.0f)) throw py::value_error("image values must be in [0, 1]");
        image.at(c, y, x) = value;
      }
  return image;
}

/// (H, W) bool, True = known.
py::array_t<bool> mask_to_array(const DamageMask& mask) {
  py::array_t<bool> out({mask.height(), mask.width()});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t y = 0; y < mask.height(); ++y)
    for (std::size_t x = 0; x < mask.width(); ++x) v(y, x) = mask.known(x, y);
  return out;
}

DamageMask array_to_mask(const py::array& array) {
  if (array.ndim() != 2) throw py::value_error("mask must have shape (H, W)");
  auto v = py::array_t<bool, py::array::forcecast>::ensure(array).unchecked<2>();
  DamageMask mask(static_cast<std::size_t>(array.shape(1)), static_cast<std::size_t>(array.shape(0)));
  for (std::size_t y = 0; y < mask.height(); ++y)
    for (std::size_t x = 0; x < mask.width(); ++x) mask.set_known(x, y, v(y, x));
  return mask;
}

Plane array_to_plane(const py::array& array) {
  if (array.ndim() != 2) throw py::value_error("plane must have shape (H, W)");
  auto v = py::array_t<double, py::array::forcecast>::ensure(array).unchecked<2>();
  Plane p(static_cast<std::size_t>(array.shape(1)), static_cast<std::size_t>(array.shape(0)));
  for (std::size_t y = 0; y < p.height; ++y)
    for (std::size_t x = 0; x < p.width; ++x) p.at(x, y) = v(y, x);
  return p;
}

RestorationConfig make_config(const py::object& config) {
  if (config.is_none()) return {};
  return config_from_json(to_json(config));
}

py::dict triplet_to_dict(const TripletData& t) {
  py::dict d;
  d["id"] = t.id;
  d["corrupted"] = image_to_array(t.corrupted);
  d["mask"] = mask_to_array(t.mask);
  d["truth"] = t.truth ? py::object(image_to_array(*t.truth)) : py::object(py::none());
  return d;
}

TripletData dict_to_triplet(const py::dict& d) {
  TripletData t;
  t.id = d.contains("id") ? d["id"].cast<std::string>() : std::string("image");
  t.corrupted = array_to_image(d["corrupted"].cast<py::array>());
  t.mask = array_to_mask(d["mask"].cast<py::array>());
  if (d.contains("truth") && !d["truth"].is_none()) t.truth = array_to_image(d["truth"].cast<py::array>());
  return t;
}

py::dict snapshot_to_dict(const SessionSnapshot& s) {
  py::dict d;
  d["phase"] = s.phase;
  d["presented"] = image_to_array(s.presented);
  d["refined"] = image_to_array(s.refined);
  d["restored"] = image_to_array(s.restored);
  d["mask"] = mask_to_array(s.mask);
  py::list trace;
  for (const auto& v : s.loss_trace) trace.append(py::make_tuple(v.iteration, v.value));
  d["loss_trace"] = trace;
  d["duration_seconds"] = s.duration_seconds;
  d["stopped_early"] = s.stopped_early;
  return d;
}

py::dict report_to_dict(const MetricReport& r) {
  return from_json(nlohmann::json::parse(to_json_line(r))).cast<py::dict>();
}

PhaseObserver wrap_observer(const py::object& callback) {
  if (callback.is_none()) return {};
  auto fn = std::make_shared<py::object>(callback);
  return [fn](const PhaseProgress& p) {
    py::gil_scoped_acquire gil;
    (*fn)(p.phase, p.iteration, p.loss);
  };
}

std::vector<PaintStroke> strokes_from_py(const py::object& strokes) {
  return strokes_from_json(to_json(strokes), "strokes");
}

/// HTTP service on a background thread.
class ServiceHandle {
 public:
  ServiceHandle(const py::object& options) {
    ServiceOptions o;
    if (!options.is_none()) {
      const nlohmann::json j = to_json(options);
      for (const auto& [k, v] : j.items()) {
        if (k == "workers") o.workers = v.get<std::size_t>();
        else if (k == "max_payload_bytes") o.max_payload_bytes = v.get<std::size_t>();
        else if (k == "progress_every") o.progress_every = v.get<int>();
        else if (k == "preview_max_side") o.preview_max_side = v.get<std::size_t>();
        else if (k == "max_phase_iterations") o.max_phase_iterations = v.get<int>();
        else if (k == "state_dir") o.state_dir = v.get<std::string>();
        else if (k == "defaults") o.defaults = config_from_json(v);
        else throw py::value_error("unknown service option: " + k);
      }
    }
    manager_ = std::make_unique<SessionManager>(o);
    http_ = std::make_unique<HttpService>(*manager_);
  }
  ~ServiceHandle() { stop(); }

  int start(const std::string& host, int port) {
    if (thread_.joinable()) throw py::value_error("service already started");
    const int bound = http_->bind(host, port);
    thread_ = std::thread([this] { http_->listen(); });
    return bound;
  }

  void stop() {
    if (http_) http_->stop();
    if (thread_.joinable()) thread_.join();
    if (manager_) manager_->shutdown();
  }

  int port() const { return http_->port(); }

 private:
  std::unique_ptr<SessionManager> manager_;
  std::unique_ptr<HttpService> http_;
  std::thread thread_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Interactive deep-image-prior restoration core";
  tune_allocator();

  py::register_exception<SessionStateError>(m, "SessionStateError", PyExc_RuntimeError);
  py::register_exception<OptimizationAborted>(m, "OptimizationAborted", PyExc_RuntimeError);
  py::register_exception<ImageError>(m, "ImageError", PyExc_ValueError);

  m.def("default_config", [] { return from_json(config_to_json(RestorationConfig{})); });
  m.def(
      "parameter_count",
      [](const py::object& config) {
        std::size_t n = 0;
        for (const auto& layer : layer_layout(make_config(config).network)) n += layer.parameter_count();
        return n;
      },
      py::arg("config") = py::none());

  m.def(
      "make_fixture",
      [](const std::string& kind, std::size_t size, double damage, std::uint64_t seed) {
        return triplet_to_dict(make_fixture(parse_fixture_kind(kind), size, damage, seed));
      },
      py::arg("kind"), py::arg("size") = 64, py::arg("damage") = 0.25, py::arg("seed") = 0);

  m.def("read_png", [](const std::filesystem::path& p) { return image_to_array(load_image(p)); });
  m.def("write_png", [](const py::array& a, const std::filesystem::path& p) { save_image(array_to_image(a), p); });
  m.def("read_mask", [](const std::filesystem::path& p) { return mask_to_array(load_mask(p)); });
  m.def("write_mask", [](const py::array& a, const std::filesystem::path& p) { save_mask(array_to_mask(a), p); });
  m.def("load_triplet", [](const std::filesystem::path& dir) { return triplet_to_dict(load_triplet(triplet_at(dir))); });

  m.def(
      "ssim",
      [](const py::array& a, const py::array& b, std::size_t window) {
        return ssim(array_to_plane(a), array_to_plane(b), SsimParams{window});
      },
      py::arg("a"), py::arg("b"), py::arg("window") = 11);
  m.def(
      "dssim",
      [](const py::array& a, const py::array& b, std::size_t window) {
        return dssim(array_to_plane(a), array_to_plane(b), SsimParams{window});
      },
      py::arg("a"), py::arg("b"), py::arg("window") = 11);
  m.def("mse", [](const py::array& a, const py::array& b) { return mse(array_to_plane(a), array_to_plane(b)); });
  m.def("lmse", [](const py::array& a, const py::array& b, std::size_t k) {
    return lmse(array_to_plane(a), array_to_plane(b), k);
  });
  m.def(
      "evaluate",
      [](const py::array& restored, const py::array& truth, std::size_t window_k, const std::string& id) {
        return report_to_dict(evaluate(array_to_image(restored), array_to_image(truth), window_k, id));
      },
      py::arg("restored"), py::arg("truth"), py::arg("window_k") = 1, py::arg("image_id") = "image");

  m.def(
      "truth_guidance_script",
      [](const py::dict& triplet, double fraction, int phase) {
        return from_json(stroke_script_to_json(truth_guidance_script(dict_to_triplet(triplet), fraction, phase)));
      },
      py::arg("triplet"), py::arg("fraction"), py::arg("phase") = 1);

  m.def(
      "replay",
      [](const py::dict& triplet, const py::object& config, int phases, int iterations, const py::object& script,
         const py::object& callback) {
        ReplayOptions o;
        o.config = make_config(config);
        o.phases = phases;
        o.iterations_per_phase = iterations;
        if (!script.is_none()) o.script = stroke_script_from_json(to_json(script));
        o.observer = wrap_observer(callback);
        const TripletData t = dict_to_triplet(triplet);
        ReplayResult r;
        {
          py::gil_scoped_release release;
          r = replay(t, o);
        }
        py::list snapshots;
        for (const auto& s : r.snapshots) snapshots.append(snapshot_to_dict(*s));
        return snapshots;
      },
      py::arg("triplet"), py::arg("config") = py::none(), py::arg("phases") = 2, py::arg("iterations") = 0,
      py::arg("script") = py::none(), py::arg("callback") = py::none());

  py::class_<RestorationSession>(m, "Session")
      .def(py::init([](const py::array& image, const py::array& mask, const py::object& config, std::string id) {
             return std::make_unique<RestorationSession>(std::move(id), array_to_image(image), array_to_mask(mask),
                                                         make_config(config));
           }),
           py::arg("image"), py::arg("mask"), py::arg("config") = py::none(), py::arg("id") = "session")
      .def_property_readonly("id", &RestorationSession::id)
      .def_property_readonly("phase", &RestorationSession::phase)
      .def_property_readonly("status", [](const RestorationSession& s) { return std::string(status_name(s.status())); })
      .def_property_readonly("width", &RestorationSession::width)
      .def_property_readonly("height", &RestorationSession::height)
      .def_property_readonly("config", [](const RestorationSession& s) { return from_json(config_to_json(s.config())); })
      .def_property_readonly("parameter_checksum", &RestorationSession::parameter_checksum)
      .def("original", [](const RestorationSession& s) { return image_to_array(s.original()); })
      .def("target", [](const RestorationSession& s) { return image_to_array(s.target()); })
      .def("presented", [](const RestorationSession& s) { return image_to_array(s.presented()); })
      .def("refined", [](const RestorationSession& s) { return image_to_array(s.refined()); })
      .def("mask", [](const RestorationSession& s) { return mask_to_array(s.mask()); })
      .def("paint",
           [](RestorationSession& s, const py::object& strokes) {
             const auto summary = s.apply_refinement(strokes_from_py(strokes));
             py::dict d;
             d["known_before"] = summary.known_before;
             d["known_after"] = summary.known_after;
             d["pixels_changed"] = summary.pixels_changed;
             return d;
           },
           py::arg("strokes"))
      .def(
          "run_phase",
          [](RestorationSession& s, int iterations, const py::object& callback) {
            const PhaseObserver observer = wrap_observer(callback);
            std::shared_ptr<const SessionSnapshot> snap;
            {
              py::gil_scoped_release release;
              snap = s.run_phase(iterations, observer);
            }
            return snapshot_to_dict(*snap);
          },
          py::arg("iterations") = 0, py::arg("callback") = py::none())
      .def("stop", &RestorationSession::stop, py::call_guard<py::gil_scoped_release>())
      .def("history", [](const RestorationSession& s) {
        py::list out;
        for (const auto& snap : s.history()) out.append(snapshot_to_dict(*snap));
        return out;
      })
      .def("to_json", [](const RestorationSession& s) { return s.to_json().dump(); })
      .def_static("from_json", [](const std::string& text) {
        return RestorationSession::from_json(nlohmann::json::parse(text));
      })
      .def("save", &RestorationSession::save)
      .def_static("load", &RestorationSession::load);

  py::class_<ServiceHandle>(m, "Service")
      .def(py::init<const py::object&>(), py::arg("options") = py::none())
      .def("start", &ServiceHandle::start, py::arg("host") = "127.0.0.1", py::arg("port") = 0,
           py::call_guard<py::gil_scoped_release>())
      .def("stop", &ServiceHandle::stop, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("port", &ServiceHandle::port);
}
