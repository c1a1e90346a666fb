#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hiersteer/pipeline.hpp"

namespace py = pybind11;
using namespace hiersteer;

namespace {

py::array_t<std::uint8_t> lap_images(const LapLog& lap) {
  const std::size_t n = lap.frames.size(), per = lap.image_bytes();
  py::array_t<std::uint8_t> out({n, kInputChannels, static_cast<std::size_t>(lap.header.height),
                                 static_cast<std::size_t>(lap.header.width)});
  auto* dst = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) std::copy(lap.frames[i].image.begin(), lap.frames[i].image.end(), dst + i * per);
  return out;
}

Tensor<float> to_tensor(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor<float> t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data().begin());
  return t;
}

py::array_t<float> to_array(const Tensor<float>& t) {
  py::array_t<float> out(t.shape());
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

ModelSpec spec_by_name(const std::string& name, double scale) {
  const Shape in = input_shape_for_scale(scale);
  if (name == "mcn") return build_mcn(in);
  if (name == "baseline") return build_baseline(in);
  if (name.size() == 4 && name.starts_with("srn")) return build_srn(name[3] - '0', in);
  throw ParameterError("unknown model '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_hiersteer, m) {
  m.doc() = "Hierarchical steering networks on a simulated five-zone track";

  py::register_exception<Error>(m, "Error");
  py::register_exception<ParameterError>(m, "ParameterError");
  py::register_exception<FormatError>(m, "FormatError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<ConstructionError>(m, "ConstructionError");
  py::register_exception<IncompatibleCheckpointError>(m, "IncompatibleCheckpointError");
  py::register_exception<StateError>(m, "StateError");

  py::enum_<Direction>(m, "Direction").value("cw", Direction::kCw).value("ccw", Direction::kCcw);

  py::class_<Track>(m, "Track")
      .def_property_readonly("length", [](const Track& t) { return t.total_length; })
      .def_property_readonly("cone_count", [](const Track& t) { return t.cones.size(); })
      .def_property_readonly("hash", [](const Track& t) { return t.hash; })
      .def("zone_of", [](const Track& t, double s) { return zone_of(t, s); })
      .def("at",
           [](const Track& t, double s) {
             const Pose2 p = t.at(s);
             return py::make_tuple(p.x, p.y, p.heading);
           })
      .def("project", [](const Track& t, double x, double y) {
        double d = 0;
        const double s = t.project(x, y, &d);
        return py::make_tuple(s, d);
      });

  m.def(
      "build_track", [](const std::string& config) { return build_track(parse_track_config(config)); },
      py::arg("config") = "", "Builds the track from `key = value` settings.");

  py::class_<LapLog>(m, "LapLog")
      .def_property_readonly("direction", [](const LapLog& l) { return l.header.direction; })
      .def_property_readonly("track_hash", [](const LapLog& l) { return l.header.track_hash; })
      .def("__len__", [](const LapLog& l) { return l.frames.size(); })
      .def_property_readonly("steering",
                             [](const LapLog& l) {
                               std::vector<float> s;
                               for (const auto& f : l.frames) s.push_back(f.steering);
                               return s;
                             })
      .def_property_readonly("zones",
                             [](const LapLog& l) {
                               std::vector<int> z;
                               for (const auto& f : l.frames) z.push_back(f.zone);
                               return z;
                             })
      .def_property_readonly("images", &lap_images);

  m.def(
      "record_lap",
      [](const Track& t, Direction d, double scale, double amplitude) {
        RecordingConfig rc;
        if (amplitude > 0) rc.perturbation = Perturbation{amplitude, 2.0, 0.0};
        return run_recording_lap(t, rig_for_scale(scale), d, rc);
      },
      py::arg("track"), py::arg("direction"), py::arg("scale") = 0.5, py::arg("amplitude") = 0.0);
  m.def("write_lap", [](const LapLog& l, const std::filesystem::path& p) { write_lap(l, p); });
  m.def("read_lap", [](const std::filesystem::path& p) { return read_lap(p); });

  m.def(
      "render",
      [](const Track& t, double x, double y, double heading, double scale) {
        VehicleState st;
        st.x = x;
        st.y = y;
        st.heading = heading;
        return to_array(render_stereo(t, st, rig_for_scale(scale)));
      },
      py::arg("track"), py::arg("x"), py::arg("y"), py::arg("heading"), py::arg("scale") = 0.5);

  m.def("input_shape", &input_shape_for_scale, py::arg("scale") = 0.5);
  m.def(
      "param_count", [](const std::string& name, double scale) { return param_count(spec_by_name(name, scale)); },
      py::arg("model"), py::arg("scale") = 0.5);
  m.def(
      "forward",
      [](const std::string& name, std::uint64_t seed, const py::array_t<float, py::array::c_style | py::array::forcecast>& frames,
         double scale) {
        const ModelSpec spec = spec_by_name(name, scale);
        return to_array(forward(spec, init_weights(spec, seed), to_tensor(frames)));
      },
      py::arg("model"), py::arg("seed"), py::arg("frames"), py::arg("scale") = 0.5,
      "Raw output of a freshly initialized model for the last frame of `frames`.");

  py::class_<Router>(m, "Router")
      .def(py::init([](double scale) { return Router(input_shape_for_scale(scale)); }), py::arg("scale") = 0.5)
      .def("load", [](Router& r, const std::filesystem::path& dir) { r.load(dir); })
      .def("ready", &Router::ready)
      .def("reset", &Router::reset)
      .def("step", [](Router& r, const py::array_t<float, py::array::c_style | py::array::forcecast>& frame) {
        const Router::Output o = r.step(to_tensor(frame));
        return py::make_tuple(o.steering, o.zone, o.throttle);
      });

  py::class_<PipelineConfig>(m, "PipelineConfig")
      .def(py::init([](const std::string& text) { return parse_pipeline_config(text); }), py::arg("text") = "")
      .def_readwrite("seed", &PipelineConfig::seed)
      .def_readwrite("scale", &PipelineConfig::scale)
      .def_readwrite("train_laps_per_direction", &PipelineConfig::train_laps_per_direction)
      .def_readwrite("test_laps_per_direction", &PipelineConfig::test_laps_per_direction)
      .def_readwrite("drive_laps", &PipelineConfig::drive_laps)
      .def("to_text", &PipelineConfig::to_text);

  m.def(
      "run_all",
      [](const PipelineConfig& cfg, const std::filesystem::path& out) {
        const RunAllResult r = run_all(cfg, out);
        py::dict d;
        d["eval_passed"] = r.eval.passed();
        d["min_recall"] = r.eval.min_recall();
        d["zone_mse"] = std::vector<double>(r.eval.zone_mse.begin(), r.eval.zone_mse.end());
        d["drive_success"] = r.drive.success();
        return d;
      },
      py::arg("config"), py::arg("out"), "gen-track, record, train, eval and drive into `out`.");
}
