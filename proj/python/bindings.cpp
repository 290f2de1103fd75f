#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "iaf/boxes.hpp"
#include "iaf/config.hpp"
#include "iaf/dataio.hpp"
#include "iaf/detector.hpp"
#include "iaf/eval.hpp"
#include "iaf/fileutil.hpp"
#include "iaf/fusion.hpp"
#include "iaf/illumination.hpp"
#include "iaf/synth.hpp"

namespace py = pybind11;
using namespace iaf;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Image image_from_array(const U8Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw std::invalid_argument("image must be HxW or HxWxC");
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  const auto c = a.ndim() == 3 ? static_cast<std::size_t>(a.shape(2)) : 1;
  return Image(h, w, c, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8Array image_to_array(const Image& img) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(img.height()), static_cast<py::ssize_t>(img.width())};
  if (img.channels() != 1) shape.push_back(static_cast<py::ssize_t>(img.channels()));
  U8Array out(shape);
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

ImagePair make_pair(const U8Array& color, const U8Array& thermal) {
  ImagePair p{image_from_array(color), image_from_array(thermal), Condition::Unknown};
  p.validate();
  return p;
}

std::vector<ScoredBox> scored(const std::vector<BBox>& boxes, const std::vector<double>& scores) {
  if (boxes.size() != scores.size()) throw std::invalid_argument("boxes and scores differ in length");
  std::vector<ScoredBox> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) out.push_back({boxes[i], scores[i]});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Illumination-aware color/thermal pedestrian detection core";

  py::class_<BBox>(m, "BBox")
      .def(py::init<double, double, double, double>(), py::arg("x"), py::arg("y"), py::arg("w"), py::arg("h"))
      .def_property_readonly("x", &BBox::x)
      .def_property_readonly("y", &BBox::y)
      .def_property_readonly("w", &BBox::w)
      .def_property_readonly("h", &BBox::h)
      .def("__eq__", [](const BBox& a, const BBox& b) { return a == b; })
      .def("__repr__", [](const BBox& b) {
        return "BBox(" + format_double(b.x()) + ", " + format_double(b.y()) + ", " + format_double(b.w()) + ", " +
               format_double(b.h()) + ")";
      });

  m.def("iou", &iou, py::arg("a"), py::arg("b"));
  m.def("ioa", &ioa, py::arg("det"), py::arg("region"));
  m.def(
      "nms",
      [](const std::vector<BBox>& boxes, const std::vector<double>& scores, double threshold) {
        const auto dets = scored(boxes, scores);
        return nms_indices(dets, threshold);
      },
      py::arg("boxes"), py::arg("scores"), py::arg("threshold") = kDefaultNmsThreshold,
      "Indices kept by greedy non-maximum suppression, highest score first.");

  // gate and fusion
  m.def(
      "gate", [](double iv, double alpha, double beta) { return fusion::gate(iv, fusion::GateParams(alpha, beta)); },
      py::arg("iv"), py::arg("alpha") = 0.1, py::arg("beta") = 1.0);
  m.def(
      "fusion_weights",
      [](const std::string& mode, double iv, double alpha, double beta) {
        const auto w = fusion::weights_for(fusion::weighting_from_string(mode), iv, fusion::GateParams(alpha, beta));
        return std::make_pair(w.color, w.thermal());
      },
      py::arg("mode"), py::arg("iv"), py::arg("alpha") = 0.1, py::arg("beta") = 1.0,
      "(color, thermal) weights for 'average', 'hard01' or 'ia'.");
  m.def(
      "fuse_scores",
      [](const std::vector<std::array<double, 2>>& color, const std::vector<std::array<double, 2>>& thermal,
         double w_color) {
        StreamOutput a, b;
        a.scores = color;
        b.scores = thermal;
        a.proposals.assign(color.size(), BBox());
        b.proposals.assign(thermal.size(), BBox());
        a.offsets.assign(color.size(), RegressionTarget{});
        b.offsets.assign(thermal.size(), RegressionTarget{});
        return fusion::fuse(a, b, {w_color}).scores;
      },
      py::arg("color"), py::arg("thermal"), py::arg("w_color"));

  // illumination cues
  m.def("key_estimate", [](const U8Array& color) { return illumination::key_estimate(image_from_array(color)); });
  m.def("range_estimate", [](const U8Array& color) { return illumination::range_estimate(image_from_array(color)); });

  py::class_<illumination::IanModel>(m, "IanModel")
      .def_static("load", &illumination::load_ian, py::arg("path"))
      .def("infer", [](const illumination::IanModel& ian, const U8Array& color) {
        return ian.infer(image_from_array(color));
      }, "Day probability of a color image.");

  py::class_<detector::DetectorModel>(m, "DetectorModel")
      .def_static("load", &detector::load_detector, py::arg("path"))
      .def_property_readonly("architecture", [](const detector::DetectorModel& d) {
        return detector::to_string(d.architecture());
      })
      .def(
          "detect",
          [](const detector::DetectorModel& model, const U8Array& color, const U8Array& thermal,
             const std::string& weighting, double iv, double alpha, double beta) {
            const ImagePair pair = make_pair(color, thermal);
            fusion::FinalizeConfig fin;
            fin.image_width = static_cast<double>(pair.color.width());
            fin.image_height = static_cast<double>(pair.color.height());
            std::vector<std::pair<BBox, double>> out;
            for (const auto& d : detector::detect(model, pair, fusion::weighting_from_string(weighting), iv,
                                                  fusion::GateParams(alpha, beta), fin)) {
              out.emplace_back(d.box, d.score);
            }
            return out;
          },
          py::arg("color"), py::arg("thermal"), py::arg("weighting") = "average", py::arg("iv") = 0.5,
          py::arg("alpha") = 0.1, py::arg("beta") = 1.0, "List of (BBox, score), best first.");

  // evaluation
  m.def(
      "log_average_miss_rate",
      [](const std::vector<std::pair<double, double>>& curve) {
        std::vector<eval::CurvePoint> pts;
        for (const auto& [f, mr] : curve) pts.push_back({f, mr});
        return eval::log_average_miss_rate(pts, eval::EvalConfig{});
      },
      py::arg("curve"), "Curve given as (fppi, miss_rate) pairs.");

  // synthetic data
  m.def(
      "synth_frame",
      [](std::uint64_t index, std::uint64_t seed) {
        synth::SceneConfig cfg;
        cfg.seed = seed;
        const auto f = synth::generate_frame(cfg, index);
        py::list gts;
        for (const auto& g : f.annotations) {
          gts.append(py::dict(py::arg("label") = to_string(g.label), py::arg("box") = g.bbox,
                              py::arg("occlusion") = static_cast<int>(g.occlusion), py::arg("ignore") = g.ignore));
        }
        return py::dict(py::arg("color") = image_to_array(f.pair.color),
                        py::arg("thermal") = image_to_array(f.pair.thermal),
                        py::arg("condition") = to_string(f.pair.condition), py::arg("annotations") = gts);
      },
      py::arg("index"), py::arg("seed") = 7);

  // file formats
  m.def("annotations_roundtrip", [](const std::string& text) {
    return serialize_annotations(parse_annotations(text));
  });
  m.def("default_config", []() { return serialize_config(RunConfig{}); });
  m.def("normalize_config", [](const std::string& text) { return serialize_config(parse_config(text)); },
        "Parses config text and writes it back in canonical form.");
}
