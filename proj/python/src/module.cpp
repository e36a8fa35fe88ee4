#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <torch/torch.h>

#include "glyphfusion/cli.hpp"
#include "glyphfusion/diffusion.hpp"
#include "glyphfusion/error.hpp"
#include "glyphfusion/evaluation.hpp"
#include "glyphfusion/interpolation.hpp"
#include "glyphfusion/random.hpp"
#include "glyphfusion/schedule.hpp"
#include "glyphfusion/style_encoder.hpp"

namespace py = pybind11;
using namespace glyphfusion;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

GlyphImage to_image(const FloatArray& a) {
  require(a.ndim() == 2, ErrorKind::kShapeMismatch, "expected a 2-d image array");
  const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return GlyphImage(h, w, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const GlyphImage& img) {
  py::array_t<float> out({img.side(), img.side()});
  std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
  return out;
}

FeatureSet to_features(const DoubleArray& a) {
  require(a.ndim() == 2, ErrorKind::kShapeMismatch, "expected an (n, m) feature array");
  FeatureSet f;
  f.n = a.shape(0);
  f.m = a.shape(1);
  f.data.assign(a.data(), a.data() + a.size());
  return f;
}

StyleCond to_style(const std::optional<std::vector<float>>& s) {
  if (!s) return std::nullopt;
  return StyleVector(*s);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Font style interpolation with a conditional diffusion model";

  static py::handle error_type = py::exception<Error>(m, "GlyphfusionError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type(py::str(e.what()));
      exc.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("stream"), py::arg("index") = 0);

  m.def(
      "cosine_schedule",
      [](int T) {
        const auto s = cosine_schedule(T);
        py::dict d;
        d["T"] = s.T;
        d["beta"] = s.beta;
        d["alpha"] = s.alpha;
        d["alpha_bar"] = s.alpha_bar;
        return d;
      },
      py::arg("T"), "Schedule arrays indexed 0..T; index 0 holds alpha_bar = 1.");

  m.def("or_blend", [](const FloatArray& a, const FloatArray& b) { return to_array(or_blend(to_image(a), to_image(b))); });
  m.def("ink_fraction", [](const FloatArray& a, float threshold) { return to_image(a).ink_fraction(threshold); },
        py::arg("image"), py::arg("threshold") = 0.5f);

  m.def(
      "improved_precision_recall",
      [](const DoubleArray& real, const DoubleArray& gen, int k) {
        const auto pr = improved_precision_recall(to_features(real), to_features(gen), k);
        return py::make_tuple(pr.precision, pr.recall);
      },
      py::arg("real"), py::arg("gen"), py::arg("k") = 3);

  py::class_<StyleEncoder>(m, "StyleEncoder")
      .def_static("load", &StyleEncoder::load)
      .def_property_readonly("style_dim", &StyleEncoder::style_dim)
      .def("hash", &StyleEncoder::hash)
      .def("encode", [](const StyleEncoder& e, const FloatArray& img) { return e.encode(to_image(img)).values(); })
      .def("decode", [](const StyleEncoder& e, const std::vector<float>& s, char letter) {
        return to_array(e.decode(StyleVector(s), e.config().alphabet.char_class(letter)));
      });

  py::class_<DiffusionModel>(m, "DiffusionModel")
      .def_static("load", &DiffusionModel::load)
      .def_property_readonly("T", [](const DiffusionModel& d) { return d.config().T; })
      .def_property_readonly("step", &DiffusionModel::step)
      .def("hash", &DiffusionModel::hash)
      .def(
          "sample",
          [](const DiffusionModel& d, std::optional<char> letter, const std::optional<std::vector<float>>& style,
             double w, uint64_t seed) {
            ClassCond c;
            if (letter) c = d.config().alphabet.char_class(*letter);
            py::gil_scoped_release release;
            auto img = d.sample(c, to_style(style), w, seed);
            py::gil_scoped_acquire acquire;
            return to_array(img);
          },
          py::arg("letter") = std::nullopt, py::arg("style") = std::nullopt, py::arg("w") = 3.0,
          py::arg("seed") = 0);

  m.def(
      "interpolate",
      [](const std::string& approach, const FloatArray& r1, const FloatArray& r2, char letter, double lam, double w,
         uint64_t seed, const StyleEncoder& encoder, const DiffusionModel* model, std::optional<int> t_prime) {
        InterpolationRequest req;
        req.approach = parse_approach(approach);
        req.r1 = to_image(r1);
        req.r2 = to_image(r2);
        req.c = encoder.config().alphabet.char_class(letter);
        req.lambda = lam;
        req.w = w;
        req.seed = seed;
        req.t_prime = t_prime;
        return to_array(interpolate(req, encoder, model));
      },
      py::arg("approach"), py::arg("r1"), py::arg("r2"), py::arg("letter"), py::arg("lam") = 0.5,
      py::arg("w") = 3.0, py::arg("seed") = 0, py::arg("encoder"), py::arg("model") = nullptr,
      py::arg("t_prime") = std::nullopt);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "glyphfusion");
        py::gil_scoped_release release;
        return run_cli(args);
      },
      py::arg("args"), "Runs one glyphfusion command and returns its exit code.");
}
