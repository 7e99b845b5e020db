#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "mvseg/core.hpp"
#include "mvseg/fusion.hpp"
#include "mvseg/geometry.hpp"
#include "mvseg/gradcheck.hpp"
#include "mvseg/layers.hpp"
#include "mvseg/metrics.hpp"
#include "mvseg/synthbench.hpp"
#include "mvseg/warp_sampler.hpp"

namespace py = pybind11;
using namespace mvseg;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F64& a) {
  if (a.ndim() != 3) throw ShapeError("expected a (C, H, W) array");
  Tensor t({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
            static_cast<std::size_t>(a.shape(2))});
  std::memcpy(t.data().data(), a.data(), t.size() * sizeof(double));
  return t;
}

py::array_t<double> from_tensor(const Tensor& t) {
  py::array_t<double> a({t.channels(), t.height(), t.width()});
  std::memcpy(a.mutable_data(), t.data().data(), t.size() * sizeof(double));
  return a;
}

template <typename T, typename A>
Plane<T> to_plane(const A& a) {
  if (a.ndim() != 2) throw ShapeError("expected a (H, W) array");
  Plane<T> p(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::memcpy(p.data().data(), a.data(), p.size() * sizeof(T));
  return p;
}

template <typename T>
py::array_t<T> from_plane(const Plane<T>& p) {
  py::array_t<T> a({p.height(), p.width()});
  std::memcpy(a.mutable_data(), p.data().data(), p.size() * sizeof(T));
  return a;
}

CameraIntrinsics make_intrinsics(double fx, double fy, double cx, double cy, std::size_t w, std::size_t h) {
  CameraIntrinsics k{fx, fy, cx, cy, w, h};
  k.validate();
  return k;
}

RigidTransform to_pose(const F64& m) {
  if (m.ndim() != 2 || m.shape(0) != 4 || m.shape(1) != 4) throw ShapeError("pose must be a 4x4 matrix");
  Mat3 r;
  Vec3 t;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r(i, j) = m.at(i, j);
    t[i] = m.at(i, 3);
  }
  return RigidTransform(r, t);
}

std::vector<ViewPrediction> to_views(const std::vector<F64>& scores, const std::vector<U8>& masks) {
  if (!masks.empty() && masks.size() != scores.size()) throw ShapeError("one mask per view expected");
  std::vector<ViewPrediction> views;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    Tensor t = to_tensor(scores[i]);
    Mask m = masks.empty() ? Mask(t.height(), t.width(), 1) : to_plane<std::uint8_t>(masks[i]);
    views.push_back({std::move(t), std::move(m), static_cast<int>(i)});
  }
  return views;
}

WarpGrid to_grid(const F64& u, const F64& v, const U8& valid, std::size_t sw, std::size_t sh) {
  return {to_plane<double>(u), to_plane<double>(v), to_plane<std::uint8_t>(valid), sw, sh};
}

}  // namespace

PYBIND11_MODULE(_mvseg, m) {
  m.doc() = "Multi-view consistent RGB-D segmentation primitives";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<InvalidDepthError>(m, "InvalidDepthError", base.ptr());
  py::register_exception<InvalidLabelError>(m, "InvalidLabelError", base.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", base.ptr());
  py::register_exception<DegenerateSampleError>(m, "DegenerateSampleError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<AssociationError>(m, "AssociationError", base.ptr());
  py::register_exception<NonFiniteGradientError>(m, "NonFiniteGradientError", base.ptr());

  m.attr("IGNORE_LABEL") = static_cast<int>(kIgnoreLabel);

  py::class_<CameraIntrinsics>(m, "Intrinsics")
      .def(py::init(&make_intrinsics), py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"),
           py::arg("width"), py::arg("height"))
      .def_readonly("fx", &CameraIntrinsics::fx)
      .def_readonly("fy", &CameraIntrinsics::fy)
      .def_readonly("cx", &CameraIntrinsics::cx)
      .def_readonly("cy", &CameraIntrinsics::cy)
      .def_readonly("width", &CameraIntrinsics::width)
      .def_readonly("height", &CameraIntrinsics::height);
  m.def("default_intrinsics", &default_intrinsics, py::arg("width"), py::arg("height"));

  m.def(
      "compute_warp_grid",
      [](const F64& depth, const F64& pose, const CameraIntrinsics& k, py::object source_depth) {
        Plane<double> transformed;
        WarpGrid g = compute_warp_grid(to_plane<double>(depth), to_pose(pose), k, &transformed);
        if (!source_depth.is_none()) mask_occlusions(g, transformed, to_plane<double>(source_depth.cast<F64>()));
        return py::make_tuple(from_plane(g.u), from_plane(g.v), from_plane(g.valid));
      },
      py::arg("depth"), py::arg("pose_target_to_source"), py::arg("intrinsics"),
      py::arg("source_depth") = py::none(),
      "Normalized source coordinates (u, v, valid) per target pixel; occluded pixels are dropped "
      "when the source depth is given.");

  m.def(
      "bilinear_sample",
      [](const F64& source, const F64& u, const F64& v, const U8& valid) {
        const Tensor src = to_tensor(source);
        const SampledMap s = bilinear_sample(src, to_grid(u, v, valid, src.width(), src.height()));
        return py::make_tuple(from_tensor(s.values), from_plane(s.validity));
      },
      py::arg("source"), py::arg("u"), py::arg("v"), py::arg("valid"));
  m.def(
      "bilinear_sample_backward",
      [](const F64& grad, const F64& u, const F64& v, const U8& valid, std::size_t sh, std::size_t sw) {
        const Tensor g = to_tensor(grad);
        return from_tensor(
            bilinear_sample_backward(g, to_grid(u, v, valid, sw, sh), {g.channels(), sh, sw}));
      },
      py::arg("grad"), py::arg("u"), py::arg("v"), py::arg("valid"), py::arg("source_height"),
      py::arg("source_width"));

  m.def("softmax", [](const F64& s) { return from_tensor(softmax(to_tensor(s))); }, py::arg("scores"));
  m.def(
      "fuse",
      [](const std::vector<F64>& scores, const std::vector<U8>& masks, const std::string& method) {
        return from_tensor(fuse_views(parse_fusion_method(method), to_views(scores, masks)));
      },
      py::arg("scores"), py::arg("masks") = std::vector<U8>{}, py::arg("method") = "bayes",
      "Fuses per-view maps warped into the keyframe (view 0).");
  m.def(
      "bayesian_fuse_scores",
      [](const std::vector<F64>& scores, const std::vector<U8>& masks) {
        return from_tensor(bayesian_fuse_scores(to_views(scores, masks)));
      },
      py::arg("scores"), py::arg("masks") = std::vector<U8>{});

  m.def("argmax_labels", [](const F64& s) { return from_plane(argmax_labels(to_tensor(s))); }, py::arg("scores"));
  m.def(
      "evaluate",
      [](const std::vector<U8>& preds, const std::vector<U8>& gts, std::size_t classes) {
        if (preds.size() != gts.size()) throw ShapeError("one ground truth per prediction expected");
        ConfusionMatrix cm(classes);
        for (std::size_t i = 0; i < preds.size(); ++i) {
          cm.accumulate(to_plane<Label>(preds[i]), to_plane<Label>(gts[i]));
        }
        py::array_t<std::uint64_t> counts({classes, classes});
        for (std::size_t i = 0; i < classes; ++i) {
          for (std::size_t j = 0; j < classes; ++j) counts.mutable_at(i, j) = cm(i, j);
        }
        const MetricSummary s = summarize(cm);
        py::dict d;
        d["pixelwise"] = s.pixelwise;
        d["classwise"] = s.classwise;
        d["mean_iou"] = s.iou;
        d["confusion"] = counts;
        return d;
      },
      py::arg("predictions"), py::arg("ground_truth"), py::arg("num_classes"));

  m.def(
      "stochastic_pool_labels",
      [](const U8& labels, std::size_t factor, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        return from_plane(stochastic_pool_labels(to_plane<Label>(labels), factor, rng));
      },
      py::arg("labels"), py::arg("factor"), py::arg("seed") = 0);

  m.def("save_mvft", [](const std::string& p, const F64& t) { save_mvft(p, to_tensor(t)); }, py::arg("path"),
        py::arg("tensor"));
  m.def("load_mvft", [](const std::string& p) { return from_tensor(load_mvft(p)); }, py::arg("path"));

  m.def(
      "gradient_check",
      [](std::uint64_t seed, double step) {
        py::dict d;
        for (const GradCheckEntry& e : run_gradient_checks(seed, step)) d[py::str(e.name)] = e.max_rel_error;
        return d;
      },
      py::arg("seed") = 0, py::arg("step") = 1e-6, "Max relative error per backward pass.");

  m.def(
      "fusion_benchmark",
      [](const std::string& scene_path, std::size_t frames, const std::string& method, double rate, double sigma,
         std::uint64_t seed, std::size_t width, std::size_t height) {
        const SceneSpec scene = load_scene(scene_path);
        const PosedTrajectory t = make_trajectory(TrajectoryKind::kArc, 60, Vec3(0, 0.3, 2.8), 1.0);
        NoiseModel n;
        n.misclassification_rate = rate;
        n.logit_sigma = sigma;
        n.seed = seed;
        const BenchmarkReport r =
            run_fusion_benchmark(scene, t, default_intrinsics(width, height), n, frames, parse_fusion_method(method));
        auto pack = [](const MetricSummary& s) {
          py::dict d;
          d["pixelwise"] = s.pixelwise;
          d["classwise"] = s.classwise;
          d["mean_iou"] = s.iou;
          return d;
        };
        py::dict d;
        d["single"] = pack(r.single());
        d["fused"] = pack(r.fused_summary());
        d["frames_used"] = r.frames_used;
        return d;
      },
      py::arg("scene"), py::arg("frames") = 50, py::arg("method") = "bayes", py::arg("misclassification_rate") = 0.25,
      py::arg("logit_sigma") = 1.0, py::arg("seed") = 0, py::arg("width") = 80, py::arg("height") = 60,
      "Arc-trajectory benchmark: single-view vs fused metrics.");
}
