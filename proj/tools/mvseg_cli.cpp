// mvseg: command-line front end for the multi-view segmentation toolkit.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Geometry>
#include <json.hpp>

#include "mvseg/data_io.hpp"
#include "mvseg/experiment.hpp"
#include "mvseg/fusion.hpp"
#include "mvseg/gradcheck.hpp"
#include "mvseg/metrics.hpp"
#include "mvseg/synthbench.hpp"
#include "mvseg/warp_sampler.hpp"

namespace fs = std::filesystem;
using namespace mvseg;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kIo = 2, kAssociation = 3, kConfig = 4 };

// Thrown by subcommands that ran to completion but whose check failed.
struct CheckFailed {
  std::string what;
};

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

nlohmann::json summary_json(const ConfusionMatrix& cm) {
  const MetricSummary s = summarize(cm);
  nlohmann::json ious = nlohmann::json::array();
  for (const auto& v : class_iou(cm)) ious.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"pixelwise", s.pixelwise}, {"classwise", s.classwise}, {"mean_iou", s.iou},
          {"class_iou", ious}, {"pixels", cm.total()}};
}

std::string frame_stem(int id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", id);
  return buf;
}

// Score map of a manifest frame; the record must name one.
Tensor frame_scores(const FrameRecord& f) {
  if (!f.scores) throw ConfigError("frame " + std::to_string(f.id) + " has no scores entry");
  return load_mvft(*f.scores);
}

struct WarpedFrame {
  SampledMap map;
  std::size_t occluded = 0;
};

WarpedFrame warp_frame_into_key(const SequenceManifest& m, const Trajectory& traj,
                                const CameraIntrinsics& k, const DepthMap& key_depth,
                                const FrameRecord& f) {
  const FrameRecord& key = m.keyframe_record();
  const RigidTransform key_to_frame = relative_pose(traj, key.timestamp, f.timestamp);
  const DepthMap frame_depth = load_depth(f.depth);
  const Tensor scores = frame_scores(f);
  Plane<double> transformed;
  WarpGrid grid = compute_warp_grid(key_depth, key_to_frame, k, &transformed);
  const auto before = std::count(grid.valid.data().begin(), grid.valid.data().end(), 1);
  mask_occlusions(grid, transformed, frame_depth);
  const auto after = std::count(grid.valid.data().begin(), grid.valid.data().end(), 1);
  return {bilinear_sample(scores, grid), static_cast<std::size_t>(before - after)};
}

// ---------------------------------------------------------------- synth-gen

struct SynthGenArgs {
  std::string scene;
  std::string traj = "arc";
  std::size_t frames = 60;
  std::string out;
  std::size_t width = 80;
  std::size_t height = 60;
  double extent = 1.0;
  std::vector<double> target{0.0, 0.3, 2.8};
  std::uint64_t seed = 0;
  double rate = 0.25;
  double sigma = 1.0;
  double margin = 4.0;
  std::size_t boundary = 0;
};

int cmd_synth_gen(const SynthGenArgs& a) {
  const SceneSpec scene = load_scene(a.scene);
  if (a.target.size() != 3) throw ConfigError("--target needs three numbers");
  const PosedTrajectory traj = make_trajectory(parse_trajectory_kind(a.traj), a.frames,
                                               Vec3(a.target[0], a.target[1], a.target[2]), a.extent);
  const CameraIntrinsics k = default_intrinsics(a.width, a.height);
  NoiseModel noise;
  noise.misclassification_rate = a.rate;
  noise.logit_sigma = a.sigma;
  noise.margin = a.margin;
  noise.boundary_radius = a.boundary;
  noise.seed = a.seed;
  noise.validate();

  const fs::path out(a.out);
  for (const char* sub : {"rgb", "depth", "label", "scores"}) {
    std::error_code ec;
    fs::create_directories(out / sub, ec);
    if (ec) throw IoError("cannot create " + (out / sub).string() + ": " + ec.message());
  }
  SequenceManifest m;
  m.intrinsics = (out / "intrinsics.txt").string();
  m.trajectory = (out / "trajectory.txt").string();
  m.keyframe = static_cast<int>(traj.keyframe);
  save_intrinsics(m.intrinsics, k);

  Trajectory entries;
  for (std::size_t i = 0; i < traj.poses.size(); ++i) {
    const RigidTransform& p = traj.poses[i];
    const Eigen::Quaterniond q(p.rotation());
    TrajectoryEntry e;
    e.timestamp = traj.timestamps[i];
    e.translation = p.translation();
    e.rotation = Eigen::Vector4d(q.x(), q.y(), q.z(), q.w());
    entries.push_back(e);

    const RenderResult r = render(scene, p, k);
    auto rng = view_rng(noise, i);
    const Tensor scores = simulate_predictions(r.labels, scene.num_classes, noise, rng);
    const std::string stem = frame_stem(static_cast<int>(i));
    FrameRecord f;
    f.id = static_cast<int>(i);
    f.timestamp = e.timestamp;
    f.rgb = (out / "rgb" / (stem + ".ppm")).string();
    f.depth = (out / "depth" / (stem + ".pgm")).string();
    f.label = (out / "label" / (stem + ".pgm")).string();
    f.scores = (out / "scores" / (stem + ".mvft")).string();
    save_rgb(f.rgb, r.rgb);
    save_depth(f.depth, r.depth);
    save_labels(*f.label, r.labels);
    save_mvft(*f.scores, scores);
    m.frames.push_back(f);
  }
  save_trajectory(m.trajectory, entries);

  // Keyframe first, then by distance along the path.
  const std::size_t key = traj.keyframe;
  std::stable_sort(m.frames.begin(), m.frames.end(), [&](const FrameRecord& x, const FrameRecord& y) {
    const auto dx = static_cast<std::size_t>(std::abs(x.id - static_cast<int>(key)));
    const auto dy = static_cast<std::size_t>(std::abs(y.id - static_cast<int>(key)));
    return dx < dy;
  });
  save_manifest((out / "manifest.txt").string(), m);
  std::printf("wrote %zu frames to %s (keyframe %zu)\n", traj.poses.size(), a.out.c_str(), key);
  return kOk;
}

// --------------------------------------------------------------------- warp

int cmd_warp(const std::string& manifest, int frame_id, const std::string& out,
             std::string mask_out) {
  const SequenceManifest m = load_manifest(manifest);
  const Trajectory traj = load_trajectory(m.trajectory);
  const CameraIntrinsics k = load_intrinsics(m.intrinsics);
  const DepthMap key_depth = load_depth(m.keyframe_record().depth);
  const WarpedFrame w = warp_frame_into_key(m, traj, k, key_depth, m.frame(frame_id));
  save_mvft(out, w.map.values);
  if (mask_out.empty()) mask_out = fs::path(out).replace_extension(".mask.pgm").string();
  save_mask(mask_out, w.map.validity);
  const auto valid = std::count(w.map.validity.data().begin(), w.map.validity.data().end(), 1);
  std::printf("frame %d: %td/%zu valid, %zu occluded\n", frame_id, valid, w.map.validity.size(),
              w.occluded);
  return kOk;
}

// --------------------------------------------------------------------- fuse

int cmd_fuse(const std::string& manifest, const std::string& method_name, std::size_t frames,
             const std::string& out, const std::string& labels_out) {
  const FusionMethod method = parse_fusion_method(method_name);
  if (frames == 0) throw ConfigError("--frames must be at least 1");
  const SequenceManifest m = load_manifest(manifest);
  const Trajectory traj = load_trajectory(m.trajectory);
  const CameraIntrinsics k = load_intrinsics(m.intrinsics);
  const FrameRecord& key = m.keyframe_record();
  const DepthMap key_depth = load_depth(key.depth);
  const Tensor key_scores = frame_scores(key);
  std::vector<ViewPrediction> views;
  views.push_back({key_scores, Mask(key_scores.height(), key_scores.width(), 1), key.id});

  // Uniform over the sequence in time.
  std::vector<const FrameRecord*> others = m.neighbors();
  std::sort(others.begin(), others.end(),
            [](const FrameRecord* a, const FrameRecord* b) { return a->timestamp < b->timestamp; });
  for (std::size_t idx : uniform_sample_indices(others.size(), std::min(frames - 1, others.size()))) {
    WarpedFrame w = warp_frame_into_key(m, traj, k, key_depth, *others[idx]);
    views.push_back({std::move(w.map.values), std::move(w.map.validity), others[idx]->id});
  }
  const Tensor fused = fuse_views(method, views);
  save_mvft(out, fused);
  if (!labels_out.empty()) save_labels(labels_out, argmax_labels(fused));
  std::printf("fused %zu frames with %s\n", views.size(), to_string(method).c_str());
  return kOk;
}

// --------------------------------------------------------------------- eval

LabelMap load_prediction(const std::string& path) {
  if (fs::path(path).extension() == ".mvft") return argmax_labels(load_mvft(path));
  return load_labels(path);
}

int cmd_eval(const std::vector<std::string>& preds, const std::vector<std::string>& gts,
             std::size_t classes, const std::string& json_out) {
  if (preds.size() != gts.size() || preds.empty()) {
    throw ConfigError("--pred and --gt must be given the same number of times");
  }
  if (classes == 0) {
    if (fs::path(preds[0]).extension() != ".mvft") throw ConfigError("--classes is required for label inputs");
    classes = load_mvft(preds[0]).channels();
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const LabelMap p = load_prediction(preds[i]);
    const LabelMap g = load_labels(gts[i]);
    if (!p.same_size(g.height(), g.width())) throw ShapeError(preds[i] + " and " + gts[i] + " differ in size");
    cm.accumulate(p, g);
  }
  print_metric_table(std::cout, cm);
  if (!json_out.empty()) write_json(json_out, summary_json(cm));
  return kOk;
}

// ---------------------------------------------------------------- train-toy

struct TrainArgs {
  std::string consistency = "mono";
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;
  std::string config;
  std::size_t threads = 1;
  std::string out = "toy.ckpt";
  std::string log = "toy.log";
  std::string report;
};

int cmd_train_toy(const TrainArgs& a) {
  const ConsistencyMode mode = parse_consistency_mode(a.consistency);
  if (a.threads == 0) throw ConfigError("--threads must be at least 1");
  ToyExperimentConfig cfg = a.config.empty() ? ToyExperimentConfig{} : load_toy_config(a.config);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  // Training runs serially; every thread count yields the same result.
  const ToyRunResult r = run_toy_experiment(cfg, mode, a.seed);
  save_checkpoint(a.out, r.params);
  std::ofstream log(a.log);
  if (!log) throw IoError("cannot open " + a.log + " for writing");
  for (const auto& rec : r.log) log << format_log_line(rec) << '\n';
  if (!log) throw IoError("failed writing " + a.log);
  const MetricSummary single = summarize(r.evaluation.single_view);
  const MetricSummary fused = summarize(r.evaluation.fused);
  std::printf("mode %s  iterations %zu  final loss %.6f\n", to_string(mode).c_str(), r.log.size(),
              r.log.empty() ? 0.0 : r.log.back().loss);
  std::printf("%-8s %10s %10s %10s\n", "", "pixelwise", "classwise", "mean_iou");
  std::printf("%-8s %10.4f %10.4f %10.4f\n", "single", single.pixelwise, single.classwise, single.iou);
  std::printf("%-8s %10.4f %10.4f %10.4f\n", "fused", fused.pixelwise, fused.classwise, fused.iou);
  if (!a.report.empty()) {
    write_json(a.report, {{"mode", to_string(mode)},
                          {"seed", a.seed},
                          {"iterations", r.log.size()},
                          {"single_view", summary_json(r.evaluation.single_view)},
                          {"fused", summary_json(r.evaluation.fused)}});
  }
  return kOk;
}

// ---------------------------------------------------------------- grad-check

int cmd_grad_check(std::uint64_t seed, double step, double tolerance) {
  bool ok = true;
  std::printf("%-20s %12s %7s\n", "layer", "max_rel_err", "probes");
  for (const auto& e : run_gradient_checks(seed, step)) {
    const bool pass = e.max_rel_error <= tolerance;
    ok = ok && pass;
    std::printf("%-20s %12.3e %7zu %s\n", e.name.c_str(), e.max_rel_error, e.probes, pass ? "ok" : "FAIL");
  }
  if (!ok) throw CheckFailed{"gradient check above tolerance"};
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view consistent RGB-D semantic segmentation toolkit"};
  app.require_subcommand(1);

  SynthGenArgs sg;
  auto* synth = app.add_subcommand("synth-gen", "Render a synthetic sequence with simulated predictions");
  synth->add_option("--scene", sg.scene, "Scene description file")->required();
  synth->add_option("--traj", sg.traj, "Camera path")->check(CLI::IsMember({"arc", "line", "orbit"}));
  synth->add_option("--frames", sg.frames, "Number of frames")->check(CLI::PositiveNumber);
  synth->add_option("--out", sg.out, "Output directory")->required();
  synth->add_option("--width", sg.width, "Image width")->check(CLI::PositiveNumber);
  synth->add_option("--height", sg.height, "Image height")->check(CLI::PositiveNumber);
  synth->add_option("--extent", sg.extent, "Path length in meters (orbit: radius)");
  synth->add_option("--target", sg.target, "Look-at point x y z")->expected(3);
  synth->add_option("--seed", sg.seed, "Prediction noise seed");
  synth->add_option("--noise-rate", sg.rate, "Misclassification rate");
  synth->add_option("--noise-sigma", sg.sigma, "Score noise standard deviation");
  synth->add_option("--noise-margin", sg.margin, "Score margin of the predicted class");
  synth->add_option("--boundary-radius", sg.boundary, "Boundary erosion radius in pixels");

  std::string manifest;
  int frame_id = 0;
  std::string warp_out, mask_out;
  auto* warp = app.add_subcommand("warp", "Warp one frame's scores into the keyframe");
  warp->add_option("--manifest", manifest, "Sequence manifest")->required();
  warp->add_option("--frame", frame_id, "Frame id to warp")->required();
  warp->add_option("--out", warp_out, "Warped scores (MVFT)")->required();
  warp->add_option("--mask-out", mask_out, "Validity mask PGM (default: <out>.mask.pgm)");

  std::string method = "bayes";
  std::size_t fuse_frames = 50;
  std::string fuse_out, labels_out;
  auto* fuse = app.add_subcommand("fuse", "Fuse warped frame predictions into the keyframe");
  fuse->add_option("--manifest", manifest, "Sequence manifest")->required();
  fuse->add_option("--method", method, "Fusion rule")->check(CLI::IsMember({"bayes", "bayes-prob", "maxpool"}));
  fuse->add_option("--frames", fuse_frames, "Frames to fuse, keyframe included");
  fuse->add_option("--out", fuse_out, "Fused map (MVFT)")->required();
  fuse->add_option("--labels-out", labels_out, "Fused labeling PGM");

  std::vector<std::string> preds, gts;
  std::size_t classes = 0;
  std::string json_out;
  auto* eval = app.add_subcommand("eval", "Evaluate predictions against ground truth");
  eval->add_option("--pred", preds, "Prediction (.mvft scores or label PGM); repeatable")->required();
  eval->add_option("--gt", gts, "Ground-truth label PGM; repeatable")->required();
  eval->add_option("--classes", classes, "Number of classes (default: channels of the scores)");
  eval->add_option("--json", json_out, "Also write the metrics as JSON");

  TrainArgs ta;
  std::size_t epochs = 0;
  auto* train = app.add_subcommand("train-toy", "Train the toy network on synthetic sequences");
  train->add_option("--consistency", ta.consistency, "Training mode")
      ->check(CLI::IsMember({"mono", "augment", "bayes", "maxpool"}));
  train->add_option("--seed", ta.seed, "Seed for data, initialization and sampling");
  auto* epochs_opt = train->add_option("--epochs", epochs, "Override the configured epoch count");
  train->add_option("--config", ta.config, "Experiment config (key = value)");
  train->add_option("--threads", ta.threads, "Worker threads (training is serial; accepted for scripts)");
  train->add_option("--out", ta.out, "Checkpoint path");
  train->add_option("--log", ta.log, "Training log path");
  train->add_option("--report", ta.report, "JSON report with evaluation metrics");

  std::uint64_t gc_seed = 0;
  double gc_step = 1e-6, gc_tol = 1e-4;
  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of every backward pass");
  grad->add_option("--seed", gc_seed, "Seed of the random instances");
  grad->add_option("--step", gc_step, "Central difference step");
  grad->add_option("--tolerance", gc_tol, "Maximum accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) return cmd_synth_gen(sg);
    if (*warp) return cmd_warp(manifest, frame_id, warp_out, mask_out);
    if (*fuse) return cmd_fuse(manifest, method, fuse_frames, fuse_out, labels_out);
    if (*eval) return cmd_eval(preds, gts, classes, json_out);
    if (*train) {
      if (epochs_opt->count() > 0) ta.epochs = epochs;
      return cmd_train_toy(ta);
    }
    if (*grad) return cmd_grad_check(gc_seed, gc_step, gc_tol);
  } catch (const CheckFailed& e) {
    std::cerr << "mvseg: " << e.what << '\n';
    return kCheckFailed;
  } catch (const IoError& e) {
    std::cerr << "mvseg: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "mvseg: " << e.what() << '\n';
    return kIo;
  } catch (const AssociationError& e) {
    std::cerr << "mvseg: " << e.what() << '\n';
    return kAssociation;
  } catch (const Error& e) {
    std::cerr << "mvseg: " << e.what() << '\n';
    return kConfig;
  }
  return kConfig;
}
