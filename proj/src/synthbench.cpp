#include "mvseg/synthbench.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "mvseg/trainer.hpp"
#include "mvseg/warp_sampler.hpp"

namespace mvseg {

void SceneSpec::validate() const {
  if (num_classes < 1 || num_classes >= kIgnoreLabel) throw ConfigError("scene needs 1..254 classes");
  auto check = [&](Label l) {
    if (l >= num_classes) throw ConfigError("scene label " + std::to_string(l) + " >= K");
  };
  check(background);
  if (room) {
    check(room->floor_label);
    check(room->ceiling_label);
    check(room->wall_label);
    if (!(room->lo.array() < room->hi.array()).all()) throw ConfigError("room has empty extent");
  }
  for (const auto& b : boxes) {
    check(b.label);
    if (!(b.lo.array() <= b.hi.array()).all()) throw ConfigError("box has inverted extent");
  }
}

SceneSpec load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  SceneSpec s;
  bool have_classes = false;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw FormatError(path + ":" + std::to_string(line_no) + ": " + msg);
  };
  auto read_label = [&](std::istringstream& ls) {
    int v = -1;
    if (!(ls >> v) || v < 0 || v >= kIgnoreLabel) fail("bad label");
    return static_cast<Label>(v);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "classes") {
      if (!(ls >> s.num_classes)) fail("bad class count");
      have_classes = true;
    } else if (kind == "room") {
      Room r;
      if (!(ls >> r.lo.x() >> r.lo.y() >> r.lo.z() >> r.hi.x() >> r.hi.y() >> r.hi.z())) {
        fail("room needs 6 coordinates");
      }
      r.floor_label = read_label(ls);
      r.ceiling_label = read_label(ls);
      r.wall_label = read_label(ls);
      s.room = r;
    } else if (kind == "box") {
      AxisBox b;
      if (!(ls >> b.lo.x() >> b.lo.y() >> b.lo.z() >> b.hi.x() >> b.hi.y() >> b.hi.z())) {
        fail("box needs 6 coordinates");
      }
      b.label = read_label(ls);
      s.boxes.push_back(b);
    } else if (kind == "rect") {
      std::string axis;
      double c, a0, a1, b0, b1;
      if (!(ls >> axis >> c >> a0 >> a1 >> b0 >> b1)) fail("rect needs axis and 5 numbers");
      AxisBox b;
      int ax = axis == "x" ? 0 : axis == "y" ? 1 : axis == "z" ? 2 : -1;
      if (ax < 0) fail("rect axis must be x, y or z");
      const int ia = (ax + 1) % 3;
      const int ib = (ax + 2) % 3;
      b.lo[ax] = b.hi[ax] = c;
      b.lo[ia] = std::min(a0, a1);
      b.hi[ia] = std::max(a0, a1);
      b.lo[ib] = std::min(b0, b1);
      b.hi[ib] = std::max(b0, b1);
      b.label = read_label(ls);
      s.boxes.push_back(b);
    } else if (kind == "background") {
      s.background = read_label(ls);
    } else {
      fail("unknown directive \"" + kind + "\"");
    }
    std::string extra;
    if (ls >> extra) fail("trailing tokens");
  }
  if (!have_classes) throw FormatError(path + ": missing \"classes\" directive");
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw FormatError(path + ": " + e.what());
  }
  return s;
}

void save_scene(const std::string& path, const SceneSpec& scene) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "classes " << scene.num_classes << '\n';
  out << "background " << int(scene.background) << '\n';
  if (scene.room) {
    const Room& r = *scene.room;
    out << "room " << r.lo.x() << ' ' << r.lo.y() << ' ' << r.lo.z() << ' ' << r.hi.x() << ' '
        << r.hi.y() << ' ' << r.hi.z() << ' ' << int(r.floor_label) << ' ' << int(r.ceiling_label)
        << ' ' << int(r.wall_label) << '\n';
  }
  for (const auto& b : scene.boxes) {
    out << "box " << b.lo.x() << ' ' << b.lo.y() << ' ' << b.lo.z() << ' ' << b.hi.x() << ' '
        << b.hi.y() << ' ' << b.hi.z() << ' ' << int(b.label) << '\n';
  }
}

SceneSpec random_scene(std::size_t num_classes, std::mt19937_64& rng) {
  SceneSpec s;
  s.num_classes = num_classes;
  Room r;
  r.wall_label = 0;
  r.floor_label = static_cast<Label>(num_classes > 1 ? 1 : 0);
  r.ceiling_label = static_cast<Label>(num_classes > 2 ? 2 : 0);
  s.room = r;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> count(3, 6);
  const std::size_t first_object_label = num_classes > 3 ? 3 : (num_classes > 1 ? 1 : 0);
  std::uniform_int_distribution<std::size_t> label(first_object_label, num_classes - 1);
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    AxisBox b;
    const double cx = -1.6 + 3.2 * u01(rng);
    const double cz = 1.4 + 2.4 * u01(rng);
    const double sx = 0.3 + 0.6 * u01(rng);
    const double sz = 0.3 + 0.6 * u01(rng);
    const double sy = 0.3 + 1.0 * u01(rng);
    b.lo = {cx - sx / 2, r.hi.y() - sy, cz - sz / 2};
    b.hi = {cx + sx / 2, r.hi.y(), cz + sz / 2};
    b.label = static_cast<Label>(label(rng));
    s.boxes.push_back(b);
  }
  // A flat panel on the back wall.
  AxisBox panel;
  const double px = -1.5 + 2.0 * u01(rng);
  panel.lo = {px, -1.0, r.hi.z() - 0.01};
  panel.hi = {px + 0.6 + 0.6 * u01(rng), -0.2, r.hi.z() - 0.01};
  panel.label = static_cast<Label>(label(rng));
  s.boxes.push_back(panel);
  return s;
}

namespace {

constexpr double kRayEps = 1e-9;

// Slab intersection; returns entry distance for rays starting outside.
bool intersect_box(const AxisBox& b, const Vec3& o, const Vec3& d, double& t_hit) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < b.lo[a] || o[a] > b.hi[a]) return false;
      continue;
    }
    double t1 = (b.lo[a] - o[a]) / d[a];
    double t2 = (b.hi[a] - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far || t_near <= kRayEps) return false;
  t_hit = t_near;
  return true;
}

std::array<double, 3> class_color(Label l) {
  static constexpr std::array<std::array<double, 3>, 8> kPalette = {{{0.55, 0.55, 0.60},
                                                                      {0.60, 0.45, 0.30},
                                                                      {0.85, 0.85, 0.80},
                                                                      {0.20, 0.40, 0.80},
                                                                      {0.80, 0.25, 0.20},
                                                                      {0.25, 0.70, 0.30},
                                                                      {0.75, 0.70, 0.20},
                                                                      {0.55, 0.30, 0.65}}};
  if (l < kPalette.size()) return kPalette[l];
  // Deterministic spread for larger label sets.
  const double h = std::fmod(0.618034 * l, 1.0);
  return {0.3 + 0.5 * h, 0.3 + 0.5 * std::fmod(h + 0.33, 1.0), 0.3 + 0.5 * std::fmod(h + 0.66, 1.0)};
}

}  // namespace

RayHit cast_ray(const SceneSpec& scene, const Vec3& origin, const Vec3& dir) {
  RayHit best;
  best.t = std::numeric_limits<double>::infinity();
  best.label = scene.background;
  if (scene.room) {
    const Room& r = *scene.room;
    for (int a = 0; a < 3; ++a) {
      if (dir[a] == 0.0) continue;
      const double plane = dir[a] > 0 ? r.hi[a] : r.lo[a];
      const double t = (plane - origin[a]) / dir[a];
      if (t > kRayEps && t < best.t) {
        best.t = t;
        best.hit = true;
        best.label = a == 1 ? (dir[a] > 0 ? r.floor_label : r.ceiling_label) : r.wall_label;
      }
    }
  }
  for (const auto& b : scene.boxes) {
    double t = 0;
    if (intersect_box(b, origin, dir, t) && t < best.t) {
      best.t = t;
      best.hit = true;
      best.label = b.label;
    }
  }
  if (best.hit) {
    best.point = origin + best.t * dir;
  } else {
    best.t = 0;
  }
  return best;
}

RenderResult render(const SceneSpec& scene, const RigidTransform& camera_to_world,
                    const CameraIntrinsics& k) {
  k.validate();
  const std::size_t h = k.height;
  const std::size_t w = k.width;
  RenderResult r{DepthMap(h, w, 0.0), LabelMap(h, w, scene.background), Tensor({3, h, w}, 0.0)};
  const Mat3& R = camera_to_world.rotation();
  const Vec3& origin = camera_to_world.translation();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Vec3 d_cam{(static_cast<double>(x) - k.cx) / k.fx, (static_cast<double>(y) - k.cy) / k.fy,
                       1.0};
      const RayHit hit = cast_ray(scene, origin, R * d_cam);
      r.labels(y, x) = hit.label;
      const auto base = class_color(hit.label);
      double shade = 1.0;
      if (hit.hit) {
        r.depth(y, x) = hit.t;  // camera-frame z because d_cam.z == 1
        const Vec3& p = hit.point;
        const long cell = static_cast<long>(std::floor(p.x() / 0.25 + 1e-6)) +
                          static_cast<long>(std::floor(p.y() / 0.25 + 1e-6)) +
                          static_cast<long>(std::floor(p.z() / 0.25 + 1e-6));
        shade = (cell & 1) ? 0.8 : 1.0;
      }
      for (std::size_t c = 0; c < 3; ++c) r.rgb(c, y, x) = base[c] * shade;
    }
  }
  return r;
}

double render_depth_at(const SceneSpec& scene, const RigidTransform& camera_to_world,
                       const CameraIntrinsics& k, double px, double py) {
  const Vec3 d_cam{(px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0};
  const RayHit hit =
      cast_ray(scene, camera_to_world.translation(), camera_to_world.rotation() * d_cam);
  return hit.hit ? hit.t : 0.0;
}

OracleWarp oracle_warp(const LabelMap& source_labels, const DepthMap& source_depth,
                       const DepthMap& target_depth, const RigidTransform& pose_target_to_source,
                       const CameraIntrinsics& k, double occlusion_tolerance) {
  const std::size_t h = target_depth.height();
  const std::size_t w = target_depth.width();
  OracleWarp out{LabelMap(h, w, kIgnoreLabel), Mask(h, w, 0)};
  const Mat3& R = pose_target_to_source.rotation();
  const Vec3& t = pose_target_to_source.translation();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double z = target_depth(y, x);
      if (!(z > 0) || !std::isfinite(z)) continue;
      const double X = z * (static_cast<double>(x) - k.cx) / k.fx;
      const double Y = z * (static_cast<double>(y) - k.cy) / k.fy;
      const double sx = R(0, 0) * X + R(0, 1) * Y + R(0, 2) * z + t[0];
      const double sy = R(1, 0) * X + R(1, 1) * Y + R(1, 2) * z + t[1];
      const double sz = R(2, 0) * X + R(2, 1) * Y + R(2, 2) * z + t[2];
      if (!(sz > 0)) continue;
      const double u = k.fx * sx / sz + k.cx;
      const double v = k.fy * sy / sz + k.cy;
      const double eps = 1e-9;
      if (u < -eps || v < -eps || u > static_cast<double>(source_labels.width() - 1) + eps ||
          v > static_cast<double>(source_labels.height() - 1) + eps) {
        continue;
      }
      const auto ui = static_cast<std::size_t>(std::lround(u));
      const auto vi = static_cast<std::size_t>(std::lround(v));
      const double zs = source_depth(vi, ui);
      if (!(zs > 0) || std::abs(zs - sz) > occlusion_tolerance) continue;
      out.labels(y, x) = source_labels(vi, ui);
      out.valid(y, x) = 1;
    }
  }
  return out;
}

void NoiseModel::validate() const {
  if (!(misclassification_rate >= 0 && misclassification_rate <= 1)) {
    throw ConfigError("misclassification rate must lie in [0, 1]");
  }
  if (!(logit_sigma >= 0)) throw ConfigError("logit sigma must be non-negative");
}

std::mt19937_64 view_rng(const NoiseModel& noise, std::size_t view) {
  std::seed_seq seq{static_cast<std::uint32_t>(noise.seed), static_cast<std::uint32_t>(noise.seed >> 32),
                    static_cast<std::uint32_t>(view), 0x5eedu};
  return std::mt19937_64(seq);
}

Tensor simulate_predictions(const LabelMap& gt, std::size_t num_classes, const NoiseModel& noise,
                            std::mt19937_64& rng) {
  noise.validate();
  if (num_classes < 2) throw ConfigError("prediction simulation needs K >= 2");
  const std::size_t h = gt.height();
  const std::size_t w = gt.width();
  LabelMap pred(h, w, 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    pred.data()[i] = gt.data()[i] == kIgnoreLabel ? Label{0} : gt.data()[i];
  }
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  if (noise.boundary_radius > 0) {
    const LabelMap src = pred;
    const auto r = static_cast<std::ptrdiff_t>(noise.boundary_radius);
    std::vector<Label> others;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        others.clear();
        for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
          for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
            const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
            const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) ||
                xx >= static_cast<std::ptrdiff_t>(w)) {
              continue;
            }
            const Label l = src(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            if (l != src(y, x) && std::find(others.begin(), others.end(), l) == others.end()) {
              others.push_back(l);
            }
          }
        }
        if (others.empty()) continue;
        if (u01(rng) < 0.5) {
          std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
          pred(y, x) = others[pick(rng)];
        }
      }
    }
  }

  if (noise.misclassification_rate > 0) {
    std::uniform_int_distribution<std::size_t> wrong(1, num_classes - 1);
    for (auto& l : pred.data()) {
      if (u01(rng) < noise.misclassification_rate) {
        l = static_cast<Label>((l + wrong(rng)) % num_classes);
      }
    }
  }

  Tensor scores({num_classes, h, w}, 0.0);
  const std::size_t plane = h * w;
  for (std::size_t p = 0; p < plane; ++p) scores.data()[pred.data()[p] * plane + p] = noise.margin;
  if (noise.logit_sigma > 0) {
    std::normal_distribution<double> n(0.0, noise.logit_sigma);
    for (double& v : scores.data()) v += n(rng);
  }
  return scores;
}

TrajectoryKind parse_trajectory_kind(const std::string& name) {
  if (name == "arc") return TrajectoryKind::kArc;
  if (name == "line") return TrajectoryKind::kLine;
  if (name == "orbit") return TrajectoryKind::kOrbit;
  throw ConfigError("unknown trajectory kind \"" + name + "\"");
}

RigidTransform look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 down(0, 1, 0);
  Vec3 x = down.cross(z);
  if (x.norm() < 1e-9) x = Vec3(1, 0, 0);
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return RigidTransform(r, eye);
}

PosedTrajectory make_trajectory(TrajectoryKind kind, std::size_t frames, const Vec3& target,
                                double extent) {
  if (frames == 0) throw ConfigError("trajectory needs at least one frame");
  PosedTrajectory tr;
  tr.keyframe = frames / 2;
  const double denom = frames > 1 ? static_cast<double>(frames - 1) : 1.0;
  const Vec3 start = Vec3::Zero();
  for (std::size_t i = 0; i < frames; ++i) {
    const double s = frames > 1 ? static_cast<double>(i) / denom - 0.5 : 0.0;  // [-0.5, 0.5]
    Vec3 eye;
    switch (kind) {
      case TrajectoryKind::kLine:
        eye = start + Vec3(extent * s, 0, 0);
        break;
      case TrajectoryKind::kArc: {
        const double radius = (target - start).norm();
        const double angle = extent * s / radius;
        eye = target + Eigen::AngleAxisd(angle, Vec3::UnitY()) * (start - target);
        break;
      }
      case TrajectoryKind::kOrbit: {
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(frames);
        eye = start + Vec3(extent * std::cos(phi), extent * std::sin(phi), 0) - Vec3(extent, 0, 0);
        break;
      }
    }
    tr.poses.push_back(look_at(eye, target));
    tr.timestamps.push_back(static_cast<double>(i) / 30.0);
  }
  return tr;
}

CameraIntrinsics default_intrinsics(std::size_t width, std::size_t height) {
  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  k.fx = k.fy = 0.82 * static_cast<double>(width);
  k.cx = 0.5 * static_cast<double>(width - 1);
  k.cy = 0.5 * static_cast<double>(height - 1);
  return k;
}

BenchmarkReport run_fusion_benchmark(const SceneSpec& scene, const PosedTrajectory& trajectory,
                                     const CameraIntrinsics& k, const NoiseModel& noise,
                                     std::size_t frames, FusionMethod method) {
  scene.validate();
  if (frames == 0) throw ConfigError("benchmark needs at least one frame");
  if (trajectory.poses.empty()) throw DegenerateSampleError("empty trajectory");
  const std::size_t K = scene.num_classes;
  const std::size_t key = trajectory.keyframe;
  const RigidTransform& key_pose = trajectory.poses[key];
  const RenderResult key_view = render(scene, key_pose, k);

  auto rng0 = view_rng(noise, key);
  const Tensor key_scores = simulate_predictions(key_view.labels, K, noise, rng0);
  std::vector<ViewPrediction> views;
  views.push_back({key_scores, Mask(k.height, k.width, 1), static_cast<int>(key)});

  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < trajectory.poses.size(); ++i) {
    if (i != key) others.push_back(i);
  }
  for (std::size_t j : uniform_sample_indices(others.size(), std::min(frames - 1, others.size()))) {
    const std::size_t idx = others[j];
    const RenderResult view = render(scene, trajectory.poses[idx], k);
    auto rng = view_rng(noise, idx);
    const Tensor scores = simulate_predictions(view.labels, K, noise, rng);
    const RigidTransform key_to_view = trajectory.poses[idx].inverse() * key_pose;
    Plane<double> transformed;
    WarpGrid grid = compute_warp_grid(key_view.depth, key_to_view, k, &transformed);
    mask_occlusions(grid, transformed, view.depth);
    SampledMap warped = bilinear_sample(scores, grid);
    views.push_back({std::move(warped.values), std::move(warped.validity), static_cast<int>(idx)});
  }

  BenchmarkReport rep{ConfusionMatrix(K), ConfusionMatrix(K), views.size()};
  rep.single_view.accumulate(argmax_labels(key_scores), key_view.labels);
  rep.fused.accumulate(argmax_labels(fuse_views(method, views)), key_view.labels);
  return rep;
}

std::vector<SequenceSample> make_toy_sequences(std::size_t count, const ToyDataConfig& config,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> gain(0.85, 1.15);
  std::normal_distribution<double> pixel_noise(0.0, config.rgb_noise);
  const CameraIntrinsics k = default_intrinsics(config.width, config.height);

  auto noisy_frame = [&](const RenderResult& r) {
    FrameInput f{r.rgb, r.depth};
    const double g = gain(rng);
    for (double& v : f.rgb.data()) {
      v = std::clamp(v * g + (config.rgb_noise > 0 ? pixel_noise(rng) : 0.0), 0.0, 1.0);
    }
    return f;
  };

  std::vector<SequenceSample> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const SceneSpec scene = random_scene(config.num_classes, rng);
    const Vec3 eye(0.3 * u(rng), 0.2 * u(rng), 0.0);
    const Vec3 target(0.5 * u(rng), 0.25 + 0.25 * u(rng), 2.5);
    const RigidTransform key_pose = look_at(eye, target);
    const RenderResult key_view = render(scene, key_pose, k);

    SequenceSample seq;
    seq.intrinsics = k;
    seq.keyframe = noisy_frame(key_view);
    seq.ground_truth = key_view.labels;
    for (std::size_t j = 0; j < config.neighbors; ++j) {
      const double travel =
          config.max_travel * static_cast<double>(j + 1) / static_cast<double>(config.neighbors);
      Vec3 dir(u(rng), 0.5 * u(rng), 0.3 * u(rng));
      if (dir.norm() < 1e-6) dir = Vec3::UnitX();
      const Vec3 nb_eye = eye + travel * dir.normalized();
      const Vec3 nb_target = target + Vec3(0.15 * u(rng), 0.1 * u(rng), 0.0);
      const RigidTransform pose = look_at(nb_eye, nb_target);
      const RenderResult view = render(scene, pose, k);
      seq.neighbors.push_back({noisy_frame(view), pose.inverse() * key_pose});
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace mvseg
