// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance            run everything
//   acceptance --only N   run criterion N

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mvseg/experiment.hpp"
#include "mvseg/fusion.hpp"
#include "mvseg/gradcheck.hpp"
#include "mvseg/layers.hpp"
#include "mvseg/metrics.hpp"
#include "mvseg/synthbench.hpp"
#include "mvseg/warp_sampler.hpp"

using namespace mvseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. Normalized product of softmaxes vs softmax of summed scores.
Outcome criterion_1() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> score(0.0, 5.0);
  std::uniform_int_distribution<std::size_t> view_count(2, 50);
  const std::size_t classes[] = {2, 13, 40};
  double worst = 0, worst_p = 0;
  for (int px = 0; px < 1000; ++px) {
    const std::size_t K = classes[px % 3];
    const std::size_t V = view_count(rng);
    std::vector<ViewPrediction> views;
    // Reference: running product of per-view softmaxes, renormalized after
    // every factor so it never underflows.
    std::vector<double> ref(K, 1.0);
    for (std::size_t v = 0; v < V; ++v) {
      Tensor s({K, 1, 1});
      for (double& x : s.data()) x = score(rng);
      const double m = *std::max_element(s.data().begin(), s.data().end());
      double z = 0;
      for (double x : s.data()) z += std::exp(x - m);
      double norm = 0;
      for (std::size_t c = 0; c < K; ++c) {
        ref[c] *= std::exp(s.data()[c] - m) / z;
        norm += ref[c];
      }
      for (double& r : ref) r /= norm;
      views.push_back({s, Mask(1, 1, 1), static_cast<int>(v)});
    }
    const Tensor fused = bayesian_fuse_scores(views);
    for (std::size_t c = 0; c < K; ++c) worst = std::max(worst, std::abs(fused.data()[c] - ref[c]));
    std::vector<ViewPrediction> probs;
    for (const auto& v : views) probs.push_back({softmax(v.scores), v.validity, v.view_id});
    const Tensor fused_p = bayesian_fuse_probs(probs);
    for (std::size_t c = 0; c < K; ++c) worst_p = std::max(worst_p, std::abs(fused_p.data()[c] - ref[c]));
  }
  return {worst < 1e-9, "max abs deviation " + fmt("%.3e", worst) + " (floored probability path " + fmt("%.3e", worst_p) + ")"};
}

// 2. Finite-difference gradient suite.
Outcome criterion_2() {
  const auto entries = run_gradient_checks(2024);
  double worst = 0;
  std::vector<double> all;
  std::string detail;
  for (const auto& e : entries) {
    worst = std::max(worst, e.max_rel_error);
    all.push_back(e.max_rel_error);
    std::fprintf(stdout, "    %-18s %.3e (%zu probes)\n", e.name.c_str(), e.max_rel_error, e.probes);
  }
  std::sort(all.begin(), all.end());
  const double median = all[all.size() / 2];
  return {worst < 1e-4 && entries.size() == 11,
          "max rel err " + fmt("%.3e", worst) + ", median " + fmt("%.3e", median)};
}

// 3. Pipeline warp vs brute-force oracle on random scenes and poses.
Outcome criterion_3() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t W = 64, H = 48, K = 5;
  const CameraIntrinsics k = default_intrinsics(W, H);
  const double max_rot = 15.0 * 3.14159265358979323846 / 180.0;
  double worst_agree = 1.0, worst_round_trip = 0.0;
  std::size_t round_trip_pixels = 0;
  for (int s = 0; s < 10; ++s) {
    const SceneSpec scene = random_scene(K, rng);
    const RigidTransform key = look_at(Vec3(0.2 * u(rng), 0.1 * u(rng), 0), Vec3(0.3 * u(rng), 0.3, 2.5));
    const Vec3 axis = Vec3(u(rng), u(rng), u(rng)).normalized();
    const Vec3 shift = Vec3(u(rng), u(rng), u(rng)).normalized() * 0.3 * std::abs(u(rng));
    const RigidTransform src = key * RigidTransform::from_axis_angle(axis, max_rot * u(rng), shift);
    const RenderResult rk = render(scene, key, k);
    const RenderResult rs = render(scene, src, k);
    const RigidTransform key_to_src = src.inverse() * key;

    const OracleWarp oracle = oracle_warp(rs.labels, rs.depth, rk.depth, key_to_src, k);
    Plane<double> transformed;
    WarpGrid grid = compute_warp_grid(rk.depth, key_to_src, k, &transformed);
    mask_occlusions(grid, transformed, rs.depth);
    Tensor onehot({K, H, W}, 0.0);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) onehot(rs.labels(y, x), y, x) = 1.0;
    }
    const SampledMap warped = bilinear_sample(onehot, grid);
    const LabelMap labels = argmax_labels(warped.values);
    std::size_t both = 0, agree = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!oracle.valid.data()[i] || !warped.validity.data()[i]) continue;
      ++both;
      agree += labels.data()[i] == oracle.labels.data()[i];
    }
    worst_agree = std::min(worst_agree, both ? double(agree) / double(both) : 0.0);

    // Round trip: follow the grid into the source, read the exact rendered
    // depth there and come back with the inverse pose.
    const RigidTransform src_to_key = key_to_src.inverse();
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        if (!grid.valid(y, x)) continue;
        const double sx = denormalize_coord(grid.u(y, x), W);
        const double sy = denormalize_coord(grid.v(y, x), H);
        const double zs = render_depth_at(scene, src, k, sx, sy);
        // A sub-pixel ray grazing a silhouette may hit another surface.
        if (std::abs(zs - transformed(y, x)) > 1e-6) continue;
        const auto back = project(src_to_key(backproject({sx, sy}, zs, k)), k);
        if (!back) continue;
        const double du = normalize_coord(back->x(), W) - normalize_coord(double(x), W);
        const double dv = normalize_coord(back->y(), H) - normalize_coord(double(y), H);
        worst_round_trip = std::max({worst_round_trip, std::abs(du), std::abs(dv)});
        ++round_trip_pixels;
      }
    }
  }
  return {worst_agree >= 0.99 && worst_round_trip < 1e-6 && round_trip_pixels > 0,
          "min agreement " + fmt("%.4f", worst_agree) + ", round-trip " + fmt("%.2e", worst_round_trip) +
              " over " + std::to_string(round_trip_pixels) + " px"};
}

// 4. Bayesian fusion gain on the synthetic benchmark.
Outcome criterion_4() {
  double single = 0, gp = 0, gc = 0, gi = 0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const SceneSpec scene = random_scene(5, rng);
    const PosedTrajectory t = make_trajectory(TrajectoryKind::kArc, 60, Vec3(0, 0.3, 2.8), 1.0);
    NoiseModel n;
    n.misclassification_rate = 0.25;
    n.logit_sigma = 1.0;
    n.seed = static_cast<std::uint64_t>(seed);
    const BenchmarkReport r = run_fusion_benchmark(scene, t, default_intrinsics(80, 60), n, 50, FusionMethod::kBayes);
    const MetricSummary a = r.single(), b = r.fused_summary();
    single += a.pixelwise / seeds;
    gp += (b.pixelwise - a.pixelwise) / seeds;
    gc += (b.classwise - a.classwise) / seeds;
    gi += (b.iou - a.iou) / seeds;
  }
  const bool calibrated = std::abs(single - 0.75) < 0.05;
  return {calibrated && gp >= 0.01 && gc >= 0.01 && gi >= 0.01,
          "single-view pixelwise " + fmt("%.4f", single) + ", gains +" + fmt("%.2f", 100 * gp) + " / +" +
              fmt("%.2f", 100 * gc) + " / +" + fmt("%.2f", 100 * gi) + " pp"};
}

// 5. Consistency modes vs the mono baseline in toy training.
Outcome criterion_5() {
  const ToyExperimentConfig cfg = load_toy_config(MVSEG_SOURCE_DIR "/configs/toy.cfg");
  const ConsistencyMode modes[] = {ConsistencyMode::kMono, ConsistencyMode::kAugment, ConsistencyMode::kBayes,
                                   ConsistencyMode::kMaxPool};
  const int runs = 5;
  double acc[4] = {0, 0, 0, 0};
  for (int seed = 0; seed < runs; ++seed) {
    for (int m = 0; m < 4; ++m) {
      const ToyRunResult r = run_toy_experiment(cfg, modes[m], static_cast<std::uint64_t>(seed));
      const double a = pixelwise_accuracy(r.evaluation.fused);
      acc[m] += a / runs;
      std::fprintf(stdout, "    seed %d %-8s fused pixelwise %.4f\n", seed, to_string(modes[m]).c_str(), a);
      std::fflush(stdout);
    }
  }
  const bool pass = acc[1] >= acc[0] && acc[2] >= acc[0] && acc[3] > acc[0];
  return {pass, "mean fused pixelwise mono " + fmt("%.4f", acc[0]) + ", augment " + fmt("%.4f", acc[1]) +
                    ", bayes " + fmt("%.4f", acc[2]) + ", maxpool " + fmt("%.4f", acc[3])};
}

// 6. Metric formulas on hand-computed confusion matrices.
Outcome criterion_6() {
  bool ok = true;
  std::string detail;
  auto check = [&](const char* what, double got, double want) {
    if (got != want) {
      ok = false;
      detail += std::string(what) + " " + fmt("%.17g", got) + " != " + fmt("%.17g", want) + "; ";
    }
  };
  {
    // [[1,1],[0,2]]: rows are truth.
    ConfusionMatrix cm(2);
    cm.accumulate(LabelMap(1, 4, {0, 1, 1, 1}), LabelMap(1, 4, {0, 0, 1, 1}));
    check("2x2 counts c01", double(cm(0, 1)), 1.0);
    check("2x2 pixelwise", pixelwise_accuracy(cm), 3.0 / 4.0);
    check("2x2 classwise", classwise_accuracy(cm), (1.0 / 2.0 + 2.0 / 2.0) / 2.0);
    check("2x2 iou", mean_iou(cm), (1.0 / 2.0 + 2.0 / 3.0) / 2.0);
  }
  {
    // [[3,1,0],[0,2,2],[1,0,1]]
    ConfusionMatrix cm(3);
    cm.add(0, 0, 3);
    cm.add(0, 1, 1);
    cm.add(1, 1, 2);
    cm.add(1, 2, 2);
    cm.add(2, 0, 1);
    cm.add(2, 2, 1);
    check("3x3 pixelwise", pixelwise_accuracy(cm), 6.0 / 10.0);
    check("3x3 classwise", classwise_accuracy(cm), (3.0 / 4.0 + 2.0 / 4.0 + 1.0 / 2.0) / 3.0);
    check("3x3 iou", mean_iou(cm), (3.0 / 5.0 + 2.0 / 5.0 + 1.0 / 4.0) / 3.0);
  }
  {
    LabelMap gt(6, 7);
    for (std::size_t i = 0; i < gt.size(); ++i) gt.data()[i] = Label(i % 4);
    ConfusionMatrix cm(4);
    cm.accumulate(gt, gt);
    check("identity pixelwise", pixelwise_accuracy(cm), 1.0);
    check("identity classwise", classwise_accuracy(cm), 1.0);
    check("identity iou", mean_iou(cm), 1.0);
  }
  return {ok, ok ? "all hand-computed values exact" : detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 7. Two serial CLI training runs produce identical bytes.
Outcome criterion_7() {
  const fs::path dir = fs::current_path() / "acceptance_work" / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (const char* run : {"a", "b"}) {
    const std::string cmd = std::string("\"") + MVSEG_CLI_PATH + "\" train-toy --threads 1 --seed 7 --consistency bayes" +
                            " --out \"" + (dir / (std::string(run) + ".ckpt")).string() + "\" --log \"" +
                            (dir / (std::string(run) + ".log")).string() + "\" > \"" +
                            (dir / (std::string(run) + ".stdout")).string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, std::string("train-toy run ") + run + " failed"};
  }
  const std::string ca = slurp(dir / "a.ckpt"), cb = slurp(dir / "b.ckpt");
  const std::string la = slurp(dir / "a.log"), lb = slurp(dir / "b.log");
  const bool pass = !ca.empty() && !la.empty() && ca == cb && la == lb;
  return {pass, "checkpoint " + std::to_string(ca.size()) + " B " + (ca == cb ? "identical" : "differs") + ", log " +
                    std::to_string(std::count(la.begin(), la.end(), '\n')) + " lines " +
                    (la == lb ? "identical" : "differs")};
}

// 8. Stochastic label pooling draw frequencies.
Outcome criterion_8() {
  // 4x4 blocks holding 8 x label 0, 5 x label 1, 2 x label 2, 1 ignored.
  const std::size_t blocks = 100, rounds = 1000;
  const Label pattern[16] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, kIgnoreLabel};
  LabelMap gt(4, 4 * blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t i = 0; i < 16; ++i) gt(i / 4, 4 * b + i % 4) = pattern[(i + 3 * b) % 16];
  }
  std::mt19937_64 rng(8);
  double counts[3] = {0, 0, 0};
  std::size_t other = 0;
  for (std::size_t r = 0; r < rounds; ++r) {
    const LabelMap out = stochastic_pool_labels(gt, 4, rng);
    for (Label l : out.data()) {
      if (l < 3) {
        counts[l] += 1;
      } else {
        ++other;
      }
    }
  }
  const double n = double(blocks * rounds);
  const double p[3] = {8.0 / 15.0, 5.0 / 15.0, 2.0 / 15.0};
  bool ok = other == 0;
  double worst_z = 0;
  for (int c = 0; c < 3; ++c) {
    const double z = std::abs(counts[c] - n * p[c]) / std::sqrt(n * p[c] * (1 - p[c]));
    worst_z = std::max(worst_z, z);
    ok = ok && z <= 3.0;
  }
  return {ok, fmt("%.0f", n) + " draws, worst deviation " + fmt("%.2f", worst_z) + " sigma"};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"bayes product/sum identity", criterion_1}, {"gradient suite", criterion_2},
      {"warp vs oracle", criterion_3},             {"fusion gain", criterion_4},
      {"consistency ordering", criterion_5},       {"metric formulas", criterion_6},
      {"cli determinism", criterion_7},            {"stochastic pooling", criterion_8}};
  // Wall-clock budgets in seconds (0 = none).
  const double budget[] = {1, 60, 30, 300, 1200, 0, 0, 0};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only != 0 && only != id) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget[i] > 0 && secs > budget[i]) {
      o.pass = false;
      o.detail += ", over the " + fmt("%.0f", budget[i]) + " s budget";
    }
    std::printf("%s criterion %d (%s): %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
