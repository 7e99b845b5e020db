#include "mvseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "mvseg/consistency.hpp"
#include "mvseg/layers.hpp"
#include "mvseg/synthbench.hpp"
#include "mvseg/toynet.hpp"
#include "mvseg/warp_sampler.hpp"

namespace mvseg {

namespace {

// Below this magnitude both derivatives count as zero-ish and the error is
// measured absolutely.
constexpr double kRelFloor = 1e-6;

double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kRelFloor});
}

Tensor random_tensor(const Shape& s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(s);
  for (double& v : t.data()) v = n(rng);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

// f is a scalar function of the tensor `x` (modified in place and restored);
// grad is its analytic gradient at x.
void probe_tensor(GradCheckEntry& e, Tensor& x, const Tensor& grad, const std::function<double()>& f,
                  double h, std::mt19937_64& rng, std::size_t directions = 3,
                  std::size_t coordinates = 8) {
  for (std::size_t d = 0; d < directions; ++d) {
    const Tensor dir = random_tensor(x.shape(), rng);
    const Tensor x0 = x;
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = x0.data()[i] + h * dir.data()[i];
    const double fp = f();
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = x0.data()[i] - h * dir.data()[i];
    const double fm = f();
    x = x0;
    e.max_rel_error = std::max(e.max_rel_error, rel_error(dot(grad, dir), (fp - fm) / (2 * h)));
    ++e.probes;
  }
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  for (std::size_t c = 0; c < coordinates; ++c) {
    const std::size_t i = pick(rng);
    const double x0 = x.data()[i];
    x.data()[i] = x0 + h;
    const double fp = f();
    x.data()[i] = x0 - h;
    const double fm = f();
    x.data()[i] = x0;
    e.max_rel_error = std::max(e.max_rel_error, rel_error(grad.data()[i], (fp - fm) / (2 * h)));
    ++e.probes;
  }
}

// Same over every blob of a parameter set.
void probe_params(GradCheckEntry& e, ToyNetParams& p, const ToyNetParams& grads,
                  const std::function<double()>& f, double h, std::mt19937_64& rng) {
  for (int d = 0; d < 3; ++d) {
    std::vector<Tensor> dir;
    double analytic = 0;
    for (std::size_t b = 0; b < p.blob_count(); ++b) {
      dir.push_back(random_tensor(p.blob(b).shape(), rng));
      analytic += dot(grads.blob(b), dir.back());
    }
    const ToyNetParams p0 = p;
    auto shift = [&](double s) {
      for (std::size_t b = 0; b < p.blob_count(); ++b) {
        for (std::size_t i = 0; i < p.blob(b).size(); ++i) {
          p.blob(b).data()[i] = p0.blob(b).data()[i] + s * dir[b].data()[i];
        }
      }
    };
    shift(h);
    const double fp = f();
    shift(-h);
    const double fm = f();
    p = p0;
    e.max_rel_error = std::max(e.max_rel_error, rel_error(analytic, (fp - fm) / (2 * h)));
    ++e.probes;
  }
  for (std::size_t b = 0; b < p.blob_count(); ++b) {
    std::uniform_int_distribution<std::size_t> pick(0, p.blob(b).size() - 1);
    const std::size_t i = pick(rng);
    double& w = p.blob(b).data()[i];
    const double w0 = w;
    w = w0 + h;
    const double fp = f();
    w = w0 - h;
    const double fm = f();
    w = w0;
    e.max_rel_error = std::max(e.max_rel_error, rel_error(grads.blob(b).data()[i], (fp - fm) / (2 * h)));
    ++e.probes;
  }
}

WarpGrid random_grid(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.1, 1.1);
  WarpGrid g = identity_grid(h, w);
  for (std::size_t i = 0; i < g.u.size(); ++i) {
    g.u.data()[i] = u(rng);
    g.v.data()[i] = u(rng);
    g.valid.data()[i] = (i % 7) != 0;
  }
  return g;
}

LabelMap random_labels(std::size_t h, std::size_t w, std::size_t k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> l(0, static_cast<int>(k) - 1);
  LabelMap m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = (i % 11 == 0) ? kIgnoreLabel : Label(l(rng));
  return m;
}

}  // namespace

std::vector<GradCheckEntry> run_gradient_checks(std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckEntry> out;
  const std::size_t H = 16, W = 16, K = 3;

  {
    GradCheckEntry e{"bilinear_sampler"};
    Tensor src = random_tensor({K, 12, 14}, rng);
    const WarpGrid g = random_grid(H, W, rng);
    const Tensor r = random_tensor({K, H, W}, rng);
    auto f = [&] { return dot(r, bilinear_sample(src, g).values); };
    probe_tensor(e, src, bilinear_sample_backward(r, g, src.shape()), f, h, rng);
    out.push_back(e);
  }
  {
    GradCheckEntry e{"conv2d"};
    Tensor x = random_tensor({2, H, W}, rng);
    Tensor w = random_tensor({4, 2, 9}, rng);
    Tensor b = random_tensor({4, 1, 1}, rng);
    const Tensor r = random_tensor({4, H, W}, rng);
    auto f = [&] { return dot(r, conv2d(x, w, b, 3)); };
    const ConvGrads g = conv2d_backward(r, x, w, 3);
    probe_tensor(e, x, g.input, f, h, rng);
    probe_tensor(e, w, g.weight, f, h, rng);
    probe_tensor(e, b, g.bias, f, h, rng);
    out.push_back(e);
  }
  {
    GradCheckEntry e{"conv_transpose2d"};
    Tensor x = random_tensor({4, H, W}, rng);
    Tensor w = random_tensor({4, 2, 9}, rng);
    Tensor b = random_tensor({2, 1, 1}, rng);
    const Tensor r = random_tensor({2, H, W}, rng);
    auto f = [&] { return dot(r, conv_transpose2d(x, w, b, 3)); };
    const ConvGrads g = conv_transpose2d_backward(r, x, w, 3);
    probe_tensor(e, x, g.input, f, h, rng);
    probe_tensor(e, w, g.weight, f, h, rng);
    probe_tensor(e, b, g.bias, f, h, rng);
    out.push_back(e);
  }
  {
    GradCheckEntry e{"relu"};
    Tensor x = random_tensor({2, H, W}, rng);
    const Tensor r = random_tensor(x.shape(), rng);
    auto f = [&] { return dot(r, relu(x)); };
    probe_tensor(e, x, relu_backward(r, relu(x)), f, h, rng);
    out.push_back(e);
  }
  {
    GradCheckEntry e{"max_pool2"};
    Tensor x = random_tensor({2, H, W}, rng);
    const Tensor r = random_tensor({2, H / 2, W / 2}, rng);
    auto f = [&] { return dot(r, max_pool2(x).output); };
    probe_tensor(e, x, max_pool2_backward(r, max_pool2(x).switches, x.shape()), f, h, rng);
    out.push_back(e);
  }
  {
    GradCheckEntry e{"max_unpool2"};
    const PoolResult pr = max_pool2(random_tensor({2, H, W}, rng));
    Tensor x = random_tensor(pr.output.shape(), rng);
    const Tensor r = random_tensor({2, H, W}, rng);
    auto f = [&] { return dot(r, max_unpool2(x, pr.switches, {2, H, W})); };
    probe_tensor(e, x, max_unpool2_backward(r, pr.switches, x.shape()), f, h, rng);
    out.push_back(e);
  }
  {
    GradCheckEntry e{"cross_entropy"};
    Tensor s = random_tensor({K, H, W}, rng, 2.0);
    const LabelMap gt = random_labels(H, W, K, rng);
    auto f = [&] { return cross_entropy_loss(s, gt).loss; };
    probe_tensor(e, s, cross_entropy_loss(s, gt).grad, f, h, rng);
    out.push_back(e);
  }

  ToyDataConfig dc;
  dc.num_classes = K;
  dc.width = W;
  dc.height = H;
  dc.neighbors = 2;
  const SequenceSample seq = make_toy_sequences(1, dc, seed)[0];
  ToyNetConfig nc;
  nc.num_classes = K;
  nc.widths = {4, 6};
  ToyNetParams params = ToyNetParams::he_init(nc, rng);
  // Zero biases put ReLU inputs of blank regions exactly on the kink.
  for (std::size_t b = 0; b < params.blob_count(); ++b) {
    if (params.name(b).ends_with(".b")) params.blob(b) = random_tensor(params.blob(b).shape(), rng, 0.1);
  }
  std::mt19937_64 prep_rng(seed);
  const PreparedSample sample = prepare_sample(seq, {0, 1}, nc.levels(), prep_rng);
  for (ConsistencyMode mode : {ConsistencyMode::kMono, ConsistencyMode::kAugment,
                               ConsistencyMode::kBayes, ConsistencyMode::kMaxPool}) {
    GradCheckEntry e{"loss_" + to_string(mode)};
    const ToyNetParams grads = consistency_loss(mode, params, sample).grads;
    auto f = [&] { return consistency_loss(mode, params, sample).loss; };
    probe_params(e, params, grads, f, h, rng);
    out.push_back(e);
  }
  return out;
}

}  // namespace mvseg
