#pragma once

// Parameter-space finite differences for the toy network.

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "mvseg/toynet.hpp"
#include "test_util.hpp"

namespace mvtest {

/// He init leaves biases at zero, which puts ReLU inputs of blank image
/// regions exactly on the kink; finite differences need them moved off.
inline void randomize_biases(mvseg::ToyNetParams& p, std::mt19937_64& rng, double sigma = 0.1) {
  for (std::size_t b = 0; b < p.blob_count(); ++b) {
    if (p.name(b).ends_with(".b")) p.blob(b) = random_tensor(p.blob(b).shape(), rng, sigma);
  }
}

inline double param_dot(const mvseg::ToyNetParams& a, const std::vector<mvseg::Tensor>& dir) {
  double s = 0;
  for (std::size_t b = 0; b < a.blob_count(); ++b) s += dot(a.blob(b), dir[b]);
  return s;
}

/// Worst relative error of `grads` against central differences of f along
/// random directions and one random coordinate per blob. p is restored.
inline double param_fd_check(mvseg::ToyNetParams& p, const mvseg::ToyNetParams& grads,
                             const std::function<double()>& f, std::mt19937_64& rng,
                             std::size_t dirs = 3, double h = 1e-6) {
  double worst = 0;
  const mvseg::ToyNetParams p0 = p;
  for (std::size_t d = 0; d < dirs; ++d) {
    std::vector<mvseg::Tensor> dir;
    for (std::size_t b = 0; b < p.blob_count(); ++b) dir.push_back(random_tensor(p.blob(b).shape(), rng));
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
    worst = std::max(worst, rel_err(param_dot(grads, dir), (fp - fm) / (2 * h)));
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
    worst = std::max(worst, rel_err(grads.blob(b).data()[i], (fp - fm) / (2 * h)));
  }
  return worst;
}

}  // namespace mvtest
