#include "mvseg/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvseg {

namespace {

void check_views(std::span<const ViewPrediction> views) {
  if (views.empty()) throw DegenerateSampleError("fusion needs at least one view");
  const Shape& s = views.front().scores.shape();
  for (const auto& v : views) {
    if (v.scores.shape() != s) throw ShapeError("fused views disagree in shape");
    if (!v.validity.same_size(s.height, s.width)) throw ShapeError("validity mask size mismatch");
  }
}

// Softmax of the channel vector at pixel p of `t`, written into `out`.
void softmax_pixel(const Tensor& t, std::size_t p, Tensor& out) {
  const std::size_t plane = t.shape().plane();
  const auto in = t.data();
  auto dst = out.data();
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < t.channels(); ++c) m = std::max(m, in[c * plane + p]);
  double z = 0.0;
  for (std::size_t c = 0; c < t.channels(); ++c) {
    const double e = std::exp(in[c * plane + p] - m);
    dst[c * plane + p] = e;
    z += e;
  }
  for (std::size_t c = 0; c < t.channels(); ++c) dst[c * plane + p] /= z;
}

template <typename F>
Tensor accumulate_valid(std::span<const ViewPrediction> views, F&& term) {
  check_views(views);
  const Shape s = views.front().scores.shape();
  const std::size_t plane = s.plane();
  Tensor acc(s, 0.0);
  auto dst = acc.data();
  for (std::size_t p = 0; p < plane; ++p) {
    bool any = false;
    for (const auto& v : views) {
      if (!v.validity.data()[p]) continue;
      any = true;
      for (std::size_t c = 0; c < s.channels; ++c) dst[c * plane + p] += term(v.scores.data()[c * plane + p]);
    }
    if (!any) {
      for (std::size_t c = 0; c < s.channels; ++c) {
        dst[c * plane + p] = term(views.front().scores.data()[c * plane + p]);
      }
    }
  }
  return acc;
}

}  // namespace

Tensor softmax(const Tensor& scores) {
  Tensor out(scores.shape(), 0.0);
  for (std::size_t p = 0; p < scores.shape().plane(); ++p) softmax_pixel(scores, p, out);
  return out;
}

Tensor bayesian_fuse_probs(std::span<const ViewPrediction> prob_views) {
  // Products of many probabilities underflow; sum logs and renormalize.
  const Tensor log_sum = accumulate_valid(
      prob_views, [](double p) { return std::log(std::max(p, kProbabilityFloor)); });
  return softmax(log_sum);
}

Tensor sum_valid_scores(std::span<const ViewPrediction> views) {
  return accumulate_valid(views, [](double s) { return s; });
}

Tensor bayesian_fuse_scores(std::span<const ViewPrediction> views) {
  return softmax(sum_valid_scores(views));
}

Tensor recursive_fuse(const Tensor& prior, const Tensor& likelihood) {
  if (prior.shape() != likelihood.shape()) throw ShapeError("prior and likelihood disagree");
  const Shape s = prior.shape();
  const std::size_t plane = s.plane();
  Tensor post(s, 0.0);
  auto dst = post.data();
  for (std::size_t p = 0; p < plane; ++p) {
    double z = 0.0;
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double v = prior.data()[c * plane + p] * likelihood.data()[c * plane + p];
      dst[c * plane + p] = v;
      z += v;
    }
    if (z > 0) {
      for (std::size_t c = 0; c < s.channels; ++c) dst[c * plane + p] /= z;
    } else {
      // Prior and likelihood are contradictory; keep the prior.
      for (std::size_t c = 0; c < s.channels; ++c) dst[c * plane + p] = prior.data()[c * plane + p];
    }
  }
  return post;
}

PooledMap multiview_maxpool(std::span<const SampledMap> views) {
  if (views.empty()) throw DegenerateSampleError("max-pooling needs at least one view");
  const Shape s = views.front().values.shape();
  for (const auto& v : views) {
    if (v.values.shape() != s || !v.validity.same_size(s.height, s.width)) {
      throw ShapeError("pooled views disagree in shape");
    }
  }
  const std::size_t plane = s.plane();
  PooledMap out{{Tensor(s, 0.0), Mask(s.height, s.width, 0)},
                std::vector<std::int32_t>(s.checked_size(), -1)};
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      const std::size_t i = c * plane + p;
      double best = 0.0;
      std::int32_t arg = -1;
      for (std::size_t v = 0; v < views.size(); ++v) {
        if (!views[v].validity.data()[p]) continue;
        const double x = views[v].values.data()[i];
        if (arg < 0 || x > best) {
          best = x;
          arg = static_cast<std::int32_t>(v);
        }
      }
      out.argmax[i] = arg;
      if (arg >= 0) {
        out.map.values.data()[i] = best;
        out.map.validity.data()[p] = 1;
      }
    }
  }
  return out;
}

std::vector<Tensor> multiview_maxpool_backward(const Tensor& grad, const PooledMap& pooled,
                                               std::size_t num_views) {
  if (grad.shape() != pooled.map.values.shape()) throw ShapeError("max-pool gradient mismatch");
  std::vector<Tensor> out(num_views, Tensor(grad.shape(), 0.0));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const std::int32_t v = pooled.argmax[i];
    if (v >= 0) out[static_cast<std::size_t>(v)].data()[i] += grad.data()[i];
  }
  return out;
}

FusionMethod parse_fusion_method(const std::string& name) {
  if (name == "bayes") return FusionMethod::kBayes;
  if (name == "bayes-prob") return FusionMethod::kBayesProb;
  if (name == "maxpool") return FusionMethod::kMaxPool;
  throw ConfigError("unknown fusion method \"" + name + "\"");
}

std::string to_string(FusionMethod method) {
  switch (method) {
    case FusionMethod::kBayes:
      return "bayes";
    case FusionMethod::kBayesProb:
      return "bayes-prob";
    case FusionMethod::kMaxPool:
      return "maxpool";
  }
  return "?";
}

Tensor fuse_views(FusionMethod method, std::span<const ViewPrediction> views) {
  switch (method) {
    case FusionMethod::kBayes:
      return sum_valid_scores(views);
    case FusionMethod::kBayesProb: {
      std::vector<ViewPrediction> probs;
      probs.reserve(views.size());
      for (const auto& v : views) probs.push_back({softmax(v.scores), v.validity, v.view_id});
      return bayesian_fuse_probs(probs);
    }
    case FusionMethod::kMaxPool: {
      check_views(views);
      std::vector<SampledMap> maps;
      maps.reserve(views.size());
      for (const auto& v : views) maps.push_back({v.scores, v.validity});
      PooledMap pooled = multiview_maxpool(maps);
      // Pixels no view covers fall back to the keyframe.
      const std::size_t plane = pooled.map.values.shape().plane();
      for (std::size_t p = 0; p < plane; ++p) {
        if (pooled.map.validity.data()[p]) continue;
        for (std::size_t c = 0; c < pooled.map.values.channels(); ++c) {
          pooled.map.values.data()[c * plane + p] = views.front().scores.data()[c * plane + p];
        }
      }
      return std::move(pooled.map.values);
    }
  }
  throw ConfigError("unknown fusion method");
}

}  // namespace mvseg
