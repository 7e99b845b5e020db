#include "mvseg/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvseg {

namespace {

void check_conv(const Tensor& input, const Tensor& weight, std::size_t kernel, std::size_t in_dim) {
  if (kernel % 2 == 0) throw ConfigError("convolution kernel size must be odd");
  if (weight.width() != kernel * kernel) throw ShapeError("weight does not match kernel size");
  const std::size_t cin = in_dim == 0 ? weight.height() : weight.channels();
  if (input.channels() != cin) {
    throw ShapeError("input has " + std::to_string(input.channels()) + " channels, weight expects " +
                     std::to_string(cin));
  }
}

// Visits every (output row/col, input row/col) pair linked by kernel tap
// (ky, kx) under "same" padding, calling f(out_index, in_index) per column.
template <typename F>
void for_each_tap_row(std::size_t h, std::size_t w, std::size_t kernel, std::size_t ky,
                      std::size_t kx, F&& f) {
  const auto r = static_cast<std::ptrdiff_t>(kernel / 2);
  const auto dy = static_cast<std::ptrdiff_t>(ky) - r;
  const auto dx = static_cast<std::ptrdiff_t>(kx) - r;
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(w);
  const std::ptrdiff_t x_lo = std::max<std::ptrdiff_t>(0, -dx);
  const std::ptrdiff_t x_hi = std::min<std::ptrdiff_t>(W, W - dx);
  if (x_lo >= x_hi) return;
  for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, -dy); y < std::min<std::ptrdiff_t>(H, H - dy);
       ++y) {
    const std::size_t out_row = static_cast<std::size_t>(y * W);
    const std::size_t in_row = static_cast<std::size_t>((y + dy) * W + dx);
    f(out_row + static_cast<std::size_t>(x_lo), in_row + static_cast<std::size_t>(x_lo),
      static_cast<std::size_t>(x_hi - x_lo));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t kernel) {
  check_conv(input, weight, kernel, 0);
  const std::size_t cout = weight.channels();
  const std::size_t cin = weight.height();
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  Tensor out({cout, h, w});
  for (std::size_t co = 0; co < cout; ++co) {
    auto dst = out.channel(co);
    std::fill(dst.begin(), dst.end(), bias(co, 0, 0));
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const auto src = input.channel(ci);
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const double wt = weight(co, ci, ky * kernel + kx);
          for_each_tap_row(h, w, kernel, ky, kx, [&](std::size_t o, std::size_t i, std::size_t n) {
            for (std::size_t j = 0; j < n; ++j) dst[o + j] += wt * src[i + j];
          });
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& grad_output, const Tensor& input, const Tensor& weight,
                          std::size_t kernel) {
  check_conv(input, weight, kernel, 0);
  const std::size_t cout = weight.channels();
  const std::size_t cin = weight.height();
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  ConvGrads g{Tensor(input.shape(), 0.0), Tensor(weight.shape(), 0.0), Tensor({cout, 1, 1}, 0.0)};
  for (std::size_t co = 0; co < cout; ++co) {
    const auto go = grad_output.channel(co);
    double bsum = 0;
    for (double v : go) bsum += v;
    g.bias(co, 0, 0) = bsum;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const auto src = input.channel(ci);
      auto gin = g.input.channel(ci);
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const double wt = weight(co, ci, ky * kernel + kx);
          double gw = 0;
          for_each_tap_row(h, w, kernel, ky, kx, [&](std::size_t o, std::size_t i, std::size_t n) {
            for (std::size_t j = 0; j < n; ++j) {
              gw += go[o + j] * src[i + j];
              gin[i + j] += wt * go[o + j];
            }
          });
          g.weight(co, ci, ky * kernel + kx) = gw;
        }
      }
    }
  }
  return g;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        std::size_t kernel) {
  check_conv(input, weight, kernel, 1);
  const std::size_t cin = weight.channels();
  const std::size_t cout = weight.height();
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  Tensor out({cout, h, w});
  for (std::size_t co = 0; co < cout; ++co) {
    auto dst = out.channel(co);
    std::fill(dst.begin(), dst.end(), bias(co, 0, 0));
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const auto src = input.channel(ci);
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const double wt = weight(ci, co, ky * kernel + kx);
          // Input pixel p lands on output p + (tap - r); the tap visitor
          // yields (o=p, i=p+d) so scatter from o into i.
          for_each_tap_row(h, w, kernel, ky, kx, [&](std::size_t o, std::size_t i, std::size_t n) {
            for (std::size_t j = 0; j < n; ++j) dst[i + j] += wt * src[o + j];
          });
        }
      }
    }
  }
  return out;
}

ConvGrads conv_transpose2d_backward(const Tensor& grad_output, const Tensor& input,
                                    const Tensor& weight, std::size_t kernel) {
  check_conv(input, weight, kernel, 1);
  const std::size_t cin = weight.channels();
  const std::size_t cout = weight.height();
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  ConvGrads g{Tensor(input.shape(), 0.0), Tensor(weight.shape(), 0.0), Tensor({cout, 1, 1}, 0.0)};
  for (std::size_t co = 0; co < cout; ++co) {
    const auto go = grad_output.channel(co);
    double bsum = 0;
    for (double v : go) bsum += v;
    g.bias(co, 0, 0) = bsum;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const auto src = input.channel(ci);
      auto gin = g.input.channel(ci);
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const double wt = weight(ci, co, ky * kernel + kx);
          double gw = 0;
          for_each_tap_row(h, w, kernel, ky, kx, [&](std::size_t o, std::size_t i, std::size_t n) {
            for (std::size_t j = 0; j < n; ++j) {
              gw += go[i + j] * src[o + j];
              gin[o + j] += wt * go[i + j];
            }
          });
          g.weight(ci, co, ky * kernel + kx) += gw;
        }
      }
    }
  }
  return g;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_output, const Tensor& output) {
  Tensor g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(output.data()[i] > 0)) g.data()[i] = 0.0;
  }
  return g;
}

PoolResult max_pool2(const Tensor& input) {
  if (input.height() % 2 != 0 || input.width() % 2 != 0) {
    throw ShapeError("max_pool2 needs even spatial dims, got " + to_string(input.shape()));
  }
  const std::size_t h = input.height() / 2;
  const std::size_t w = input.width() / 2;
  PoolResult r{Tensor({input.channels(), h, w}), std::vector<std::uint32_t>(input.channels() * h * w)};
  const std::size_t in_w = input.width();
  const std::size_t in_plane = input.shape().plane();
  for (std::size_t c = 0; c < input.channels(); ++c) {
    const auto src = input.channel(c);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        std::size_t best = (2 * y) * in_w + 2 * x;
        for (std::size_t idx : {(2 * y) * in_w + 2 * x + 1, (2 * y + 1) * in_w + 2 * x,
                                (2 * y + 1) * in_w + 2 * x + 1}) {
          if (src[idx] > src[best]) best = idx;
        }
        r.output(c, y, x) = src[best];
        r.switches[(c * h + y) * w + x] = static_cast<std::uint32_t>(c * in_plane + best);
      }
    }
  }
  return r;
}

Tensor max_pool2_backward(const Tensor& grad_output, const std::vector<std::uint32_t>& switches,
                          const Shape& input_shape) {
  Tensor g(input_shape, 0.0);
  for (std::size_t i = 0; i < switches.size(); ++i) g.data()[switches[i]] += grad_output.data()[i];
  return g;
}

Tensor max_unpool2(const Tensor& input, const std::vector<std::uint32_t>& switches,
                   const Shape& output_shape) {
  if (switches.size() != input.size()) throw ShapeError("unpool switches do not match input");
  Tensor out(output_shape, 0.0);
  for (std::size_t i = 0; i < switches.size(); ++i) out.data()[switches[i]] = input.data()[i];
  return out;
}

Tensor max_unpool2_backward(const Tensor& grad_output, const std::vector<std::uint32_t>& switches,
                            const Shape& input_shape) {
  Tensor g(input_shape, 0.0);
  for (std::size_t i = 0; i < switches.size(); ++i) g.data()[i] = grad_output.data()[switches[i]];
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Tensor& acc, const Tensor& b) {
  if (acc.shape() != b.shape()) {
    throw ShapeError("cannot add " + to_string(b.shape()) + " to " + to_string(acc.shape()));
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += b.data()[i];
}

LossResult cross_entropy_loss(const Tensor& scores, const LabelMap& gt, const Mask* valid) {
  const Shape& s = scores.shape();
  if (!gt.same_size(s.height, s.width) || (valid && !valid->same_size(s.height, s.width))) {
    throw ShapeError("scores " + to_string(s) + " and labels disagree in size");
  }
  check_labels(gt, s.channels);
  const std::size_t plane = s.plane();
  LossResult r{0.0, Tensor(s, 0.0), 0};
  for (std::size_t p = 0; p < plane; ++p) {
    if (gt.data()[p] != kIgnoreLabel && (!valid || valid->data()[p])) ++r.pixels;
  }
  if (r.pixels == 0) throw DegenerateSampleError("cross-entropy over zero labeled pixels");
  const double inv_n = 1.0 / static_cast<double>(r.pixels);
  const auto d = scores.data();
  auto g = r.grad.data();
  for (std::size_t p = 0; p < plane; ++p) {
    const Label l = gt.data()[p];
    if (l == kIgnoreLabel || (valid && !valid->data()[p])) continue;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < s.channels; ++c) m = std::max(m, d[c * plane + p]);
    double z = 0;
    for (std::size_t c = 0; c < s.channels; ++c) z += std::exp(d[c * plane + p] - m);
    const double log_z = m + std::log(z);
    r.loss += log_z - d[l * plane + p];
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double prob = std::exp(d[c * plane + p] - log_z);
      g[c * plane + p] = (prob - (c == l ? 1.0 : 0.0)) * inv_n;
    }
  }
  r.loss *= inv_n;
  return r;
}

LabelMap stochastic_pool_labels(const LabelMap& gt, std::size_t factor, std::mt19937_64& rng) {
  if (factor == 0 || (factor & (factor - 1)) != 0) throw ConfigError("pool factor must be a power of 2");
  if (gt.height() % factor != 0 || gt.width() % factor != 0) {
    throw ShapeError("label map not divisible by pool factor " + std::to_string(factor));
  }
  const std::size_t h = gt.height() / factor;
  const std::size_t w = gt.width() / factor;
  LabelMap out(h, w, kIgnoreLabel);
  std::vector<Label> block;
  block.reserve(factor * factor);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      block.clear();
      for (std::size_t by = 0; by < factor; ++by) {
        for (std::size_t bx = 0; bx < factor; ++bx) {
          const Label l = gt(y * factor + by, x * factor + bx);
          if (l != kIgnoreLabel) block.push_back(l);
        }
      }
      if (block.empty()) continue;
      // Uniform pick over labeled pixels == draw proportional to frequency.
      std::uniform_int_distribution<std::size_t> pick(0, block.size() - 1);
      out(y, x) = block[pick(rng)];
    }
  }
  return out;
}

}  // namespace mvseg
