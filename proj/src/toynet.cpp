#include "mvseg/toynet.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mvseg {

void ToyNetConfig::validate() const {
  if (num_classes < 2 || num_classes >= kIgnoreLabel) throw ConfigError("need 2..254 classes");
  if (rgb_channels == 0 || depth_channels == 0) throw ConfigError("input channels must be positive");
  if (widths.empty()) throw ConfigError("network needs at least one level");
  for (auto w : widths) {
    if (w == 0) throw ConfigError("feature widths must be positive");
  }
  if (kernel % 2 == 0) throw ConfigError("kernel size must be odd");
}

ToyNetParams::ToyNetParams(ToyNetConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t L = config_.levels();
  const std::size_t kk = config_.kernel * config_.kernel;
  names_.resize(8 * L);
  blobs_.resize(8 * L);
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t in_rgb = l == 0 ? config_.rgb_channels : config_.widths[l - 1];
    const std::size_t in_d = l == 0 ? config_.depth_channels : config_.widths[l - 1];
    const std::size_t w = config_.widths[l];
    const std::string s = std::to_string(l);
    names_[4 * l] = "enc_rgb" + s + ".w";
    blobs_[4 * l] = Tensor({w, in_rgb, kk}, 0.0);
    names_[4 * l + 1] = "enc_rgb" + s + ".b";
    blobs_[4 * l + 1] = Tensor({w, 1, 1}, 0.0);
    names_[4 * l + 2] = "enc_depth" + s + ".w";
    blobs_[4 * l + 2] = Tensor({w, in_d, kk}, 0.0);
    names_[4 * l + 3] = "enc_depth" + s + ".b";
    blobs_[4 * l + 3] = Tensor({w, 1, 1}, 0.0);
    // Transposed conv weights are (Cin, Cout, k*k).
    const std::size_t dec_out = config_.decoder_width(l);
    names_[4 * L + 2 * l] = "dec" + s + ".w";
    blobs_[4 * L + 2 * l] = Tensor({w, dec_out, kk}, 0.0);
    names_[4 * L + 2 * l + 1] = "dec" + s + ".b";
    blobs_[4 * L + 2 * l + 1] = Tensor({dec_out, 1, 1}, 0.0);
    names_[6 * L + 2 * l] = "cls" + s + ".w";
    blobs_[6 * L + 2 * l] = Tensor({config_.num_classes, dec_out, 1}, 0.0);
    names_[6 * L + 2 * l + 1] = "cls" + s + ".b";
    blobs_[6 * L + 2 * l + 1] = Tensor({config_.num_classes, 1, 1}, 0.0);
  }
}

ToyNetParams ToyNetParams::he_init(const ToyNetConfig& config, std::mt19937_64& rng) {
  ToyNetParams p(config);
  const std::size_t L = config.levels();
  for (std::size_t i = 0; i < p.blob_count(); ++i) {
    Tensor& t = p.blob(i);
    if (t.width() == 1 && t.height() == 1) continue;  // bias
    // Fan-in of a conv is Cin*k*k; of a transposed conv, Cin*k*k as seen from
    // its output, which is the blob's channel count.
    const bool transposed = i >= 4 * L && i < 6 * L;
    const double fan_in = static_cast<double>((transposed ? t.channels() : t.height()) * t.width());
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan_in));
    for (double& v : t.data()) v = n(rng);
  }
  return p;
}

std::size_t ToyNetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blobs_) n += b.size();
  return n;
}

void ToyNetParams::axpy(double scale, const ToyNetParams& other) {
  if (other.blobs_.size() != blobs_.size()) throw ShapeError("parameter sets differ");
  for (std::size_t i = 0; i < blobs_.size(); ++i) {
    auto dst = blobs_[i].data();
    const auto src = other.blobs_[i].data();
    if (dst.size() != src.size()) throw ShapeError("parameter blob " + names_[i] + " differs");
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

bool ToyNetParams::all_finite() const {
  for (const auto& b : blobs_) {
    if (!b.all_finite()) return false;
  }
  return true;
}

bool operator==(const ToyNetParams& a, const ToyNetParams& b) {
  if (a.blobs_.size() != b.blobs_.size() || a.names_ != b.names_) return false;
  for (std::size_t i = 0; i < a.blobs_.size(); ++i) {
    if (a.blobs_[i].shape() != b.blobs_[i].shape()) return false;
    const auto x = a.blobs_[i].data();
    const auto y = b.blobs_[i].data();
    if (!std::equal(x.begin(), x.end(), y.begin())) return false;
  }
  return true;
}

Tensor depth_input(const Plane<double>& depth) {
  Tensor t({1, depth.height(), depth.width()}, 0.0);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double z = depth.data()[i];
    t.data()[i] = std::isfinite(z) && z > 0 ? z : 0.0;
  }
  return t;
}

ToyNetCache toynet_run(const ToyNetParams& params, const Tensor& rgb, const Tensor& depth) {
  const ToyNetConfig& cfg = params.config();
  const std::size_t L = cfg.levels();
  const std::size_t factor = std::size_t{1} << L;
  if (rgb.channels() != cfg.rgb_channels || depth.channels() != cfg.depth_channels) {
    throw ShapeError("input channels do not match the network");
  }
  if (rgb.height() != depth.height() || rgb.width() != depth.width()) {
    throw ShapeError("rgb and depth inputs differ in size");
  }
  if (rgb.height() % factor != 0 || rgb.width() % factor != 0) {
    throw ShapeError("input size " + to_string(rgb.shape()) + " not divisible by 2^" +
                      std::to_string(L));
  }
  const std::size_t k = cfg.kernel;
  ToyNetCache c;
  c.rgb = rgb;
  c.depth = depth;
  c.rgb_act.resize(L);
  c.depth_act.resize(L);
  c.fused.resize(L);
  c.pooled.resize(L);
  c.switches.resize(L);
  c.depth_pooled.resize(L);
  c.depth_switches.resize(L);
  c.unpooled.resize(L);
  c.features.resize(L);
  c.scores.resize(L);

  for (std::size_t l = 0; l < L; ++l) {
    const Tensor& in_rgb = l == 0 ? c.rgb : c.pooled[l - 1];
    const Tensor& in_d = l == 0 ? c.depth : c.depth_pooled[l - 1];
    c.rgb_act[l] = relu(conv2d(in_rgb, params.enc_rgb_w(l), params.enc_rgb_b(l), k));
    c.depth_act[l] = relu(conv2d(in_d, params.enc_depth_w(l), params.enc_depth_b(l), k));
    c.fused[l] = add(c.rgb_act[l], c.depth_act[l]);
    auto pr = max_pool2(c.fused[l]);
    c.pooled[l] = std::move(pr.output);
    c.switches[l] = std::move(pr.switches);
    if (l + 1 < L) {
      auto pd = max_pool2(c.depth_act[l]);
      c.depth_pooled[l] = std::move(pd.output);
      c.depth_switches[l] = std::move(pd.switches);
    }
  }
  for (std::size_t step = 0; step < L; ++step) {
    const std::size_t l = L - 1 - step;
    const Tensor& x = l + 1 == L ? c.pooled[l] : c.features[l + 1];
    c.unpooled[l] = max_unpool2(x, c.switches[l], c.fused[l].shape());
    c.features[l] = relu(conv_transpose2d(c.unpooled[l], params.dec_w(l), params.dec_b(l), k));
    c.scores[l] = classify(params, l, c.features[l]);
  }
  return c;
}

std::vector<Tensor> toynet_forward(const ToyNetParams& params, const Tensor& rgb,
                                   const Tensor& depth) {
  ToyNetCache c = toynet_run(params, rgb, depth);
  return {std::make_move_iterator(c.scores.rbegin()), std::make_move_iterator(c.scores.rend())};
}

Tensor classify(const ToyNetParams& params, std::size_t level, const Tensor& features) {
  return conv2d(features, params.cls_w(level), params.cls_b(level), 1);
}

Tensor classify_backward(const ToyNetParams& params, std::size_t level, const Tensor& features,
                         const Tensor& grad_scores, ToyNetParams& grads) {
  ConvGrads g = conv2d_backward(grad_scores, features, params.cls_w(level), 1);
  add_inplace(grads.cls_w(level), g.weight);
  add_inplace(grads.cls_b(level), g.bias);
  return std::move(g.input);
}

void toynet_backward(const ToyNetParams& params, const ToyNetCache& c,
                     const std::vector<Tensor>& grad_scores,
                     const std::vector<Tensor>& grad_features, ToyNetParams& grads) {
  const std::size_t L = params.config().levels();
  const std::size_t k = params.config().kernel;
  if (grad_scores.size() != L || grad_features.size() != L) {
    throw ShapeError("need one (possibly empty) gradient per level");
  }

  // Decoder, fine to coarse. `carry` is the gradient wrt the decoder input
  // of the level just processed, i.e. the features of the next coarser level.
  Tensor carry;
  for (std::size_t l = 0; l < L; ++l) {
    Tensor df(c.features[l].shape(), 0.0);
    if (!carry.empty()) add_inplace(df, carry);
    if (!grad_features[l].empty()) add_inplace(df, grad_features[l]);
    if (!grad_scores[l].empty()) {
      add_inplace(df, classify_backward(params, l, c.features[l], grad_scores[l], grads));
    }
    const Tensor dpre = relu_backward(df, c.features[l]);
    ConvGrads g = conv_transpose2d_backward(dpre, c.unpooled[l], params.dec_w(l), k);
    add_inplace(grads.dec_w(l), g.weight);
    add_inplace(grads.dec_b(l), g.bias);
    const Shape in_shape = l + 1 == L ? c.pooled[l].shape() : c.features[l + 1].shape();
    carry = max_unpool2_backward(g.input, c.switches[l], in_shape);
  }

  // Encoder, coarse to fine. `carry` is the gradient wrt pooled[L-1].
  Tensor d_pooled = std::move(carry);
  Tensor d_depth_pooled;
  for (std::size_t step = 0; step < L; ++step) {
    const std::size_t l = L - 1 - step;
    const Tensor d_fused = max_pool2_backward(d_pooled, c.switches[l], c.fused[l].shape());
    Tensor d_depth = d_fused;
    if (l + 1 < L) {
      add_inplace(d_depth, max_pool2_backward(d_depth_pooled, c.depth_switches[l],
                                              c.depth_act[l].shape()));
    }
    const Tensor& in_rgb = l == 0 ? c.rgb : c.pooled[l - 1];
    const Tensor& in_d = l == 0 ? c.depth : c.depth_pooled[l - 1];
    ConvGrads gr =
        conv2d_backward(relu_backward(d_fused, c.rgb_act[l]), in_rgb, params.enc_rgb_w(l), k);
    ConvGrads gd =
        conv2d_backward(relu_backward(d_depth, c.depth_act[l]), in_d, params.enc_depth_w(l), k);
    add_inplace(grads.enc_rgb_w(l), gr.weight);
    add_inplace(grads.enc_rgb_b(l), gr.bias);
    add_inplace(grads.enc_depth_w(l), gd.weight);
    add_inplace(grads.enc_depth_b(l), gd.bias);
    d_pooled = std::move(gr.input);
    d_depth_pooled = std::move(gd.input);
  }
}

void write_checkpoint(std::ostream& out, const ToyNetParams& params) {
  const ToyNetConfig& cfg = params.config();
  out << "MVCKPT 1\n";
  out << "classes " << cfg.num_classes << "\n";
  out << "inputs " << cfg.rgb_channels << ' ' << cfg.depth_channels << "\n";
  out << "kernel " << cfg.kernel << "\n";
  out << "widths";
  for (auto w : cfg.widths) out << ' ' << w;
  out << "\nblobs " << params.blob_count() << "\n";
  for (std::size_t i = 0; i < params.blob_count(); ++i) {
    const Shape& s = params.blob(i).shape();
    out << params.name(i) << ' ' << s.channels << ' ' << s.height << ' ' << s.width << "\n";
  }
  out << "end\n";
  for (std::size_t i = 0; i < params.blob_count(); ++i) write_mvft(out, params.blob(i));
  if (!out) throw IoError("failed writing checkpoint");
}

ToyNetParams read_checkpoint(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) {
      throw FormatError("checkpoint truncated in header (expected " + std::string(what) + ")");
    }
    ++line_no;
    return std::istringstream(line);
  };
  auto fail = [&](const std::string& msg) {
    throw FormatError("checkpoint header line " + std::to_string(line_no) + ": " + msg);
  };
  std::string key;
  int version = 0;
  if (!(next("magic") >> key >> version) || key != "MVCKPT" || version != 1) fail("bad magic");
  ToyNetConfig cfg;
  if (!(next("classes") >> key >> cfg.num_classes) || key != "classes") fail("expected classes");
  if (!(next("inputs") >> key >> cfg.rgb_channels >> cfg.depth_channels) || key != "inputs") {
    fail("expected inputs");
  }
  if (!(next("kernel") >> key >> cfg.kernel) || key != "kernel") fail("expected kernel");
  {
    auto ls = next("widths");
    if (!(ls >> key) || key != "widths") fail("expected widths");
    cfg.widths.clear();
    std::size_t w = 0;
    while (ls >> w) cfg.widths.push_back(w);
  }
  std::size_t count = 0;
  if (!(next("blobs") >> key >> count) || key != "blobs") fail("expected blob count");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    fail(e.what());
  }
  ToyNetParams p(cfg);
  if (count != p.blob_count()) fail("blob count does not match the architecture");
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    Shape s;
    if (!(next("blob") >> name >> s.channels >> s.height >> s.width)) fail("expected blob entry");
    if (name != p.name(i) || s != p.blob(i).shape()) fail("unexpected blob " + name);
  }
  if (!(next("end") >> key) || key != "end") fail("expected end");
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t = read_mvft(in);
    if (t.shape() != p.blob(i).shape()) {
      throw FormatError("checkpoint blob " + p.name(i) + " has the wrong shape");
    }
    p.blob(i) = std::move(t);
  }
  return p;
}

void save_checkpoint(const std::string& path, const ToyNetParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_checkpoint(out, params);
}

ToyNetParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  try {
    return read_checkpoint(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace mvseg
