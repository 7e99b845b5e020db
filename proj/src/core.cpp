#include "mvseg/core.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace mvseg {

std::size_t Shape::checked_size() const {
  if (channels == 0 || height == 0 || width == 0) {
    throw ShapeError("zero dimension in shape " + to_string(*this));
  }
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max() / sizeof(double);
  std::size_t n = channels;
  for (std::size_t d : {height, width}) {
    if (n > kMax / d) throw ShapeError("shape " + to_string(*this) + " overflows");
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.channels) + "," + std::to_string(s.height) + "," +
         std::to_string(s.width) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.checked_size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.checked_size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

double Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  if (c >= channels() || y >= height() || x >= width()) {
    throw ShapeError("tensor index out of range");
  }
  return (*this)(c, y, x);
}

void Tensor::set(std::size_t c, std::size_t y, std::size_t x, double value) {
  if (c >= channels() || y >= height() || x >= width()) {
    throw ShapeError("tensor index out of range");
  }
  (*this)(c, y, x) = value;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor tensor_new(Shape shape, double fill) { return Tensor(shape, fill); }

Tensor avg_pool2(const Tensor& t) {
  if (t.height() % 2 != 0 || t.width() % 2 != 0) {
    throw ShapeError("avg_pool2 needs even spatial dims, got " + to_string(t.shape()));
  }
  Tensor out({t.channels(), t.height() / 2, t.width() / 2});
  for (std::size_t c = 0; c < out.channels(); ++c) {
    for (std::size_t y = 0; y < out.height(); ++y) {
      for (std::size_t x = 0; x < out.width(); ++x) {
        const double sum = t(c, 2 * y, 2 * x) + t(c, 2 * y, 2 * x + 1) +
                           t(c, 2 * y + 1, 2 * x) + t(c, 2 * y + 1, 2 * x + 1);
        out(c, y, x) = 0.25 * sum;
      }
    }
  }
  return out;
}

void check_labels(const LabelMap& labels, std::size_t num_classes) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Label l = labels.data()[i];
    if (l != kIgnoreLabel && l >= num_classes) {
      throw InvalidLabelError("label " + std::to_string(l) + " at pixel " + std::to_string(i) +
                              " is not below K=" + std::to_string(num_classes));
    }
  }
}

namespace {

constexpr std::array<char, 4> kMvftMagic = {'M', 'V', 'F', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff),
                                 static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), b.size());
}

void put_f64(std::ostream& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

void read_exact(std::istream& in, char* dst, std::size_t n, std::size_t offset) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError("MVFT stream truncated at byte " +
                      std::to_string(offset + static_cast<std::size_t>(in.gcount())));
  }
}

std::uint32_t get_u32(std::istream& in, std::size_t& offset) {
  std::array<unsigned char, 4> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), 4, offset);
  offset += 4;
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_mvft(std::ostream& out, const Tensor& t) {
  out.write(kMvftMagic.data(), kMvftMagic.size());
  for (std::size_t d : {t.channels(), t.height(), t.width()}) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("dimension exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (double v : t.data()) put_f64(out, v);
  if (!out) throw IoError("failed writing MVFT stream");
}

Tensor read_mvft(std::istream& in) {
  std::size_t offset = 0;
  std::array<char, 4> magic{};
  read_exact(in, magic.data(), 4, offset);
  if (magic != kMvftMagic) throw FormatError("bad MVFT magic at byte 0");
  offset += 4;
  Shape shape;
  shape.channels = get_u32(in, offset);
  shape.height = get_u32(in, offset);
  shape.width = get_u32(in, offset);
  const std::size_t n = shape.checked_size();
  std::vector<double> data(n);
  std::vector<unsigned char> raw(8 * n);
  read_exact(in, reinterpret_cast<char*>(raw.data()), raw.size(), offset);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(raw[8 * i + b]) << (8 * b);
    data[i] = std::bit_cast<double>(bits);
  }
  return Tensor(shape, std::move(data));
}

void save_mvft(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_mvft(out, t);
}

Tensor load_mvft(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  try {
    return read_mvft(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace mvseg
