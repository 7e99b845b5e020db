#include "mvseg/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace mvseg {

namespace fs = std::filesystem;

namespace {

struct PnmImage {
  char kind = 0;  // '5' gray, '6' rgb
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 0;
  std::vector<unsigned char> bytes;
};

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& buf, const std::string& path)
      : buf_(buf), path_(path) {}

  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

  void skip_space_and_comments() {
    while (pos_ < buf_.size()) {
      if (buf_[pos_] == '#') {
        while (pos_ < buf_.size() && buf_[pos_] != '\n') ++pos_;
      } else if (std::isspace(buf_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < buf_.size() && std::isdigit(buf_[pos_])) {
      v = v * 10 + (buf_[pos_] - '0');
      if (v > (1u << 30)) fail(std::string("oversized ") + what, start);
      ++pos_;
    }
    if (pos_ == start) fail(std::string("expected ") + what, start);
    return v;
  }

  void single_whitespace() {
    if (pos_ >= buf_.size() || !std::isspace(buf_[pos_])) fail("expected whitespace after header", pos_);
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw FormatError(path_ + ": " + msg + " at byte " + std::to_string(at));
  }

 private:
  const std::vector<unsigned char>& buf_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

PnmImage read_pnm(const std::string& path) {
  const auto buf = read_file(path);
  HeaderReader h(buf, path);
  if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6')) {
    h.fail("bad magic, expected P5 or P6", 0);
  }
  PnmImage img;
  img.kind = static_cast<char>(buf[1]);
  h.seek(2);
  img.width = h.number("width");
  img.height = h.number("height");
  img.maxval = static_cast<unsigned>(h.number("maxval"));
  h.single_whitespace();
  const std::size_t data_start = h.pos();
  if (img.width == 0 || img.height == 0) h.fail("zero image size", 2);
  if (img.maxval == 0 || img.maxval > 65535) h.fail("maxval out of range", data_start);
  const std::size_t channels = img.kind == '6' ? 3 : 1;
  const std::size_t sample_bytes = img.maxval > 255 ? 2 : 1;
  const std::size_t need = img.width * img.height * channels * sample_bytes;
  if (buf.size() - data_start < need) {
    h.fail("truncated pixel data (" + std::to_string(need) + " bytes needed)", buf.size());
  }
  img.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(data_start),
                   buf.begin() + static_cast<std::ptrdiff_t>(data_start + need));
  return img;
}

void write_pnm(const std::string& path, char kind, std::size_t w, std::size_t h, unsigned maxval,
               const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << 'P' << kind << '\n' << w << ' ' << h << '\n' << maxval << '\n';
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

PnmImage read_gray8(const std::string& path) {
  PnmImage img = read_pnm(path);
  if (img.kind != '5' || img.maxval != 255) {
    throw FormatError(path + ": expected 8-bit PGM (P5, maxval 255)");
  }
  return img;
}

}  // namespace

DepthMap load_depth(const std::string& path) {
  const PnmImage img = read_pnm(path);
  if (img.kind != '5' || img.maxval != 65535) {
    throw FormatError(path + ": expected 16-bit PGM (P5, maxval 65535)");
  }
  DepthMap d(img.height, img.width, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const unsigned mm = (static_cast<unsigned>(img.bytes[2 * i]) << 8) | img.bytes[2 * i + 1];
    d.data()[i] = mm == 0 ? 0.0 : static_cast<double>(mm) / 1000.0;
  }
  return d;
}

void save_depth(const std::string& path, const DepthMap& depth) {
  std::vector<unsigned char> bytes(2 * depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double z = depth.data()[i];
    unsigned mm = 0;
    if (is_valid_depth(z)) mm = static_cast<unsigned>(std::clamp(std::lround(z * 1000.0), 0L, 65535L));
    bytes[2 * i] = static_cast<unsigned char>(mm >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(mm & 0xff);
  }
  write_pnm(path, '5', depth.width(), depth.height(), 65535, bytes);
}

LabelMap load_labels(const std::string& path) {
  PnmImage img = read_gray8(path);
  return LabelMap(img.height, img.width, std::vector<Label>(img.bytes.begin(), img.bytes.end()));
}

void save_labels(const std::string& path, const LabelMap& labels) {
  write_pnm(path, '5', labels.width(), labels.height(), 255,
            std::vector<unsigned char>(labels.data().begin(), labels.data().end()));
}

Tensor load_rgb(const std::string& path) {
  const PnmImage img = read_pnm(path);
  if (img.kind != '6' || img.maxval != 255) {
    throw FormatError(path + ": expected binary PPM (P6, maxval 255)");
  }
  Tensor t({3, img.height, img.width});
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        t(c, y, x) = img.bytes[(y * img.width + x) * 3 + c] / 255.0;
      }
    }
  }
  return t;
}

void save_rgb(const std::string& path, const Tensor& rgb) {
  if (rgb.channels() != 3) throw ShapeError("RGB tensor must have 3 channels");
  std::vector<unsigned char> bytes(rgb.size());
  for (std::size_t y = 0; y < rgb.height(); ++y) {
    for (std::size_t x = 0; x < rgb.width(); ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb(c, y, x), 0.0, 1.0);
        bytes[(y * rgb.width() + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  write_pnm(path, '6', rgb.width(), rgb.height(), 255, bytes);
}

void save_mask(const std::string& path, const Mask& mask) {
  std::vector<unsigned char> bytes(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask.data()[i] ? 255 : 0;
  write_pnm(path, '5', mask.width(), mask.height(), 255, bytes);
}

Mask load_mask(const std::string& path) {
  const PnmImage img = read_gray8(path);
  Mask m(img.height, img.width, 0);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = img.bytes[i] != 0 ? 1 : 0;
  return m;
}

RigidTransform TrajectoryEntry::pose() const {
  return RigidTransform::from_quaternion(rotation[0], rotation[1], rotation[2], rotation[3],
                                         translation);
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Trajectory traj;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    TrajectoryEntry e;
    double qx, qy, qz, qw;
    std::string extra;
    if (!(ls >> e.timestamp >> e.translation.x() >> e.translation.y() >> e.translation.z() >> qx >>
          qy >> qz >> qw) ||
        (ls >> extra)) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected \"timestamp tx ty tz qx qy qz qw\"");
    }
    const double n = std::sqrt(qx * qx + qy * qy + qz * qz + qw * qw);
    if (!(n > 0) || !std::isfinite(n) || !e.translation.allFinite() || !std::isfinite(e.timestamp)) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": degenerate pose");
    }
    e.rotation = Eigen::Vector4d(qx, qy, qz, qw) / n;
    if (!traj.empty() && !(e.timestamp > traj.back().timestamp)) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": timestamps must strictly increase");
    }
    traj.push_back(e);
  }
  return traj;
}

void save_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "# timestamp tx ty tz qx qy qz qw\n";
  out.precision(17);
  for (const auto& e : traj) {
    out << e.timestamp << ' ' << e.translation.x() << ' ' << e.translation.y() << ' '
        << e.translation.z() << ' ' << e.rotation[0] << ' ' << e.rotation[1] << ' '
        << e.rotation[2] << ' ' << e.rotation[3] << '\n';
  }
}

const TrajectoryEntry& find_entry(const Trajectory& traj, double timestamp, double tolerance) {
  if (traj.empty()) throw AssociationError("empty trajectory");
  auto it = std::lower_bound(traj.begin(), traj.end(), timestamp,
                             [](const TrajectoryEntry& e, double t) { return e.timestamp < t; });
  const TrajectoryEntry* best = nullptr;
  double best_dt = 0;
  for (auto cand : {it, it == traj.begin() ? it : std::prev(it)}) {
    if (cand == traj.end()) continue;
    const double dt = std::abs(cand->timestamp - timestamp);
    if (best == nullptr || dt < best_dt) {
      best = &*cand;
      best_dt = dt;
    }
  }
  if (best == nullptr || best_dt > tolerance) {
    throw AssociationError("no trajectory entry within " + std::to_string(tolerance) +
                           " s of timestamp " + std::to_string(timestamp));
  }
  return *best;
}

RigidTransform relative_pose(const Trajectory& traj, double t_from, double t_to) {
  const RigidTransform from = find_entry(traj, t_from).pose();
  const RigidTransform to = find_entry(traj, t_to).pose();
  return to.inverse() * from;
}

const FrameRecord& SequenceManifest::frame(int id) const {
  for (const auto& f : frames) {
    if (f.id == id) return f;
  }
  throw ConfigError("manifest has no frame with id " + std::to_string(id));
}

std::vector<const FrameRecord*> SequenceManifest::neighbors() const {
  std::vector<const FrameRecord*> out;
  for (const auto& f : frames) {
    if (f.id != keyframe) out.push_back(&f);
  }
  return out;
}

SequenceManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return (fp.is_absolute() ? fp : base / fp).lexically_normal().string();
  };
  SequenceManifest m;
  bool have_key = false;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw FormatError(path + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "frame") {
      FrameRecord f;
      bool have_id = false, have_time = false;
      std::string kv;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) fail("expected key=value, got \"" + kv + "\"");
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        try {
          if (key == "id") {
            f.id = std::stoi(val);
            have_id = true;
          } else if (key == "time") {
            f.timestamp = std::stod(val);
            have_time = true;
          } else if (key == "rgb") {
            f.rgb = resolve(val);
          } else if (key == "depth") {
            f.depth = resolve(val);
          } else if (key == "label") {
            f.label = resolve(val);
          } else if (key == "scores") {
            f.scores = resolve(val);
          } else {
            fail("unknown frame key \"" + key + "\"");
          }
        } catch (const std::logic_error&) {
          fail("bad value for \"" + key + "\"");
        }
      }
      if (!have_id || !have_time || f.depth.empty()) fail("frame needs id, time and depth");
      m.frames.push_back(std::move(f));
      continue;
    }
    std::string eq, value;
    if (!(ls >> eq >> value) || eq != "=") fail("expected \"key = value\"");
    if (head == "intrinsics") {
      m.intrinsics = resolve(value);
    } else if (head == "trajectory") {
      m.trajectory = resolve(value);
    } else if (head == "keyframe") {
      try {
        m.keyframe = std::stoi(value);
      } catch (const std::logic_error&) {
        fail("bad keyframe id");
      }
      have_key = true;
    } else {
      fail("unknown key \"" + head + "\"");
    }
  }
  if (!have_key || m.intrinsics.empty() || m.trajectory.empty()) {
    throw FormatError(path + ": manifest needs intrinsics, trajectory and keyframe");
  }
  // Keyframe first.
  auto key_it = std::find_if(m.frames.begin(), m.frames.end(),
                             [&](const FrameRecord& f) { return f.id == m.keyframe; });
  if (key_it == m.frames.end()) throw FormatError(path + ": keyframe has no frame record");
  std::rotate(m.frames.begin(), key_it, key_it + 1);
  const auto& key = m.frames.front();
  if (!key.label) throw FormatError(path + ": keyframe record needs a label file");
  if (!fs::exists(*key.label)) throw IoError("keyframe label file missing: " + *key.label);
  return m;
}

void save_manifest(const std::string& path, const SequenceManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const fs::path base = fs::path(path).parent_path();
  auto rel = [&](const std::string& p) {
    if (base.empty()) return p;
    const fs::path r = fs::path(p).lexically_relative(base);
    return (r.empty() || *r.begin() == "..") ? p : r.string();
  };
  out.precision(17);
  out << "# mvseg sequence manifest\n";
  out << "intrinsics = " << rel(manifest.intrinsics) << '\n';
  out << "trajectory = " << rel(manifest.trajectory) << '\n';
  out << "keyframe = " << manifest.keyframe << '\n';
  for (const auto& f : manifest.frames) {
    out << "frame id=" << f.id << " time=" << f.timestamp;
    if (!f.rgb.empty()) out << " rgb=" << rel(f.rgb);
    out << " depth=" << rel(f.depth);
    if (f.label) out << " label=" << rel(*f.label);
    if (f.scores) out << " scores=" << rel(*f.scores);
    out << '\n';
  }
}

}  // namespace mvseg
