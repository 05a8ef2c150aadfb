#include "cvos/dataio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cvos/image_io.hpp"

namespace cvos {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (height < 32 || width < 32) throw std::invalid_argument("SynthConfig: resolution must be >= 32x32");
  if (n_videos < 1) throw std::invalid_argument("SynthConfig: n_videos must be >= 1");
  if (frames_per_video < 2) throw std::invalid_argument("SynthConfig: frames_per_video must be >= 2");
  if (min_objects < 1 || n_objects > 3 || min_objects > n_objects) {
    throw std::invalid_argument("SynthConfig: object count must lie in [1,3]");
  }
  if (shapes.empty()) throw std::invalid_argument("SynthConfig: empty shape set");
  if (min_speed < 0 || max_speed < min_speed || max_speed < 1) {
    throw std::invalid_argument("SynthConfig: invalid speed range");
  }
  if (occluder_prob < 0.0 || occluder_prob > 1.0) {
    throw std::invalid_argument("SynthConfig: occluder_prob must lie in [0,1]");
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 over the combined state
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

struct ValueNoise {
  int gy = 0, gx = 0;
  std::vector<double> lattice;  // (gy+1) x (gx+1)

  ValueNoise(int cells_y, int cells_x, double lo, double hi, std::mt19937_64& rng)
      : gy(cells_y), gx(cells_x), lattice(static_cast<std::size_t>(cells_y + 1) * (cells_x + 1)) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : lattice) v = u(rng);
  }

  double at(double fy, double fx) const {  // fy, fx in [0,1]
    const double y = fy * gy, x = fx * gx;
    const int y0 = std::min(static_cast<int>(y), gy - 1), x0 = std::min(static_cast<int>(x), gx - 1);
    auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
    const double ty = smooth(y - y0), tx = smooth(x - x0);
    auto l = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * (gx + 1) + xx]; };
    const double top = l(y0, x0) * (1 - tx) + l(y0, x0 + 1) * tx;
    const double bot = l(y0 + 1, x0) * (1 - tx) + l(y0 + 1, x0 + 1) * tx;
    return top * (1 - ty) + bot * ty;
  }
};

struct Obj {
  ShapeKind kind = ShapeKind::circle;
  double radius = 0.0;
  double angle = 0.0;
  double frac_x = 0.0, frac_y = 0.0;  // fixed sub-pixel offset of the centre
  int x = 0, y = 0;                   // integer part of the centre
  int vx = 0, vy = 0;
  std::array<double, 3> color{};
  double tex_period = 5.0, tex_angle = 0.0;

  double bound() const { return kind == ShapeKind::triangle ? radius * 1.1 : radius; }

  bool inside(double px, double py) const {
    const double dx = px - (x + frac_x), dy = py - (y + frac_y);
    switch (kind) {
      case ShapeKind::circle:
        return dx * dx + dy * dy <= radius * radius;
      case ShapeKind::square: {
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = c * dx + s * dy, v = -s * dx + c * dy;
        const double half = radius * 0.85;
        return std::abs(u) <= half && std::abs(v) <= half;
      }
      case ShapeKind::triangle: {
        const double r = radius * 1.1;
        std::array<std::pair<double, double>, 3> v;
        for (int k = 0; k < 3; ++k) {
          const double a = angle + 2.0 * std::numbers::pi * k / 3.0;
          v[static_cast<std::size_t>(k)] = {r * std::cos(a), r * std::sin(a)};
        }
        auto side = [&](int i, int j) {
          const auto [x1, y1] = v[static_cast<std::size_t>(i)];
          const auto [x2, y2] = v[static_cast<std::size_t>(j)];
          return (x2 - x1) * (dy - y1) - (y2 - y1) * (dx - x1);
        };
        const double s0 = side(0, 1), s1 = side(1, 2), s2 = side(2, 0);
        return (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
      }
    }
    return false;
  }

  double texture(double px, double py) const {
    const double u = (px - (x + frac_x)) * std::cos(tex_angle) + (py - (y + frac_y)) * std::sin(tex_angle);
    return 0.08 * std::sin(2.0 * std::numbers::pi * u / tex_period);
  }

  void step(int w, int h) {
    auto bounce = [&](int& pos, int& vel, double frac, int extent) {
      const double next = pos + vel + frac;
      if (next - bound() < 0.0 || next + bound() > extent) vel = -vel;
      const double retry = pos + vel + frac;
      if (retry - bound() >= 0.0 && retry + bound() <= extent) pos += vel;
    };
    bounce(x, vx, frac_x, w);
    bounce(y, vy, frac_y, h);
  }
};

struct Occluder {
  bool active = false;
  int x = 0;
  int width = 0;
  int vx = 0;
  double gray = 0.5;

  bool covers(int px) const { return active && px >= x && px < x + width; }
};

}  // namespace

VideoClip gen_synthetic_video(const SynthConfig& cfg, int index) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int h = cfg.height, w = cfg.width;

  std::array<ValueNoise, 3> coarse{ValueNoise(4, 6, 0.3, 0.7, rng), ValueNoise(4, 6, 0.3, 0.7, rng),
                                   ValueNoise(4, 6, 0.3, 0.7, rng)};
  std::array<ValueNoise, 3> fine{ValueNoise(8, 12, -0.08, 0.08, rng), ValueNoise(8, 12, -0.08, 0.08, rng),
                                 ValueNoise(8, 12, -0.08, 0.08, rng)};
  std::vector<double> background(static_cast<std::size_t>(3) * h * w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double fy = (y + 0.5) / h, fx = (x + 0.5) / w;
        background[(static_cast<std::size_t>(c) * h + y) * w + x] =
            coarse[static_cast<std::size_t>(c)].at(fy, fx) + fine[static_cast<std::size_t>(c)].at(fy, fx);
      }
    }
  }

  const int n_obj = std::uniform_int_distribution<int>(cfg.min_objects, cfg.n_objects)(rng);
  const double base = std::min(h, w);
  std::vector<Obj> objs;
  for (int k = 0; k < n_obj; ++k) {
    Obj o;
    o.kind = cfg.shapes[std::uniform_int_distribution<std::size_t>(0, cfg.shapes.size() - 1)(rng)];
    o.radius = base * (0.16 + 0.10 * unit(rng));
    o.angle = unit(rng) * 2.0 * std::numbers::pi;
    o.frac_x = unit(rng);
    o.frac_y = unit(rng);
    // Saturated colours: every channel sits near one end of the range and
    // at least one channel differs from the others.
    do {
      for (double& c : o.color) c = unit(rng) < 0.5 ? 0.05 + 0.15 * unit(rng) : 0.8 + 0.15 * unit(rng);
    } while ((o.color[0] > 0.5) == (o.color[1] > 0.5) && (o.color[1] > 0.5) == (o.color[2] > 0.5));
    o.tex_period = 4.0 + 3.0 * unit(rng);
    o.tex_angle = unit(rng) * std::numbers::pi;
    do {
      o.vx = std::uniform_int_distribution<int>(-cfg.max_speed, cfg.max_speed)(rng);
      o.vy = std::uniform_int_distribution<int>(-cfg.max_speed, cfg.max_speed)(rng);
    } while (std::max(std::abs(o.vx), std::abs(o.vy)) < std::max(cfg.min_speed, 0) ||
             (cfg.min_speed > 0 && o.vx == 0 && o.vy == 0));
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      // Crowded frames: shrink the newcomer a little every 50 misses.
      if (attempt > 0 && attempt % 50 == 0) o.radius *= 0.85;
      const double b = o.bound();
      const int lo_x = static_cast<int>(std::ceil(b)), hi_x = static_cast<int>(std::floor(w - b)) - 1;
      const int lo_y = static_cast<int>(std::ceil(b)), hi_y = static_cast<int>(std::floor(h - b)) - 1;
      if (hi_x < lo_x || hi_y < lo_y) break;
      o.x = std::uniform_int_distribution<int>(lo_x, hi_x)(rng);
      o.y = std::uniform_int_distribution<int>(lo_y, hi_y)(rng);
      placed = true;
      for (const Obj& other : objs) {
        const double dx = (o.x + o.frac_x) - (other.x + other.frac_x);
        const double dy = (o.y + o.frac_y) - (other.y + other.frac_y);
        if (std::sqrt(dx * dx + dy * dy) < o.bound() + other.bound() + 1.0) placed = false;
      }
    }
    // A frame too crowded for another object keeps the ones placed so far.
    if (!placed) break;
    objs.push_back(o);
  }
  if (objs.empty()) {
    throw std::runtime_error("gen_synthetic: frame too small for any object in video " + std::to_string(index));
  }

  Occluder occ;
  if (unit(rng) < cfg.occluder_prob) {
    occ.active = true;
    occ.width = std::max(4, w / 10);
    const bool from_left = unit(rng) < 0.5;
    occ.vx = (from_left ? 1 : -1) * std::uniform_int_distribution<int>(1, 3)(rng);
    occ.x = from_left ? -occ.width : w;
    occ.gray = 0.3 + 0.4 * unit(rng);
  }

  VideoClip clip;
  clip.name = "synth_" + std::to_string(index);
  {
    std::ostringstream name;
    name << "synth_" << std::setw(3) << std::setfill('0') << index;
    clip.name = name.str();
  }
  std::set<int> ids;
  for (int k = 1; k <= static_cast<int>(objs.size()); ++k) ids.insert(k);
  clip.object_ids = ids;

  for (int t = 0; t < cfg.frames_per_video; ++t) {
    Frame f(h, w, t + 1);
    std::vector<int> labels(static_cast<std::size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double px = x + 0.5, py = y + 0.5;
        std::array<double, 3> rgb{background[i], background[static_cast<std::size_t>(h) * w + i],
                                  background[2 * static_cast<std::size_t>(h) * w + i]};
        for (std::size_t k = 0; k < objs.size(); ++k) {
          if (objs[k].inside(px, py)) {
            labels[i] = static_cast<int>(k) + 1;
            const double tex = objs[k].texture(px, py);
            for (int c = 0; c < 3; ++c) rgb[static_cast<std::size_t>(c)] = objs[k].color[static_cast<std::size_t>(c)] + tex;
          }
        }
        if (occ.covers(x)) {
          labels[i] = 0;
          const double stripe = ((y / 3) % 2 == 0) ? 0.06 : -0.06;
          for (double& v : rgb) v = occ.gray + stripe;
        }
        for (int c = 0; c < 3; ++c) f.at(c, y, x) = quantize(rgb[static_cast<std::size_t>(c)]);
      }
    }
    clip.frames.push_back(std::move(f));
    clip.gt.emplace_back(MultiObjectMask::from_labels(h, w, labels, ids));
    for (Obj& o : objs) o.step(w, h);
    if (occ.active) occ.x += occ.vx;
  }
  return clip;
}

std::vector<VideoClip> gen_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<VideoClip> out;
  out.reserve(static_cast<std::size_t>(cfg.n_videos));
  for (int i = 0; i < cfg.n_videos; ++i) out.push_back(gen_synthetic_video(cfg, i));
  return out;
}

Frame resize_frame_bilinear(const Frame& f, int h, int w) {
  if (h == f.height && w == f.width) return f;
  Frame out(h, w, f.timestamp);
  const double sy = static_cast<double>(f.height) / h, sx = static_cast<double>(f.width) / w;
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, f.height - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, f.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, f.width - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, f.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = f.at(c, y0, x0) * (1 - tx) + f.at(c, y0, x1) * tx;
        const double bot = f.at(c, y1, x0) * (1 - tx) + f.at(c, y1, x1) * tx;
        out.at(c, y, x) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

namespace {
int nearest_src(int dst, int src_len, int dst_len) {
  const double s = static_cast<double>(src_len) / dst_len;
  return std::min(static_cast<int>(std::floor((dst + 0.5) * s)), src_len - 1);
}
}  // namespace

Mask resize_mask_nearest(const Mask& m, int h, int w) {
  if (h == m.height && w == m.width) return m;
  Mask out(h, w, 0.0, m.object_id, m.kind);
  for (int y = 0; y < h; ++y) {
    const int sy = nearest_src(y, m.height, h);
    for (int x = 0; x < w; ++x) out.at(y, x) = m.at(sy, nearest_src(x, m.width, w));
  }
  return out;
}

std::vector<int> resize_labels_nearest(const std::vector<int>& labels, int h, int w, int oh, int ow) {
  if (h == oh && w == ow) return labels;
  std::vector<int> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    const int sy = nearest_src(y, h, oh);
    for (int x = 0; x < ow; ++x) {
      out[static_cast<std::size_t>(y) * ow + x] = labels[static_cast<std::size_t>(sy) * w + nearest_src(x, w, ow)];
    }
  }
  return out;
}

namespace {

std::string frame_stem(std::size_t i) {
  std::ostringstream s;
  s << std::setw(5) << std::setfill('0') << i;
  return s.str();
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".jpg" || ext == ".jpeg" || ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

VideoClip load_davis_clip(const fs::path& root, const std::string& sequence,
                          std::optional<WorkingResolution> working) {
  const fs::path img_dir = root / "JPEGImages" / sequence;
  const fs::path ann_dir = root / "Annotations" / sequence;
  std::vector<std::string> missing;
  if (!fs::is_directory(img_dir)) missing.push_back(img_dir.string());
  if (!fs::is_directory(ann_dir)) missing.push_back(ann_dir.string());
  if (!missing.empty()) {
    std::string msg = "load_davis_clip: missing";
    for (const auto& m : missing) msg += " " + m;
    throw std::runtime_error(msg);
  }
  const auto images = list_images(img_dir);
  if (images.empty()) throw std::runtime_error("load_davis_clip: no frames in " + img_dir.string());
  const fs::path first_ann = ann_dir / (images.front().stem().string() + ".png");
  if (!fs::exists(first_ann)) {
    throw std::runtime_error("load_davis_clip: missing first-frame annotation " + first_ann.string());
  }

  VideoClip clip;
  clip.name = sequence;
  std::vector<std::optional<std::vector<int>>> label_maps;
  int src_h = 0, src_w = 0;
  for (std::size_t t = 0; t < images.size(); ++t) {
    image::RgbImage img = image::read_rgb(images[t]);
    if (t == 0) {
      src_h = img.height;
      src_w = img.width;
    } else if (img.height != src_h || img.width != src_w) {
      throw std::runtime_error("load_davis_clip: frame size differs in " + images[t].string());
    }
    Frame f(img.height, img.width, static_cast<int>(t) + 1);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          f.at(c, y, x) = img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] / 255.0;
        }
      }
    }
    const fs::path ann = ann_dir / (images[t].stem().string() + ".png");
    if (fs::exists(ann)) {
      image::IndexedImage idx = image::read_indexed_png(ann);
      if (idx.height != src_h || idx.width != src_w) {
        throw std::runtime_error("load_davis_clip: annotation size differs in " + ann.string());
      }
      std::vector<int> labels(idx.index.begin(), idx.index.end());
      for (int& l : labels) {
        if (l == 255) l = 0;  // DAVIS "void" label
        if (l != 0) clip.object_ids.insert(l);
      }
      label_maps.emplace_back(std::move(labels));
    } else {
      label_maps.emplace_back(std::nullopt);
    }
    clip.frames.push_back(std::move(f));
  }

  const int h = working ? working->height : src_h;
  const int w = working ? working->width : src_w;
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    clip.frames[t] = resize_frame_bilinear(clip.frames[t], h, w);
    if (label_maps[t]) {
      auto labels = resize_labels_nearest(*label_maps[t], src_h, src_w, h, w);
      clip.gt.emplace_back(MultiObjectMask::from_labels(h, w, labels, clip.object_ids));
    } else {
      clip.gt.emplace_back(std::nullopt);
    }
  }
  clip.validate();
  return clip;
}

std::vector<std::string> read_split(const fs::path& root, const std::string& split) {
  const fs::path p = root / "ImageSets" / (split + ".txt");
  std::ifstream in(p);
  if (!in) throw std::runtime_error("read_split: cannot open " + p.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

void write_split(const fs::path& root, const std::string& split, const std::vector<std::string>& names) {
  fs::create_directories(root / "ImageSets");
  std::ofstream out(root / "ImageSets" / (split + ".txt"), std::ios::binary);
  for (const auto& n : names) out << n << "\n";
  if (!out) throw std::runtime_error("write_split: write failed");
}

void save_label_sequence(const fs::path& root, const std::string& name, int height, int width,
                         const std::vector<std::vector<int>>& labels) {
  for (std::size_t t = 0; t < labels.size(); ++t) {
    image::IndexedImage idx{height, width, {}};
    idx.index.reserve(labels[t].size());
    for (int l : labels[t]) idx.index.push_back(static_cast<std::uint8_t>(l));
    image::write_indexed_png(root / "Annotations" / name / (frame_stem(t) + ".png"), idx);
  }
}

void save_davis_clip(const fs::path& root, const VideoClip& clip) {
  clip.validate();
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    const Frame& f = clip.frames[t];
    image::RgbImage img{f.height, f.width, {}};
    img.rgb.resize(static_cast<std::size_t>(f.height) * f.width * 3);
    for (int y = 0; y < f.height; ++y) {
      for (int x = 0; x < f.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          img.rgb[(static_cast<std::size_t>(y) * f.width + x) * 3 + c] =
              static_cast<std::uint8_t>(std::lround(std::clamp(f.at(c, y, x), 0.0, 1.0) * 255.0));
        }
      }
    }
    image::write_png_rgb(root / "JPEGImages" / clip.name / (frame_stem(t) + ".png"), img);
    if (clip.gt[t]) {
      const auto labels = clip.gt[t]->labels();
      image::IndexedImage idx{f.height, f.width, {}};
      for (int l : labels) idx.index.push_back(static_cast<std::uint8_t>(l));
      image::write_indexed_png(root / "Annotations" / clip.name / (frame_stem(t) + ".png"), idx);
    }
  }
}

namespace {

std::string shape_string(const std::vector<int>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s;
}

std::vector<int> parse_shape(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, 'x')) out.push_back(std::stoi(part));
  return out;
}

}  // namespace

void save_checkpoint(const SegModel& model, const CheckpointMeta& meta, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::binary);
  const SegHyper& h = model.hyper();
  manifest << "cvos-checkpoint " << kCheckpointVersion << "\n";
  manifest << "epoch " << meta.epoch << "\n";
  manifest << "seed " << meta.seed << "\n";
  manifest << "config_hash " << (meta.config_hash.empty() ? "-" : meta.config_hash) << "\n";
  manifest << "hyper " << h.enc1 << " " << h.enc2 << " " << h.key_dim << " " << h.value_dim << " "
           << h.dec_dim << "\n";
  for (const Param& p : model.params()) {
    manifest << "tensor " << p.name << " float32 " << shape_string(p.shape) << "\n";
    std::ofstream payload(dir / (p.name + ".f32"), std::ios::binary);
    std::vector<unsigned char> bytes(p.value.size() * 4);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, &p.value[i], 4);
      for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    payload.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!payload) throw std::runtime_error("save_checkpoint: write failed for " + p.name);
  }
  if (!manifest) throw std::runtime_error("save_checkpoint: manifest write failed");
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw std::runtime_error("load_checkpoint: no manifest in " + dir.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "cvos-checkpoint") throw std::runtime_error("load_checkpoint: not a checkpoint manifest");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
  }
  LoadedCheckpoint out;
  SegHyper hyper;
  std::vector<Param> params;
  std::string key;
  while (in >> key) {
    if (key == "epoch") {
      in >> out.meta.epoch;
    } else if (key == "seed") {
      in >> out.meta.seed;
    } else if (key == "config_hash") {
      in >> out.meta.config_hash;
      if (out.meta.config_hash == "-") out.meta.config_hash.clear();
    } else if (key == "hyper") {
      in >> hyper.enc1 >> hyper.enc2 >> hyper.key_dim >> hyper.value_dim >> hyper.dec_dim;
    } else if (key == "tensor") {
      Param p;
      std::string dtype, shape;
      in >> p.name >> dtype >> shape;
      if (dtype != "float32") throw std::runtime_error("load_checkpoint: unsupported dtype " + dtype);
      p.shape = parse_shape(shape);
      const std::size_t n = ag::shape_numel(p.shape);
      const fs::path file = dir / (p.name + ".f32");
      if (!fs::exists(file)) throw std::runtime_error("load_checkpoint: missing payload " + file.string());
      if (fs::file_size(file) != n * 4) {
        throw std::runtime_error("load_checkpoint: payload length mismatch for " + p.name);
      }
      std::ifstream payload(file, std::ios::binary);
      std::vector<unsigned char> bytes(n * 4);
      payload.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      p.value.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
        std::memcpy(&p.value[i], &bits, 4);
      }
      params.push_back(std::move(p));
    } else {
      throw std::runtime_error("load_checkpoint: unknown manifest key " + key);
    }
  }
  out.model = SegModel::from_params(hyper, std::move(params));
  return out;
}

}  // namespace cvos
