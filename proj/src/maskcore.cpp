#include "cvos/maskcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cvos {

Frame::Frame(int h, int w, int t)
    : height(h), width(w), timestamp(t),
      pixels(static_cast<std::size_t>(3) * h * w, 0.0) {}

Frame::Frame(int h, int w, int t, std::vector<double> planar_rgb)
    : height(h), width(w), timestamp(t), pixels(std::move(planar_rgb)) {
  if (pixels.size() != static_cast<std::size_t>(3) * h * w) {
    throw std::invalid_argument("Frame: pixel buffer does not match 3xHxW");
  }
}

void Frame::validate() const {
  if (height < 8 || width < 8) {
    throw std::invalid_argument("Frame: resolution must be at least 8x8");
  }
  if (timestamp < 1) throw std::invalid_argument("Frame: timestamp must be >= 1");
  if (pixels.size() != static_cast<std::size_t>(3) * height * width) {
    throw std::invalid_argument("Frame: pixel buffer does not match 3xHxW");
  }
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("Frame: pixel outside [0,1]");
  }
}

Mask::Mask(int h, int w, double fill, int id, MaskKind k)
    : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill),
      object_id(id), kind(k) {}

Mask::Mask(int h, int w, std::vector<double> v, int id, MaskKind k)
    : height(h), width(w), values(std::move(v)), object_id(id), kind(k) {
  if (values.size() != static_cast<std::size_t>(h) * w) {
    throw std::invalid_argument("Mask: value buffer does not match HxW");
  }
}

void Mask::validate() const {
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("Mask: value buffer does not match HxW");
  }
  if (object_id < 1) throw std::invalid_argument("Mask: object id must be >= 1");
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("Mask: non-finite value");
    if (kind == MaskKind::probability && (v < 0.0 || v > 1.0)) {
      throw std::invalid_argument("Mask: probability value outside [0,1]");
    }
  }
}

std::vector<int> MultiObjectMask::object_ids() const {
  std::vector<int> ids;
  for (const Mask& m : per_object) ids.push_back(m.object_id);
  return ids;
}

const Mask* MultiObjectMask::find(int object_id) const {
  for (const Mask& m : per_object) {
    if (m.object_id == object_id) return &m;
  }
  return nullptr;
}

std::vector<int> MultiObjectMask::labels() const {
  std::vector<int> out(background.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double best = background.values[i];
    for (const Mask& m : per_object) {
      if (m.values[i] > best) {
        best = m.values[i];
        out[i] = m.object_id;
      }
    }
  }
  return out;
}

MultiObjectMask MultiObjectMask::from_labels(int h, int w, std::span<const int> labels,
                                             const std::set<int>& ids) {
  if (labels.size() != static_cast<std::size_t>(h) * w) {
    throw std::invalid_argument("from_labels: label grid does not match HxW");
  }
  MultiObjectMask out;
  out.background = Mask(h, w, 0.0, 1);
  for (int id : ids) out.per_object.emplace_back(h, w, 0.0, id);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) {
      out.background.values[i] = 1.0;
      continue;
    }
    auto it = ids.find(labels[i]);
    if (it == ids.end()) continue;
    out.per_object[static_cast<std::size_t>(std::distance(ids.begin(), it))].values[i] = 1.0;
  }
  return out;
}

void ReferenceSet::push(Frame f, Mask m) {
  entries.emplace_back(std::move(f), std::move(m));
  if (capacity && entries.size() > *capacity && entries.size() > 1) {
    entries.erase(entries.begin() + 1);
  }
}

void ReferenceSet::validate() const {
  if (entries.empty()) throw std::invalid_argument("ReferenceSet: empty");
  const int h = entries.front().first.height, w = entries.front().first.width;
  for (const auto& [f, m] : entries) {
    if (f.height != h || f.width != w || m.height != h || m.width != w) {
      throw std::invalid_argument("ReferenceSet: entries differ in resolution");
    }
  }
}

void VideoClip::validate() const {
  if (gt.size() != frames.size()) {
    throw std::invalid_argument("VideoClip: gt list length differs from frame count");
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    frames[i].validate();
    if (i > 0 && frames[i].timestamp <= frames[i - 1].timestamp) {
      throw std::invalid_argument("VideoClip: timestamps not strictly increasing");
    }
    if (gt[i]) {
      if (gt[i]->height() != frames[i].height || gt[i]->width() != frames[i].width) {
        throw std::invalid_argument("VideoClip: gt resolution differs from frame");
      }
    }
  }
}

std::vector<std::uint8_t> binarize(const Mask& m) {
  std::vector<std::uint8_t> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    out[i] = m.values[i] >= kBinarizeThreshold ? 1 : 0;
  }
  return out;
}

MultiObjectMask soft_aggregate(std::span<const Mask> per_object_probs) {
  if (per_object_probs.empty()) throw std::invalid_argument("soft_aggregate: no masks");
  const Mask& first = per_object_probs.front();
  std::set<int> seen;
  for (const Mask& m : per_object_probs) {
    if (!m.same_shape(first)) throw std::invalid_argument("soft_aggregate: shape mismatch");
    if (m.kind != MaskKind::probability) {
      throw std::invalid_argument("soft_aggregate: masks must be probability-kind");
    }
    if (!seen.insert(m.object_id).second) {
      throw std::invalid_argument("soft_aggregate: duplicate object id");
    }
  }
  constexpr double kLo = 1e-5, kHi = 1.0 - 1e-5;
  const std::size_t n = first.size();
  const std::size_t objects = per_object_probs.size();

  MultiObjectMask out;
  out.background = Mask(first.height, first.width, 0.0, 1);
  for (const Mask& m : per_object_probs) {
    out.per_object.emplace_back(first.height, first.width, 0.0, m.object_id);
  }
  std::vector<double> odds(objects + 1);
  for (std::size_t i = 0; i < n; ++i) {
    double bg = 1.0;
    for (std::size_t k = 0; k < objects; ++k) {
      const double p = std::clamp(per_object_probs[k].values[i], kLo, kHi);
      bg *= 1.0 - p;
      odds[k + 1] = p / (1.0 - p);
    }
    bg = std::clamp(bg, kLo, kHi);
    odds[0] = bg / (1.0 - bg);
    const double total = std::accumulate(odds.begin(), odds.end(), 0.0);
    out.background.values[i] = odds[0] / total;
    for (std::size_t k = 0; k < objects; ++k) {
      out.per_object[k].values[i] = odds[k + 1] / total;
    }
  }
  return out;
}

double jaccard(const Mask& pred, const Mask& gt) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("jaccard: shape mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.values[i] >= kBinarizeThreshold;
    const bool g = gt.values[i] >= kBinarizeThreshold;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::uint8_t> boundary_map(std::span<const std::uint8_t> fg, int h, int w) {
  std::vector<std::uint8_t> out(fg.size(), 0);
  auto at = [&](int y, int x) { return fg[static_cast<std::size_t>(y) * w + x]; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!at(y, x)) continue;
      const bool edge = (y > 0 && !at(y - 1, x)) || (y + 1 < h && !at(y + 1, x)) ||
                        (x > 0 && !at(y, x - 1)) || (x + 1 < w && !at(y, x + 1));
      out[static_cast<std::size_t>(y) * w + x] = edge ? 1 : 0;
    }
  }
  return out;
}

int default_boundary_tolerance(int h, int w) {
  const double diag = std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
  return static_cast<int>(std::ceil(0.0075 * diag));
}

namespace {

// Dilates `src` by the Euclidean disk of radius tol.
std::vector<std::uint8_t> dilate_disk(const std::vector<std::uint8_t>& src, int h, int w,
                                      int tol) {
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -tol; dy <= tol; ++dy) {
    for (int dx = -tol; dx <= tol; ++dx) {
      if (dy * dy + dx * dx <= tol * tol) offsets.emplace_back(dy, dx);
    }
  }
  std::vector<std::uint8_t> out(src.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!src[static_cast<std::size_t>(y) * w + x]) continue;
      for (auto [dy, dx] : offsets) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
          out[static_cast<std::size_t>(yy) * w + xx] = 1;
        }
      }
    }
  }
  return out;
}

}  // namespace

double contour_f(const Mask& pred, const Mask& gt, int tol_px) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("contour_f: shape mismatch");
  if (tol_px < 0) throw std::invalid_argument("contour_f: negative tolerance");
  const int h = pred.height, w = pred.width;
  const auto pb = boundary_map(binarize(pred), h, w);
  const auto gb = boundary_map(binarize(gt), h, w);
  const auto np = std::count(pb.begin(), pb.end(), 1);
  const auto ng = std::count(gb.begin(), gb.end(), 1);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;

  const auto gd = dilate_disk(gb, h, w, tol_px);
  const auto pd = dilate_disk(pb, h, w, tol_px);
  std::size_t pred_hit = 0, gt_hit = 0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    if (pb[i] && gd[i]) ++pred_hit;
    if (gb[i] && pd[i]) ++gt_hit;
  }
  const double precision = static_cast<double>(pred_hit) / static_cast<double>(np);
  const double recall = static_cast<double>(gt_hit) / static_cast<double>(ng);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double contour_f(const Mask& pred, const Mask& gt) {
  return contour_f(pred, gt, default_boundary_tolerance(pred.height, pred.width));
}

JFReport jf_mean(std::span<const double> per_frame_j, std::span<const double> per_frame_f) {
  if (per_frame_j.empty() || per_frame_j.size() != per_frame_f.size()) {
    throw std::invalid_argument("jf_mean: need equal-length nonempty lists");
  }
  JFReport r;
  const double n = static_cast<double>(per_frame_j.size());
  r.j = std::accumulate(per_frame_j.begin(), per_frame_j.end(), 0.0) / n;
  r.f = std::accumulate(per_frame_f.begin(), per_frame_f.end(), 0.0) / n;
  r.jf = 0.5 * (r.j + r.f);
  return r;
}

}  // namespace cvos
