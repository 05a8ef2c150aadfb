#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cvos {

inline constexpr double kBinarizeThreshold = 0.5;

/// RGB frame in planar layout: pixels[(c * height + y) * width + x], c in {0,1,2}.
struct Frame {
  int height = 0;
  int width = 0;
  int timestamp = 1;
  std::vector<double> pixels;

  Frame() = default;
  Frame(int h, int w, int t);
  Frame(int h, int w, int t, std::vector<double> planar_rgb);

  double& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  // Throws std::invalid_argument when H/W < 8, t < 1 or a pixel leaves [0,1].
  void validate() const;
};

enum class MaskKind { probability, unconstrained };

/// Single-object soft mask. Values are row-major.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  int object_id = 1;
  MaskKind kind = MaskKind::probability;

  Mask() = default;
  Mask(int h, int w, double fill = 0.0, int id = 1,
       MaskKind k = MaskKind::probability);
  Mask(int h, int w, std::vector<double> v, int id = 1,
       MaskKind k = MaskKind::probability);

  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return values.size(); }
  bool same_shape(const Mask& o) const { return height == o.height && width == o.width; }

  void validate() const;
};

/// Per-object masks plus the derived background channel.
struct MultiObjectMask {
  std::vector<Mask> per_object;
  Mask background;

  int height() const { return background.height; }
  int width() const { return background.width; }
  std::vector<int> object_ids() const;
  const Mask* find(int object_id) const;

  // Argmax labeling: 0 is background, otherwise the winning object id.
  std::vector<int> labels() const;

  // Hard masks from a label grid; label 0 is background.
  static MultiObjectMask from_labels(int h, int w, std::span<const int> labels,
                                     const std::set<int>& ids);
};

/// Ordered (frame, mask) guidance pairs. A capacity keeps the first entry and
/// evicts the oldest of the remainder.
struct ReferenceSet {
  std::vector<std::pair<Frame, Mask>> entries;
  std::optional<std::size_t> capacity;

  void push(Frame f, Mask m);
  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
  // Throws on an empty set or mixed resolutions.
  void validate() const;
};

struct VideoClip {
  std::string name;
  std::vector<Frame> frames;
  std::vector<std::optional<MultiObjectMask>> gt;
  std::set<int> object_ids;

  std::size_t length() const { return frames.size(); }
  void validate() const;
};

struct JFReport {
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
};

// Binary foreground at threshold 0.5; exactly 0.5 counts as foreground.
std::vector<std::uint8_t> binarize(const Mask& m);

// Odds-normalized soft aggregation with background = prod(1 - p_m).
MultiObjectMask soft_aggregate(std::span<const Mask> per_object_probs);

double jaccard(const Mask& pred, const Mask& gt);

// Foreground pixels having a 4-neighbour in the background. The image border
// does not create boundary.
std::vector<std::uint8_t> boundary_map(std::span<const std::uint8_t> fg, int h, int w);

int default_boundary_tolerance(int h, int w);
double contour_f(const Mask& pred, const Mask& gt, int tol_px);
double contour_f(const Mask& pred, const Mask& gt);

JFReport jf_mean(std::span<const double> per_frame_j, std::span<const double> per_frame_f);

}  // namespace cvos
