#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cvos/maskcore.hpp"
#include "cvos/segnet.hpp"

namespace cvos {

enum class ShapeKind { circle, square, triangle };

struct SynthConfig {
  int n_videos = 12;
  int frames_per_video = 40;
  int height = 64;
  int width = 112;
  int min_objects = 1;
  int n_objects = 3;  // per-video object count is drawn from [min_objects, n_objects]
  std::vector<ShapeKind> shapes{ShapeKind::circle, ShapeKind::square, ShapeKind::triangle};
  int min_speed = 1;  // Chebyshev speed in whole pixels per frame
  int max_speed = 2;
  double occluder_prob = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic per (cfg.seed, index); clips never depend on each other.
VideoClip gen_synthetic_video(const SynthConfig& cfg, int index);
std::vector<VideoClip> gen_synthetic(const SynthConfig& cfg);

// Derives independent 64-bit seeds from a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

Frame resize_frame_bilinear(const Frame& f, int h, int w);
Mask resize_mask_nearest(const Mask& m, int h, int w);
std::vector<int> resize_labels_nearest(const std::vector<int>& labels, int h, int w, int oh, int ow);

// DAVIS-style layout:
//   <root>/JPEGImages/<seq>/%05d.{jpg,png}
//   <root>/Annotations/<seq>/%05d.png   (indexed; index k is object k)
//   <root>/ImageSets/<split>.txt
struct WorkingResolution {
  int height = 0;
  int width = 0;
};

VideoClip load_davis_clip(const std::filesystem::path& root, const std::string& sequence,
                          std::optional<WorkingResolution> working = std::nullopt);
std::vector<std::string> read_split(const std::filesystem::path& root, const std::string& split);
void write_split(const std::filesystem::path& root, const std::string& split,
                 const std::vector<std::string>& names);
void save_davis_clip(const std::filesystem::path& root, const VideoClip& clip);
// Writes one indexed annotation per frame under <root>/Annotations/<name>/.
void save_label_sequence(const std::filesystem::path& root, const std::string& name,
                         int height, int width, const std::vector<std::vector<int>>& labels);

struct CheckpointMeta {
  int epoch = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline constexpr int kCheckpointVersion = 1;

// Directory with manifest.txt (names, dtypes, shapes, metadata) and one raw
// little-endian float32 file per tensor.
void save_checkpoint(const SegModel& model, const CheckpointMeta& meta,
                     const std::filesystem::path& dir);

struct LoadedCheckpoint {
  SegModel model;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace cvos
