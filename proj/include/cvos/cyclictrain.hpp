#pragma once

// Cyclic training: a clip is segmented forward from its first (annotated)
// frame, then each prediction is used as the only reference to re-predict the
// first frame. Both ends are supervised and gradients flow through the
// forward predictions into the cyclic branch.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "cvos/losses.hpp"
#include "cvos/maskcore.hpp"
#include "cvos/segnet.hpp"
#include "cvos/strategy.hpp"

namespace cvos {

struct TrainConfig {
  int epochs = 240;
  int batch_size = 4;  // clips per optimizer update
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int frames_per_clip = 3;
  int interval_step = 5;
  int interval_epoch_period = 20;
  std::uint64_t seed = 0;
  double forward_weight = 1.0;
  double cycle_weight = 1.0;  // 0 gives plain sequential training
  RefStrategy strategy = RefStrategy::first_prev;
  int mem_stride = 5;
  bool augment = true;
  int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints

  void validate() const;
  // Largest allowed gap between consecutive sampled frames at `epoch`.
  int max_interval(int epoch) const;
};

struct AugmentParams {
  bool flip = false;
  double noise_sigma = 0.0;
  double contrast = 1.0;
  // Crop window in source pixels, resized back to full resolution.
  double crop_y = 0.0, crop_x = 0.0, crop_h = 0.0, crop_w = 0.0;
  // Output-to-source affine about the image centre (row-major 2x2).
  std::array<double, 4> affine{1.0, 0.0, 0.0, 1.0};
  std::uint64_t noise_seed = 0;

  static AugmentParams identity(int h, int w);
  bool operator==(const AugmentParams&) const = default;
};

struct ClipSample {
  std::vector<Frame> frames;  // ascending timestamps; frames[0] is the reference
  std::vector<Mask> gts;      // binary, one object
  std::vector<int> indices;   // 0-based positions in the source video
  int object_id = 1;
  std::optional<AugmentParams> augment;

  void validate() const;
};

ClipSample sample_clip(const VideoClip& video, int epoch, const TrainConfig& cfg,
                       std::mt19937_64& rng);

AugmentParams draw_augment_params(int h, int w, std::mt19937_64& rng);
// Applies one parameter draw to every frame and mask of the clip.
ClipSample apply_augment(const ClipSample& clip, const AugmentParams& params);
// Draws parameters, retrying up to 10 times when the reference object would be
// cropped away; falls back to the identity.
ClipSample augment_clip(const ClipSample& clip, std::mt19937_64& rng);

struct StepReport {
  double total = 0.0;
  double forward = 0.0;  // sum of forward-branch combined losses
  double cycle = 0.0;    // sum of cyclic-branch combined losses
};

// Loss and parameter gradients of one clip (no update). `grads` is resized to
// the parameter layout and accumulated into.
StepReport clip_gradients(const SegModel& model, const ClipSample& clip, const TrainConfig& cfg,
                          const LossConfig& loss_cfg, std::vector<std::vector<double>>& grads);

class Adam {
 public:
  Adam(const SegModel& model, const TrainConfig& cfg);
  void step(SegModel& model, const std::vector<std::vector<double>>& grads);
  int steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// One clip, one optimizer update.
StepReport train_step(SegModel& model, Adam& opt, const ClipSample& clip, const TrainConfig& cfg,
                      const LossConfig& loss_cfg);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double forward = 0.0;
  double cycle = 0.0;
  int clips = 0;
};

struct TrainResult {
  SegModel model;
  std::vector<EpochRecord> history;
};

struct TrainHooks {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::string config_hash;
  std::function<void(const EpochRecord&)> on_epoch;
};

TrainResult train(SegModel model, const std::vector<VideoClip>& dataset, const TrainConfig& cfg,
                  const LossConfig& loss_cfg, const TrainHooks& hooks = {});

}  // namespace cvos
