#pragma once

// Online inference with gradient correction. Every K frames the predicted
// mask of each object is refined by gradient descent on the error of
// reconstructing the first-frame annotation from (current frame, mask).

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "cvos/losses.hpp"
#include "cvos/maskcore.hpp"
#include "cvos/segnet.hpp"
#include "cvos/strategy.hpp"

namespace cvos {

enum class ClampMode { unit_interval, none };

struct CorrectionConfig {
  double alpha = 180.0;
  int n_iters = 10;
  int every_k = 5;
  double lambda = 0.75;
  ClampMode clamp = ClampMode::unit_interval;

  void validate() const;
};

// Objective for a fixed (X_t, X_1, Y_1); the query encoding of X_1 is built
// once and shared by every evaluation.
class ReconstructionProblem {
 public:
  ReconstructionProblem(const SegModel& model, const Frame& query_frame, const Frame& first_frame,
                        const Mask& first_gt, double lambda, const LossConfig& loss_cfg);

  struct Eval {
    double value = 0.0;
    Mask grad;  // empty unless requested
  };
  Eval evaluate(const Mask& candidate, bool want_grad) const;
  int evaluations() const { return evaluations_; }

 private:
  const SegModel* model_;
  const Frame* query_frame_;
  Mask first_gt_;
  double lambda_;
  LossConfig loss_cfg_;
  SegGraph graph_;
  QueryFeatures first_query_;
  QueryFeatures frame_query_;
  mutable int evaluations_ = 0;
};

// combined_loss(S({X_t},{candidate}, X_1), Y_1) + lambda * smooth_loss(candidate)
double reconstruction_objective(const SegModel& model, const Frame& query_frame, const Mask& candidate,
                                const Frame& first_frame, const Mask& first_gt, double lambda,
                                const LossConfig& loss_cfg = {});

struct CorrectionResult {
  Mask mask;
  std::vector<double> trajectory;  // objective at every iterate, initial included
  bool stopped_early = false;      // a non-finite gradient or value ended the descent
  int evaluations = 0;             // network forward passes spent
};

CorrectionResult correct_mask(const SegModel& model, const Frame& query_frame, const Mask& initial,
                              const Frame& first_frame, const Mask& first_gt, const CorrectionConfig& cfg,
                              const LossConfig& loss_cfg = {});

// Hook that may replace a mask before it is written to long-term memory.
// Arguments: frame index (0-based), object id, memory preceding the write,
// candidate mask. Used by the robustness harness.
using MemoryWriteHook =
    std::function<Mask(int t, int object_id, const ReferenceSet& memory, const Mask& candidate)>;

struct InferenceConfig {
  RefStrategy strategy = RefStrategy::mem;
  int mem_stride = 5;
  bool gc = true;
  CorrectionConfig correction;
  LossConfig loss;
  // Correct masks right before they are written to memory (instead of every K
  // frames). The robustness protocol applies GC this way.
  bool correct_on_write = false;

  void validate() const;
};

struct CorrectionRecord {
  int frame = 0;  // 0-based
  int object_id = 0;
  std::vector<double> trajectory;
  bool stopped_early = false;
  Mask input;
  Mask output;
};

struct InferenceResult {
  std::vector<MultiObjectMask> masks;  // one per frame; frame 0 is the given annotation
  std::vector<CorrectionRecord> corrections;
  long long net_evaluations = 0;
};

InferenceResult run_inference(const SegModel& model, const VideoClip& video, const MultiObjectMask& initial,
                              const InferenceConfig& cfg, const MemoryWriteHook& on_write = {});

// Nearest-neighbour upsampling of every channel to (h, w).
MultiObjectMask resize_nearest(const MultiObjectMask& m, int h, int w);

struct SequenceScore {
  std::string video;
  int object_id = 0;
  double j = 0.0;
  double f = 0.0;
  int frames = 0;
};

// Per-object J and F averaged over annotated frames after the first.
std::vector<SequenceScore> score_sequence(const VideoClip& video, const std::vector<MultiObjectMask>& pred);
JFReport summarize(const std::vector<SequenceScore>& scores);

}  // namespace cvos
