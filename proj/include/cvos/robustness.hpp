#pragma once

// Reference-noise harness. Masks written to the long-term memory during
// inference are replaced by degraded or adversarially perturbed versions,
// optionally followed by gradient correction before the write.

#include <memory>
#include <string>
#include <vector>

#include "cvos/gradcorrect.hpp"
#include "cvos/losses.hpp"
#include "cvos/maskcore.hpp"
#include "cvos/segnet.hpp"

namespace cvos {

enum class NoiseKind { none, lowquality, box, fgsm, mi_fgsm };
enum class AttackMode { white_box, black_box };

NoiseKind parse_noise(std::string_view name);
std::string to_string(NoiseKind k);
AttackMode parse_attack_mode(std::string_view name);
std::string to_string(AttackMode m);

struct AttackConfig {
  double epsilon = 20.0 / 255.0;
  int mi_iters = 10;
  double mi_decay = 1.0;
  AttackMode mode = AttackMode::white_box;
  std::shared_ptr<const SegModel> surrogate;  // required for black_box
  // Frames after the written one whose loss the attacker maximises.
  int horizon = 5;

  void validate() const;
  const SegModel& attack_model(const SegModel& victim) const;
};

Mask degrade_lowquality(const SegModel& weak, const Frame& frame, const ReferenceSet& refs);

// Tight axis-aligned box around the foreground (threshold 0.5), filled with 1.
Mask box_template(const Mask& gt);

// Where a perturbed mask is written and whose future it affects.
struct AttackTarget {
  const VideoClip* video = nullptr;
  int frame = 0;  // 0-based frame whose mask is written
  int object_id = 1;
  ReferenceSet memory;  // entries preceding the write
};

// Sum over frames s in (frame, frame + horizon] with ground truth of the
// combined loss of predictions read from memory + (X_frame, mask).
double attack_objective(const SegModel& model, const AttackTarget& target, const Mask& mask,
                        const AttackConfig& cfg, const LossConfig& loss_cfg, Mask* grad = nullptr);

Mask fgsm_noise(const SegModel& attack_model, const AttackTarget& target, const Mask& mask,
                const AttackConfig& cfg, const LossConfig& loss_cfg = {});
Mask mi_fgsm_noise(const SegModel& attack_model, const AttackTarget& target, const Mask& mask,
                   const AttackConfig& cfg, const LossConfig& loss_cfg = {});

struct AttackRow {
  std::string video;
  std::string condition;
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
};

struct AttackReport {
  JFReport clean;
  JFReport attacked;
  std::vector<AttackRow> rows;       // per video, both conditions
  double max_perturbation = 0.0;     // largest |m' - m| over adversarial writes
};

struct AttackProtocol {
  NoiseKind noise = NoiseKind::none;
  AttackConfig attack;
  InferenceConfig inference;  // strategy is forced to mem
  std::shared_ptr<const SegModel> weak;  // required for lowquality
};

// Clean run (no noise, no correction) against the noisy run; with_gc corrects
// each noisy mask before it is written.
AttackReport run_attack_protocol(const SegModel& victim, const AttackProtocol& protocol,
                                 const std::vector<VideoClip>& dataset, bool with_gc);

// Noisy run only (clean half skipped), for callers that reuse one clean run.
JFReport run_noisy(const SegModel& victim, const AttackProtocol& protocol, const std::vector<VideoClip>& dataset,
                   bool with_gc, std::vector<AttackRow>* rows = nullptr, double* max_perturbation = nullptr);

void write_attack_csv(const std::vector<AttackRow>& rows, const std::string& path);

}  // namespace cvos
