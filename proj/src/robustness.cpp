#include "cvos/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cvos {

NoiseKind parse_noise(std::string_view name) {
  if (name == "none") return NoiseKind::none;
  if (name == "lowquality") return NoiseKind::lowquality;
  if (name == "box") return NoiseKind::box;
  if (name == "fgsm") return NoiseKind::fgsm;
  if (name == "mi_fgsm") return NoiseKind::mi_fgsm;
  throw std::invalid_argument("unknown noise kind '" + std::string(name) +
                              "' (expected none, lowquality, box, fgsm or mi_fgsm)");
}

std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::lowquality: return "lowquality";
    case NoiseKind::box: return "box";
    case NoiseKind::fgsm: return "fgsm";
    case NoiseKind::mi_fgsm: return "mi_fgsm";
  }
  return "none";
}

AttackMode parse_attack_mode(std::string_view name) {
  if (name == "white_box") return AttackMode::white_box;
  if (name == "black_box") return AttackMode::black_box;
  throw std::invalid_argument("unknown attack mode '" + std::string(name) + "' (expected white_box or black_box)");
}

std::string to_string(AttackMode m) { return m == AttackMode::white_box ? "white_box" : "black_box"; }

void AttackConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("AttackConfig: epsilon must be > 0");
  if (mi_iters < 1) throw std::invalid_argument("AttackConfig: mi_iters must be >= 1");
  if (!(mi_decay >= 0.0)) throw std::invalid_argument("AttackConfig: mi_decay must be >= 0");
  if (horizon < 1) throw std::invalid_argument("AttackConfig: horizon must be >= 1");
  if (mode == AttackMode::black_box && !surrogate) {
    throw std::invalid_argument("AttackConfig: black_box mode requires a surrogate model");
  }
}

const SegModel& AttackConfig::attack_model(const SegModel& victim) const {
  return mode == AttackMode::black_box ? *surrogate : victim;
}

Mask degrade_lowquality(const SegModel& weak, const Frame& frame, const ReferenceSet& refs) {
  return segment(weak, refs, frame);
}

Mask box_template(const Mask& gt) {
  Mask out(gt.height, gt.width, 0.0, gt.object_id);
  int y0 = gt.height, y1 = -1, x0 = gt.width, x1 = -1;
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      if (gt.at(y, x) >= kBinarizeThreshold) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
    }
  }
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) out.at(y, x) = 1.0;
  }
  return out;
}

namespace {

// Encodings that stay fixed while the written mask varies.
class AttackProblem {
 public:
  AttackProblem(const SegModel& model, const AttackTarget& target, const AttackConfig& cfg,
                const LossConfig& loss_cfg)
      : target_(target), loss_cfg_(loss_cfg), graph_(model, false) {
    if (!target.video) throw std::invalid_argument("attack: target has no video");
    const VideoClip& v = *target.video;
    const int n = static_cast<int>(v.frames.size());
    if (target.frame < 0 || target.frame >= n) throw std::invalid_argument("attack: frame out of range");
    if (!target.memory.empty()) memory_ = encode_memory_const(target.memory);
    frame_query_ = graph_.encode_query(v.frames[static_cast<std::size_t>(target.frame)]);
    for (int s = target.frame + 1; s <= std::min(n - 1, target.frame + cfg.horizon); ++s) {
      if (!v.gt[static_cast<std::size_t>(s)]) continue;
      const Frame& f = v.frames[static_cast<std::size_t>(s)];
      const Mask* m = v.gt[static_cast<std::size_t>(s)]->find(target.object_id);
      futures_.push_back({graph_.encode_query(f), m ? *m : Mask(f.height, f.width, 0.0, target.object_id)});
    }
  }

  double evaluate(const Mask& mask, Mask* grad) const {
    const VideoClip& v = *target_.video;
    const ag::Var leaf = grad ? mask_leaf(mask) : mask_constant(mask);
    std::vector<MemoryBank> banks;
    if (memory_.rows() > 0) banks.push_back(memory_);
    banks.push_back(graph_.encode_entry(v.frames[static_cast<std::size_t>(target_.frame)], leaf, &frame_query_));
    const MemoryBank bank = concat_memory(banks);
    if (futures_.empty()) {
      if (grad) *grad = Mask(mask.height, mask.width, 0.0, mask.object_id, MaskKind::unconstrained);
      return 0.0;
    }
    std::vector<ag::Var> terms;
    for (const auto& fut : futures_) {
      terms.push_back(graph::combined_loss(graph_.decode(fut.query, bank), fut.gt, loss_cfg_));
    }
    const std::vector<double> ones(terms.size(), 1.0);
    const ag::Var total = ag::weighted_sum(terms, ones);
    if (grad) {
      ag::backward(total);
      *grad = Mask(mask.height, mask.width, leaf.grad().data, mask.object_id, MaskKind::unconstrained);
    }
    return total.value().data[0];
  }

 private:
  struct Future {
    QueryFeatures query;
    Mask gt;
  };

  MemoryBank encode_memory_const(const ReferenceSet& refs) const {
    std::vector<MemoryBank> banks;
    for (const auto& [f, m] : refs.entries) banks.push_back(graph_.encode_entry(f, mask_constant(m)));
    return concat_memory(banks);
  }

  const AttackTarget& target_;
  LossConfig loss_cfg_;
  SegGraph graph_;
  MemoryBank memory_;
  QueryFeatures frame_query_;
  std::vector<Future> futures_;
};

double sign(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

}  // namespace

double attack_objective(const SegModel& model, const AttackTarget& target, const Mask& mask,
                        const AttackConfig& cfg, const LossConfig& loss_cfg, Mask* grad) {
  AttackProblem problem(model, target, cfg, loss_cfg);
  return problem.evaluate(mask, grad);
}

Mask fgsm_noise(const SegModel& attack_model, const AttackTarget& target, const Mask& mask,
                const AttackConfig& cfg, const LossConfig& loss_cfg) {
  if (!(cfg.epsilon >= 0.0)) throw std::invalid_argument("fgsm_noise: epsilon must be >= 0");
  Mask out = mask;
  if (cfg.epsilon == 0.0) return out;
  AttackProblem problem(attack_model, target, cfg, loss_cfg);
  Mask grad;
  problem.evaluate(mask, &grad);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = std::clamp(mask.values[i] + cfg.epsilon * sign(grad.values[i]), 0.0, 1.0);
  }
  return out;
}

Mask mi_fgsm_noise(const SegModel& attack_model, const AttackTarget& target, const Mask& mask,
                   const AttackConfig& cfg, const LossConfig& loss_cfg) {
  if (cfg.mi_iters < 1) throw std::invalid_argument("mi_fgsm_noise: mi_iters must be >= 1");
  Mask out = mask;
  if (cfg.epsilon == 0.0) return out;
  AttackProblem problem(attack_model, target, cfg, loss_cfg);
  const double step = cfg.epsilon / cfg.mi_iters;
  std::vector<double> momentum(mask.values.size(), 0.0);
  Mask grad;
  for (int it = 0; it < cfg.mi_iters; ++it) {
    problem.evaluate(out, &grad);
    double l1 = 0.0;
    for (double g : grad.values) l1 += std::abs(g);
    for (std::size_t i = 0; i < momentum.size(); ++i) {
      momentum[i] = cfg.mi_decay * momentum[i] + (l1 > 0.0 ? grad.values[i] / l1 : 0.0);
    }
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      const double v = out.values[i] + step * sign(momentum[i]);
      const double lo = std::max(0.0, mask.values[i] - cfg.epsilon);
      const double hi = std::min(1.0, mask.values[i] + cfg.epsilon);
      out.values[i] = std::clamp(v, lo, hi);
    }
  }
  return out;
}

JFReport run_noisy(const SegModel& victim, const AttackProtocol& protocol, const std::vector<VideoClip>& dataset,
                   bool with_gc, std::vector<AttackRow>* rows, double* max_perturbation) {
  const AttackConfig& acfg = protocol.attack;
  if (protocol.noise == NoiseKind::fgsm || protocol.noise == NoiseKind::mi_fgsm) acfg.validate();
  if (protocol.noise == NoiseKind::lowquality && !protocol.weak) {
    throw std::invalid_argument("run_attack_protocol: lowquality noise requires a weak model");
  }
  InferenceConfig icfg = protocol.inference;
  icfg.strategy = RefStrategy::mem;
  icfg.gc = with_gc;
  icfg.correct_on_write = true;

  std::vector<SequenceScore> all;
  const std::string condition = to_string(protocol.noise) + (with_gc ? "+gc" : "");
  for (const VideoClip& video : dataset) {
    if (!video.gt.front()) throw std::invalid_argument("run_attack_protocol: first frame of '" + video.name + "' unannotated");
    MemoryWriteHook hook;
    if (protocol.noise != NoiseKind::none) {
      hook = [&](int t, int id, const ReferenceSet& memory, const Mask& m) -> Mask {
        const Frame& frame = video.frames[static_cast<std::size_t>(t)];
        Mask out;
        switch (protocol.noise) {
          case NoiseKind::none: return m;
          case NoiseKind::lowquality: out = degrade_lowquality(*protocol.weak, frame, memory); break;
          case NoiseKind::box: out = box_template(m); break;
          case NoiseKind::fgsm:
          case NoiseKind::mi_fgsm: {
            const AttackTarget target{&video, t, id, memory};
            const SegModel& attacker = acfg.attack_model(victim);
            out = protocol.noise == NoiseKind::fgsm ? fgsm_noise(attacker, target, m, acfg, icfg.loss)
                                                    : mi_fgsm_noise(attacker, target, m, acfg, icfg.loss);
            if (max_perturbation) {
              for (std::size_t i = 0; i < m.values.size(); ++i) {
                *max_perturbation = std::max(*max_perturbation, std::abs(out.values[i] - m.values[i]));
              }
            }
            break;
          }
        }
        out.object_id = id;
        return out;
      };
    }
    const InferenceResult res = run_inference(victim, video, *video.gt.front(), icfg, hook);
    const auto scores = score_sequence(video, res.masks);
    const JFReport r = summarize(scores);
    if (rows) rows->push_back({video.name, condition, r.j, r.f, r.jf});
    all.insert(all.end(), scores.begin(), scores.end());
  }
  return summarize(all);
}

AttackReport run_attack_protocol(const SegModel& victim, const AttackProtocol& protocol,
                                 const std::vector<VideoClip>& dataset, bool with_gc) {
  AttackReport report;
  AttackProtocol clean = protocol;
  clean.noise = NoiseKind::none;
  std::vector<AttackRow> clean_rows;
  report.clean = run_noisy(victim, clean, dataset, false, &clean_rows);
  for (auto& r : clean_rows) r.condition = "clean";
  std::vector<AttackRow> noisy_rows;
  report.attacked = run_noisy(victim, protocol, dataset, with_gc, &noisy_rows, &report.max_perturbation);
  for (std::size_t i = 0; i < clean_rows.size(); ++i) {
    report.rows.push_back(clean_rows[i]);
    report.rows.push_back(noisy_rows[i]);
  }
  return report;
}

void write_attack_csv(const std::vector<AttackRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_attack_csv: cannot open " + path);
  out << "video,condition,J,F,JF\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f\n", r.video.c_str(), r.condition.c_str(), r.j, r.f, r.jf);
    out << buf;
  }
  if (!out) throw std::runtime_error("write_attack_csv: write failed for " + path);
}

}  // namespace cvos
