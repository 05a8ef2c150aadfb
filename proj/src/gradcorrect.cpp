#include "cvos/gradcorrect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cvos {

void CorrectionConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("CorrectionConfig: alpha must be >= 0");
  if (n_iters < 0) throw std::invalid_argument("CorrectionConfig: n_iters must be >= 0");
  if (every_k < 1) throw std::invalid_argument("CorrectionConfig: every_k must be >= 1");
  if (!(lambda >= 0.0)) throw std::invalid_argument("CorrectionConfig: lambda must be >= 0");
}

void InferenceConfig::validate() const {
  if (mem_stride < 1) throw std::invalid_argument("InferenceConfig: mem_stride must be >= 1");
  correction.validate();
  loss.validate();
}

ReconstructionProblem::ReconstructionProblem(const SegModel& model, const Frame& query_frame,
                                             const Frame& first_frame, const Mask& first_gt, double lambda,
                                             const LossConfig& loss_cfg)
    : model_(&model),
      query_frame_(&query_frame),
      first_gt_(first_gt),
      lambda_(lambda),
      loss_cfg_(loss_cfg),
      graph_(model, false) {
  if (query_frame.height != first_frame.height || query_frame.width != first_frame.width ||
      first_gt.height != first_frame.height || first_gt.width != first_frame.width) {
    throw std::invalid_argument("reconstruction objective: frame/mask resolutions differ");
  }
  first_query_ = graph_.encode_query(first_frame);
  frame_query_ = graph_.encode_query(query_frame);
}

ReconstructionProblem::Eval ReconstructionProblem::evaluate(const Mask& candidate, bool want_grad) const {
  if (candidate.height != query_frame_->height || candidate.width != query_frame_->width) {
    throw std::invalid_argument("reconstruction objective: candidate mask resolution differs");
  }
  ++evaluations_;
  const ag::Var mask = want_grad ? mask_leaf(candidate) : mask_constant(candidate);
  const ag::Var pred = graph_.decode(first_query_, graph_.encode_entry(*query_frame_, mask, &frame_query_));
  std::vector<ag::Var> terms{graph::combined_loss(pred, first_gt_, loss_cfg_)};
  std::vector<double> weights{1.0};
  if (lambda_ > 0.0) {
    terms.push_back(graph::smooth_loss(mask, candidate.height, candidate.width));
    weights.push_back(lambda_);
  }
  const ag::Var total = ag::weighted_sum(terms, weights);
  Eval out;
  out.value = total.value().data[0];
  if (want_grad) {
    ag::backward(total);
    out.grad = Mask(candidate.height, candidate.width, mask.grad().data, candidate.object_id,
                    MaskKind::unconstrained);
  }
  return out;
}

double reconstruction_objective(const SegModel& model, const Frame& query_frame, const Mask& candidate,
                                const Frame& first_frame, const Mask& first_gt, double lambda,
                                const LossConfig& loss_cfg) {
  ReconstructionProblem problem(model, query_frame, first_frame, first_gt, lambda, loss_cfg);
  return problem.evaluate(candidate, false).value;
}

CorrectionResult correct_mask(const SegModel& model, const Frame& query_frame, const Mask& initial,
                              const Frame& first_frame, const Mask& first_gt, const CorrectionConfig& cfg,
                              const LossConfig& loss_cfg) {
  cfg.validate();
  ReconstructionProblem problem(model, query_frame, first_frame, first_gt, cfg.lambda, loss_cfg);
  CorrectionResult result;
  result.mask = initial;
  if (cfg.clamp == ClampMode::none) result.mask.kind = MaskKind::unconstrained;

  if (cfg.n_iters == 0 || cfg.alpha == 0.0) {
    const double v = problem.evaluate(initial, false).value;
    result.trajectory.assign(static_cast<std::size_t>(cfg.n_iters) + 1, v);
    result.evaluations = problem.evaluations();
    return result;
  }

  for (int l = 0; l < cfg.n_iters; ++l) {
    const auto e = problem.evaluate(result.mask, true);
    const bool finite = std::isfinite(e.value) &&
                        std::all_of(e.grad.values.begin(), e.grad.values.end(),
                                    [](double g) { return std::isfinite(g); });
    if (!finite) {
      result.stopped_early = true;
      break;
    }
    result.trajectory.push_back(e.value);
    for (std::size_t i = 0; i < result.mask.values.size(); ++i) {
      double v = result.mask.values[i] - cfg.alpha * e.grad.values[i];
      if (cfg.clamp == ClampMode::unit_interval) v = std::clamp(v, 0.0, 1.0);
      result.mask.values[i] = v;
    }
  }
  if (!result.stopped_early) {
    const double v = problem.evaluate(result.mask, false).value;
    if (std::isfinite(v)) {
      result.trajectory.push_back(v);
    } else {
      result.stopped_early = true;
    }
  }
  result.evaluations = problem.evaluations();
  return result;
}

namespace {

bool writes_memory(RefStrategy s, int t, int mem_stride) {
  switch (s) {
    case RefStrategy::first: return false;
    case RefStrategy::prev:
    case RefStrategy::first_prev: return true;
    case RefStrategy::mem: return is_memory_frame(t, mem_stride);
  }
  return false;
}

bool nonempty(const Mask& m) {
  return std::any_of(m.values.begin(), m.values.end(), [](double v) { return v >= 0.5; });
}

}  // namespace

InferenceResult run_inference(const SegModel& model, const VideoClip& video, const MultiObjectMask& initial,
                              const InferenceConfig& cfg, const MemoryWriteHook& on_write) {
  cfg.validate();
  video.validate();
  if (video.frames.empty()) throw std::invalid_argument("run_inference: empty video");
  const Frame& first = video.frames.front();
  if (initial.height() != first.height || initial.width() != first.width) {
    throw std::invalid_argument("run_inference: initial mask resolution differs from the video");
  }
  const int n = static_cast<int>(video.frames.size());
  const std::vector<int> ids = initial.object_ids();
  if (ids.empty()) throw std::invalid_argument("run_inference: no objects in the initial mask");

  SegGraph graph(model, false);
  InferenceResult result;
  result.masks.reserve(static_cast<std::size_t>(n));
  result.masks.push_back(initial);

  struct Track {
    int id = 0;
    Mask first_gt;
    std::vector<std::optional<MemoryBank>> banks;  // encoded entries by frame
    std::vector<std::optional<Mask>> written;      // masks stored in memory by frame
  };
  const QueryFeatures first_query = graph.encode_query(first);
  std::vector<Track> tracks;
  for (int id : ids) {
    Track tr;
    tr.id = id;
    tr.first_gt = *initial.find(id);
    tr.banks.resize(static_cast<std::size_t>(n));
    tr.written.resize(static_cast<std::size_t>(n));
    tr.written[0] = tr.first_gt;
    tr.banks[0] = graph.encode_entry(first, mask_constant(tr.first_gt), &first_query);
    ++result.net_evaluations;
    tracks.push_back(std::move(tr));
  }

  auto correct = [&](int t, Track& tr, const Mask& m) {
    CorrectionResult c =
        correct_mask(model, video.frames[static_cast<std::size_t>(t)], m, first, tr.first_gt, cfg.correction, cfg.loss);
    result.net_evaluations += c.evaluations;
    Mask out = c.stopped_early && c.trajectory.empty() ? m : c.mask;
    out.kind = MaskKind::probability;
    for (double& v : out.values) v = std::clamp(v, 0.0, 1.0);
    out.object_id = tr.id;
    result.corrections.push_back(CorrectionRecord{t, tr.id, c.trajectory, c.stopped_early, m, out});
    return out;
  };

  for (int t = 1; t < n; ++t) {
    const Frame& frame = video.frames[static_cast<std::size_t>(t)];
    const QueryFeatures query = graph.encode_query(frame);
    const std::vector<int> refs = reference_indices(cfg.strategy, t, cfg.mem_stride);
    std::vector<Mask> probs;
    for (Track& tr : tracks) {
      std::vector<MemoryBank> banks;
      for (int s : refs) {
        if (!tr.banks[static_cast<std::size_t>(s)]) {
          throw std::logic_error("run_inference: reference frame missing from memory");
        }
        banks.push_back(*tr.banks[static_cast<std::size_t>(s)]);
      }
      Mask p = to_mask(graph.decode(query, concat_memory(banks)), frame.height, frame.width, tr.id);
      ++result.net_evaluations;
      if (cfg.gc && !cfg.correct_on_write && t % cfg.correction.every_k == 0 && nonempty(tr.first_gt)) {
        p = correct(t, tr, p);
      }
      probs.push_back(std::move(p));
    }
    MultiObjectMask agg = soft_aggregate(probs);

    if (writes_memory(cfg.strategy, t, cfg.mem_stride)) {
      for (std::size_t k = 0; k < tracks.size(); ++k) {
        Track& tr = tracks[k];
        Mask m = agg.per_object[k];
        if (on_write) {
          ReferenceSet memory;
          for (int s = 0; s < t; ++s) {
            if (tr.written[static_cast<std::size_t>(s)] && tr.banks[static_cast<std::size_t>(s)]) {
              memory.push(video.frames[static_cast<std::size_t>(s)], *tr.written[static_cast<std::size_t>(s)]);
            }
          }
          m = on_write(t, tr.id, memory, m);
        }
        if (cfg.gc && cfg.correct_on_write && nonempty(tr.first_gt)) m = correct(t, tr, m);
        tr.banks[static_cast<std::size_t>(t)] = graph.encode_entry(frame, mask_constant(m), &query);
        ++result.net_evaluations;
        tr.written[static_cast<std::size_t>(t)] = std::move(m);
        // Only the newest entry is ever read back under prev / first_prev.
        if (cfg.strategy != RefStrategy::mem && t - 1 > 0) {
          tr.banks[static_cast<std::size_t>(t - 1)].reset();
          tr.written[static_cast<std::size_t>(t - 1)].reset();
        }
      }
    }
    result.masks.push_back(std::move(agg));
  }
  return result;
}

MultiObjectMask resize_nearest(const MultiObjectMask& m, int h, int w) {
  auto resize = [&](const Mask& src) {
    if (src.height == h && src.width == w) return src;
    Mask out(h, w, 0.0, src.object_id, src.kind);
    for (int y = 0; y < h; ++y) {
      const int sy = std::min(static_cast<int>(std::floor((y + 0.5) * src.height / h)), src.height - 1);
      for (int x = 0; x < w; ++x) {
        const int sx = std::min(static_cast<int>(std::floor((x + 0.5) * src.width / w)), src.width - 1);
        out.at(y, x) = src.at(sy, sx);
      }
    }
    return out;
  };
  MultiObjectMask out;
  for (const Mask& p : m.per_object) out.per_object.push_back(resize(p));
  out.background = resize(m.background);
  return out;
}

std::vector<SequenceScore> score_sequence(const VideoClip& video, const std::vector<MultiObjectMask>& pred) {
  if (pred.size() != video.frames.size()) {
    throw std::invalid_argument("score_sequence: prediction count differs from frame count");
  }
  std::vector<SequenceScore> out;
  std::vector<std::vector<int>> labels(pred.size());
  for (std::size_t t = 1; t < pred.size(); ++t) {
    if (video.gt[t]) labels[t] = pred[t].labels();
  }
  for (int id : video.object_ids) {
    SequenceScore s;
    s.video = video.name;
    s.object_id = id;
    for (std::size_t t = 1; t < pred.size(); ++t) {
      if (!video.gt[t]) continue;
      const MultiObjectMask& gt = *video.gt[t];
      Mask hard(gt.height(), gt.width(), 0.0, id);
      for (std::size_t i = 0; i < hard.values.size(); ++i) hard.values[i] = labels[t][i] == id ? 1.0 : 0.0;
      const Mask* g = gt.find(id);
      const Mask empty(gt.height(), gt.width(), 0.0, id);
      const Mask& target = g ? *g : empty;
      s.j += jaccard(hard, target);
      s.f += contour_f(hard, target);
      ++s.frames;
    }
    if (s.frames == 0) continue;
    s.j /= s.frames;
    s.f /= s.frames;
    out.push_back(s);
  }
  return out;
}

JFReport summarize(const std::vector<SequenceScore>& scores) {
  std::vector<double> j, f;
  for (const auto& s : scores) {
    j.push_back(s.j);
    f.push_back(s.f);
  }
  return jf_mean(j, f);
}

}  // namespace cvos
