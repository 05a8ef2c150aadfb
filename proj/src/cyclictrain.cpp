#include "cvos/cyclictrain.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cvos/dataio.hpp"

namespace cvos {

void TrainConfig::validate() const {
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + what);
  };
  positive(epochs >= 0, "epochs must be >= 0");
  positive(batch_size >= 1, "batch_size must be >= 1");
  positive(lr > 0.0, "lr must be > 0");
  positive(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0,1)");
  positive(adam_eps > 0.0, "adam_eps must be > 0");
  positive(frames_per_clip >= 2, "frames_per_clip must be >= 2");
  positive(interval_step >= 1, "interval_step must be >= 1");
  positive(interval_epoch_period >= 1, "interval_epoch_period must be >= 1");
  positive(forward_weight >= 0.0 && cycle_weight >= 0.0, "loss weights must be >= 0");
  positive(mem_stride >= 1, "mem_stride must be >= 1");
  positive(checkpoint_every >= 0, "checkpoint_every must be >= 0");
}

int TrainConfig::max_interval(int epoch) const {
  return interval_step * (1 + epoch / interval_epoch_period);
}

void ClipSample::validate() const {
  if (frames.size() < 2 || frames.size() != gts.size()) {
    throw std::invalid_argument("ClipSample: need >= 2 frames with one mask each");
  }
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].timestamp <= frames[i - 1].timestamp) {
      throw std::invalid_argument("ClipSample: timestamps must increase");
    }
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (gts[i].height != frames[i].height || gts[i].width != frames[i].width) {
      throw std::invalid_argument("ClipSample: mask/frame resolution mismatch");
    }
  }
}

ClipSample sample_clip(const VideoClip& video, int epoch, const TrainConfig& cfg,
                       std::mt19937_64& rng) {
  const int n = cfg.frames_per_clip;
  const int len = static_cast<int>(video.length());
  if (len < n) {
    throw std::invalid_argument("sample_clip: video '" + video.name + "' has " + std::to_string(len) +
                                " frames, need " + std::to_string(n));
  }
  const int gap_max = std::max(1, std::min(cfg.max_interval(epoch), len - 1));
  std::uniform_int_distribution<int> gap_dist(1, gap_max);
  std::vector<int> gaps(static_cast<std::size_t>(n - 1), 1);
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (int& g : gaps) g = gap_dist(rng);
    if (std::accumulate(gaps.begin(), gaps.end(), 0) <= len - 1) break;
    std::fill(gaps.begin(), gaps.end(), 1);
  }
  const int span = std::accumulate(gaps.begin(), gaps.end(), 0);
  int pos = std::uniform_int_distribution<int>(0, len - 1 - span)(rng);

  ClipSample clip;
  clip.indices.push_back(pos);
  for (int g : gaps) clip.indices.push_back(pos += g);
  for (int i : clip.indices) {
    if (!video.gt[static_cast<std::size_t>(i)]) {
      throw std::invalid_argument("sample_clip: frame " + std::to_string(i + 1) + " of '" + video.name +
                                  "' has no annotation");
    }
  }

  const MultiObjectMask& first = *video.gt[static_cast<std::size_t>(clip.indices.front())];
  std::vector<int> visible;
  for (int id : video.object_ids) {
    const Mask* m = first.find(id);
    if (m && std::any_of(m->values.begin(), m->values.end(), [](double v) { return v >= 0.5; })) {
      visible.push_back(id);
    }
  }
  if (visible.empty()) visible.assign(video.object_ids.begin(), video.object_ids.end());
  if (visible.empty()) throw std::invalid_argument("sample_clip: video '" + video.name + "' has no objects");
  clip.object_id = visible[std::uniform_int_distribution<std::size_t>(0, visible.size() - 1)(rng)];

  for (int i : clip.indices) {
    const Frame& f = video.frames[static_cast<std::size_t>(i)];
    clip.frames.push_back(f);
    const Mask* m = video.gt[static_cast<std::size_t>(i)]->find(clip.object_id);
    clip.gts.push_back(m ? *m : Mask(f.height, f.width, 0.0, clip.object_id));
  }
  return clip;
}

AugmentParams AugmentParams::identity(int h, int w) {
  AugmentParams p;
  p.crop_h = h;
  p.crop_w = w;
  return p;
}

AugmentParams draw_augment_params(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  AugmentParams p;
  p.flip = unit(rng) < 0.5;
  p.noise_sigma = range(0.0, 0.02);
  p.contrast = range(0.8, 1.2);
  const double s = range(0.8, 1.0);
  p.crop_h = s * h;
  p.crop_w = s * w;
  p.crop_y = range(0.0, h - p.crop_h);
  p.crop_x = range(0.0, w - p.crop_w);
  const double deg = std::numbers::pi / 180.0;
  const double rot = range(-15.0, 15.0) * deg;
  const double shear = range(-10.0, 10.0) * deg;
  const double scale = range(0.9, 1.1);
  // rotation * shear(x by y) * uniform scale
  const double c = std::cos(rot), sn = std::sin(rot), k = std::tan(shear);
  p.affine = {scale * c, scale * (c * k - sn), scale * sn, scale * (sn * k + c)};
  p.noise_seed = rng();
  return p;
}

namespace {

double sample_bilinear(const Frame& f, int c, double sy, double sx) {
  sy = std::clamp(sy, 0.0, f.height - 1.0);
  sx = std::clamp(sx, 0.0, f.width - 1.0);
  const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
  const int y1 = std::min(y0 + 1, f.height - 1), x1 = std::min(x0 + 1, f.width - 1);
  const double ty = sy - y0, tx = sx - x0;
  const double top = f.at(c, y0, x0) + (f.at(c, y0, x1) - f.at(c, y0, x0)) * tx;
  const double bot = f.at(c, y1, x0) + (f.at(c, y1, x1) - f.at(c, y1, x0)) * tx;
  return top + (bot - top) * ty;
}

std::size_t mask_area(const Mask& m) {
  return static_cast<std::size_t>(
      std::count_if(m.values.begin(), m.values.end(), [](double v) { return v >= 0.5; }));
}

}  // namespace

ClipSample apply_augment(const ClipSample& clip, const AugmentParams& params) {
  clip.validate();
  const int h = clip.frames[0].height, w = clip.frames[0].width;
  const auto& a = params.affine;
  const double det = a[0] * a[3] - a[1] * a[2];
  if (std::abs(det) < 1e-9) throw std::invalid_argument("apply_augment: singular affine");
  const std::array<double, 4> inv{a[3] / det, -a[1] / det, -a[2] / det, a[0] / det};
  const double cy = h / 2.0, cx = w / 2.0;

  // Source coordinates (pixel-centre convention) for every output pixel.
  std::vector<double> src_y(static_cast<std::size_t>(h) * w), src_x(src_y.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double px = params.flip ? w - (x + 0.5) : x + 0.5;
      const double py = y + 0.5;
      const double dx = px - cx, dy = py - cy;
      const double u = cx + (inv[0] * dx + inv[1] * dy);
      const double v = cy + (inv[2] * dx + inv[3] * dy);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      src_x[i] = params.crop_x + u * (params.crop_w / w);
      src_y[i] = params.crop_y + v * (params.crop_h / h);
    }
  }

  ClipSample out = clip;
  out.augment = params;
  for (std::size_t k = 0; k < clip.frames.size(); ++k) {
    const Frame& f = clip.frames[k];
    Frame& g = out.frames[k];
    std::mt19937_64 noise_rng(derive_seed(params.noise_seed, k));
    std::normal_distribution<double> noise(0.0, params.noise_sigma > 0.0 ? params.noise_sigma : 1.0);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          double v = sample_bilinear(f, c, src_y[i] - 0.5, src_x[i] - 0.5);
          if (params.contrast != 1.0) v = 0.5 + (v - 0.5) * params.contrast;
          if (params.noise_sigma > 0.0) v += noise(noise_rng);
          g.at(c, y, x) = std::clamp(v, 0.0, 1.0);
        }
      }
    }
    const Mask& m = clip.gts[k];
    Mask& n = out.gts[k];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double sy = std::floor(src_y[i]), sx = std::floor(src_x[i]);
        double v = 0.0;
        if (sy >= 0 && sy < h && sx >= 0 && sx < w) v = m.at(static_cast<int>(sy), static_cast<int>(sx));
        n.at(y, x) = v >= 0.5 ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

ClipSample augment_clip(const ClipSample& clip, std::mt19937_64& rng) {
  const int h = clip.frames[0].height, w = clip.frames[0].width;
  const std::size_t before = mask_area(clip.gts[0]);
  for (int attempt = 0; attempt < 10; ++attempt) {
    ClipSample out = apply_augment(clip, draw_augment_params(h, w, rng));
    if (before == 0 || mask_area(out.gts[0]) * 10 >= before) return out;
  }
  return apply_augment(clip, AugmentParams::identity(h, w));
}

StepReport clip_gradients(const SegModel& model, const ClipSample& clip, const TrainConfig& cfg,
                          const LossConfig& loss_cfg, std::vector<std::vector<double>>& grads) {
  clip.validate();
  const int n = static_cast<int>(clip.frames.size());
  SegGraph graph(model, true);

  std::vector<std::optional<QueryFeatures>> queries(static_cast<std::size_t>(n));
  auto query = [&](int t) -> const QueryFeatures& {
    auto& q = queries[static_cast<std::size_t>(t)];
    if (!q) q = graph.encode_query(clip.frames[static_cast<std::size_t>(t)]);
    return *q;
  };
  std::vector<ag::Var> pred(static_cast<std::size_t>(n));
  pred[0] = mask_constant(clip.gts[0]);
  std::vector<std::optional<MemoryBank>> entries(static_cast<std::size_t>(n));
  auto entry = [&](int s) -> const MemoryBank& {
    auto& e = entries[static_cast<std::size_t>(s)];
    if (!e) e = graph.encode_entry(clip.frames[static_cast<std::size_t>(s)], pred[static_cast<std::size_t>(s)], &query(s));
    return *e;
  };

  std::vector<ag::Var> terms;
  std::vector<double> weights;
  StepReport report;
  for (int t = 1; t < n; ++t) {
    std::vector<MemoryBank> banks;
    for (int s : reference_indices(cfg.strategy, t, cfg.mem_stride)) banks.push_back(entry(s));
    pred[static_cast<std::size_t>(t)] = graph.decode(query(t), concat_memory(banks));
    ag::Var l = graph::combined_loss(pred[static_cast<std::size_t>(t)], clip.gts[static_cast<std::size_t>(t)], loss_cfg);
    report.forward += l.value().data[0];
    if (cfg.forward_weight > 0.0) {
      terms.push_back(l);
      weights.push_back(cfg.forward_weight);
    }
  }
  if (cfg.cycle_weight > 0.0) {
    for (int t = 1; t < n; ++t) {
      ag::Var back = graph.decode(query(0), entry(t));
      ag::Var l = graph::combined_loss(back, clip.gts[0], loss_cfg);
      report.cycle += l.value().data[0];
      terms.push_back(l);
      weights.push_back(cfg.cycle_weight);
    }
  }
  report.total = cfg.forward_weight * report.forward + cfg.cycle_weight * report.cycle;
  if (!std::isfinite(report.total)) {
    std::ostringstream msg;
    msg << "train step: non-finite loss (forward=" << report.forward << ", cycle=" << report.cycle
        << ") on clip frames";
    for (int i : clip.indices) msg << " " << i + 1;
    throw NumericError(msg.str());
  }

  const auto& params = model.params();
  if (grads.size() != params.size()) {
    grads.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) grads[i].assign(params[i].value.size(), 0.0);
  }
  if (terms.empty()) return report;
  ag::Var total = ag::weighted_sum(terms, weights);
  ag::backward(total);
  const auto g = graph.param_grads();
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < g[i].size(); ++j) grads[i][j] += g[i][j];
  }
  return report;
}

Adam::Adam(const SegModel& model, const TrainConfig& cfg)
    : lr_(cfg.lr), b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.adam_eps) {
  for (const Param& p : model.params()) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step(SegModel& model, const std::vector<std::vector<double>>& grads) {
  auto& params = model.params();
  if (grads.size() != params.size()) throw std::invalid_argument("Adam::step: gradient layout mismatch");
  for (const auto& g : grads) {
    for (double v : g) {
      if (!std::isfinite(v)) throw NumericError("Adam::step: non-finite gradient");
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].value;
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grads[i][j];
      m_[i][j] = b1_ * m_[i][j] + (1.0 - b1_) * g;
      v_[i][j] = b2_ * v_[i][j] + (1.0 - b2_) * g * g;
      const double upd = lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
      value[j] = static_cast<float>(value[j] - upd);
    }
  }
}

StepReport train_step(SegModel& model, Adam& opt, const ClipSample& clip, const TrainConfig& cfg,
                      const LossConfig& loss_cfg) {
  std::vector<std::vector<double>> grads;
  StepReport r = clip_gradients(model, clip, cfg, loss_cfg, grads);
  opt.step(model, grads);
  return r;
}

TrainResult train(SegModel model, const std::vector<VideoClip>& dataset, const TrainConfig& cfg,
                  const LossConfig& loss_cfg, const TrainHooks& hooks) {
  cfg.validate();
  loss_cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x747261696eULL));
  Adam opt(model, cfg);
  TrainResult result;

  std::vector<std::vector<double>> grads;
  int pending = 0;
  auto flush = [&] {
    if (pending == 0) return;
    for (auto& g : grads) {
      for (double& v : g) v /= pending;
    }
    opt.step(model, grads);
    for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
    pending = 0;
  };

  std::vector<std::size_t> order(dataset.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    for (std::size_t vi : order) {
      ClipSample clip = sample_clip(dataset[vi], epoch, cfg, rng);
      if (cfg.augment) clip = augment_clip(clip, rng);
      const StepReport r = clip_gradients(model, clip, cfg, loss_cfg, grads);
      rec.loss += r.total;
      rec.forward += r.forward;
      rec.cycle += r.cycle;
      ++rec.clips;
      if (++pending == cfg.batch_size) flush();
    }
    flush();
    rec.loss /= rec.clips;
    rec.forward /= rec.clips;
    rec.cycle /= rec.clips;
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.checkpoint_dir && cfg.checkpoint_every > 0 && rec.epoch % cfg.checkpoint_every == 0) {
      std::ostringstream name;
      name << "epoch_" << std::setw(4) << std::setfill('0') << rec.epoch;
      save_checkpoint(model, CheckpointMeta{rec.epoch, cfg.seed, hooks.config_hash},
                      *hooks.checkpoint_dir / name.str());
    }
  }
  result.model = std::move(model);
  return result;
}

}  // namespace cvos
