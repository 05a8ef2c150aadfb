#include <doctest.h>

#include <random>

#include "../oracles.hpp"
#include "cvos/config.hpp"

using namespace cvos;

namespace {

SegHyper tiny() { return SegHyper{6, 8, 4, 5, 6}; }

struct Scene {
  Frame first, query;
  Mask gt;
};

Scene scene(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scene s{Frame(h, w, 1), Frame(h, w, 2), Mask(h, w, 0.0)};
  for (double& v : s.first.pixels) v = u(rng);
  for (double& v : s.query.pixels) v = u(rng);
  for (int y = h / 4; y < h / 2 + 1; ++y)
    for (int x = w / 4; x < w / 2 + 1; ++x) s.gt.at(y, x) = 1.0;
  return s;
}

VideoClip small_video(std::uint64_t seed, int frames = 7) {
  SynthConfig c;
  c.n_videos = 1;
  c.frames_per_video = frames;
  c.height = 32;
  c.width = 40;
  c.seed = seed;
  return gen_synthetic_video(c, 0);
}

}  // namespace

TEST_CASE("reconstruction objective gradient matches finite differences") {
  const SegModel model(tiny(), 7);
  const Scene s = scene(8, 8, 1);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (double lambda : {0.0, 0.75}) {
    Mask cand(8, 8);
    for (double& v : cand.values) v = u(rng);
    ReconstructionProblem prob(model, s.query, s.first, s.gt, lambda, LossConfig{});
    const auto ev = prob.evaluate(cand, true);
    CHECK(ev.value == doctest::Approx(reconstruction_objective(model, s.query, cand, s.first, s.gt, lambda)));
    auto f = [&](const std::vector<double>& v) {
      return reconstruction_objective(model, s.query, Mask(8, 8, v), s.first, s.gt, lambda);
    };
    CHECK(oracle::rel_error(ev.grad.values, oracle::central_diff(f, cand.values, 1e-6)) < 1e-3);
  }
}

TEST_CASE("correct_mask with zero steps or zero step size is the identity") {
  const SegModel model(tiny(), 8);
  const Scene s = scene(16, 16, 3);
  const Mask init(16, 16, 0.3);
  CorrectionConfig cfg;
  cfg.n_iters = 0;
  auto r = correct_mask(model, s.query, init, s.first, s.gt, cfg);
  CHECK(r.mask.values == init.values);
  CHECK(r.trajectory.size() == 1);
  cfg.n_iters = 3;
  cfg.alpha = 0.0;
  r = correct_mask(model, s.query, init, s.first, s.gt, cfg);
  CHECK(r.mask.values == init.values);
  CHECK(r.trajectory.size() == 4);
}

TEST_CASE("small steps descend the objective and clamping keeps the unit interval") {
  const SegModel model(tiny(), 9);
  const Scene s = scene(16, 16, 4);
  CorrectionConfig cfg;
  cfg.alpha = 0.5;
  cfg.n_iters = 5;
  const auto r = correct_mask(model, s.query, Mask(16, 16, 0.5), s.first, s.gt, cfg);
  REQUIRE(r.trajectory.size() == 6);
  for (std::size_t k = 1; k < r.trajectory.size(); ++k) CHECK(r.trajectory[k] <= r.trajectory[k - 1] + 1e-12);
  cfg.alpha = 1e6;
  const auto big = correct_mask(model, s.query, Mask(16, 16, 0.5), s.first, s.gt, cfg);
  for (double v : big.mask.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("run_inference keeps the annotation and corrects every K-th frame") {
  const SegModel model(tiny(), 10);
  const VideoClip v = small_video(5, 11);
  InferenceConfig ic;
  ic.correction.n_iters = 2;
  ic.correction.every_k = 5;
  const auto r = run_inference(model, v, *v.gt[0], ic);
  REQUIRE(r.masks.size() == v.length());
  CHECK(r.masks[0].labels() == v.gt[0]->labels());
  std::set<int> frames;
  for (const auto& c : r.corrections) frames.insert(c.frame);
  CHECK(frames == std::set<int>{5, 10});
  CHECK(r.corrections.size() == 2 * v.object_ids.size());

  ic.gc = false;
  const auto plain = run_inference(model, v, *v.gt[0], ic);
  CHECK(plain.corrections.empty());
  CHECK(plain.net_evaluations < r.net_evaluations);
}

TEST_CASE("inference is deterministic") {
  const SegModel model(tiny(), 11);
  const VideoClip v = small_video(6);
  InferenceConfig ic;
  ic.correction.n_iters = 1;
  const auto a = run_inference(model, v, *v.gt[0], ic), b = run_inference(model, v, *v.gt[0], ic);
  for (std::size_t t = 0; t < a.masks.size(); ++t) {
    for (std::size_t k = 0; k < a.masks[t].per_object.size(); ++k) {
      CHECK(a.masks[t].per_object[k].values == b.masks[t].per_object[k].values);
    }
  }
}

TEST_CASE("score_sequence on the ground truth is perfect") {
  const VideoClip v = small_video(7);
  std::vector<MultiObjectMask> pred;
  for (const auto& g : v.gt) pred.push_back(*g);
  const auto scores = score_sequence(v, pred);
  REQUIRE(scores.size() == v.object_ids.size());
  for (const auto& s : scores) {
    CHECK(s.j == 1.0);
    CHECK(s.f == 1.0);
    CHECK(s.frames == static_cast<int>(v.length()) - 1);
  }
  CHECK(summarize(scores).jf == 1.0);
}

TEST_CASE("correction config validation") {
  CorrectionConfig c;
  c.n_iters = -1;
  CHECK_THROWS(c.validate());
  c = {};
  c.every_k = 0;
  CHECK_THROWS(c.validate());
}
