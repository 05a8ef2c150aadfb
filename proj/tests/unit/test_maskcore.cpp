#include <doctest.h>

#include <random>

#include "../oracles.hpp"
#include "cvos/maskcore.hpp"

using namespace cvos;

TEST_CASE("soft_aggregate yields a per-pixel distribution") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int objects = 1; objects <= 3; ++objects) {
    std::vector<Mask> probs;
    for (int k = 0; k < objects; ++k) {
      Mask m(5, 7, 0.0, k + 1);
      for (double& v : m.values) v = u(rng);
      m.values[0] = 0.0;
      m.values[1] = 1.0;
      probs.push_back(m);
    }
    const MultiObjectMask agg = soft_aggregate(probs);
    for (std::size_t i = 0; i < agg.background.size(); ++i) {
      double s = agg.background.values[i];
      for (const Mask& m : agg.per_object) s += m.values[i];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("soft_aggregate keeps the ordering of single-object confidences") {
  Mask a(1, 2, std::vector<double>{0.9, 0.2}, 1), b(1, 2, std::vector<double>{0.3, 0.6}, 2);
  const auto agg = soft_aggregate(std::vector<Mask>{a, b});
  CHECK(agg.labels() == std::vector<int>{1, 2});
}

TEST_CASE("soft_aggregate rejects duplicate ids and shape mismatches") {
  CHECK_THROWS(soft_aggregate(std::vector<Mask>{Mask(2, 2, 0.5, 1), Mask(2, 2, 0.5, 1)}));
  CHECK_THROWS(soft_aggregate(std::vector<Mask>{Mask(2, 2, 0.5, 1), Mask(2, 3, 0.5, 2)}));
  CHECK_THROWS(soft_aggregate(std::vector<Mask>{}));
}

TEST_CASE("jaccard matches pixel-set counting") {
  std::mt19937_64 rng(12);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> a(36), b(36);
    for (auto& v : a) v = coin(rng);
    for (auto& v : b) v = coin(rng);
    CHECK(jaccard(oracle::to_mask(a, 6, 6), oracle::to_mask(b, 6, 6)) == oracle::jaccard(a, b));
  }
  CHECK(jaccard(Mask(3, 3, 0.0), Mask(3, 3, 0.0)) == 1.0);
}

TEST_CASE("binarize counts exactly one half as foreground") {
  const auto b = binarize(Mask(1, 3, std::vector<double>{0.4999, 0.5, 0.7}));
  CHECK(b == std::vector<std::uint8_t>{0, 1, 1});
}

TEST_CASE("contour_f equals exhaustive boundary matching") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = std::uniform_int_distribution<int>(3, 10)(rng);
    const int w = std::uniform_int_distribution<int>(3, 10)(rng);
    const int tol = std::uniform_int_distribution<int>(0, 2)(rng);
    const auto p = oracle::two_components(h, w, rng), g = oracle::two_components(h, w, rng);
    const double got = contour_f(oracle::to_mask(p, h, w), oracle::to_mask(g, h, w), tol);
    CHECK(std::abs(got - oracle::contour_f(p, g, h, w, tol)) <= 1e-9);
  }
}

TEST_CASE("contour_f edge cases") {
  const Mask empty(6, 6, 0.0), full(6, 6, 1.0);
  CHECK(contour_f(empty, empty, 1) == 1.0);
  CHECK(contour_f(full, full, 1) == 1.0);  // image border adds no boundary
  Mask square(6, 6, 0.0);
  for (int y = 1; y < 5; ++y)
    for (int x = 1; x < 5; ++x) square.at(y, x) = 1.0;
  CHECK(contour_f(square, empty, 1) == 0.0);
  CHECK(contour_f(square, square, 0) == 1.0);
  CHECK(default_boundary_tolerance(480, 854) == 8);
}

TEST_CASE("ReferenceSet capacity keeps the first entry") {
  ReferenceSet r;
  r.capacity = 2;
  for (int t = 1; t <= 4; ++t) r.push(Frame(8, 8, t), Mask(8, 8));
  REQUIRE(r.size() == 2);
  CHECK(r.entries[0].first.timestamp == 1);
  CHECK(r.entries[1].first.timestamp == 4);
}

TEST_CASE("labels round-trip through MultiObjectMask") {
  const std::vector<int> labels{0, 1, 2, 2, 0, 1};
  const auto m = MultiObjectMask::from_labels(2, 3, labels, {1, 2});
  CHECK(m.labels() == labels);
  CHECK(m.object_ids() == std::vector<int>{1, 2});
}

TEST_CASE("jf_mean averages and rejects mismatched lists") {
  const std::vector<double> j{0.5, 1.0}, f{0.0, 1.0};
  const JFReport r = jf_mean(j, f);
  CHECK(r.j == 0.75);
  CHECK(r.f == 0.5);
  CHECK(r.jf == 0.625);
  CHECK_THROWS(jf_mean(j, std::vector<double>{1.0}));
}
