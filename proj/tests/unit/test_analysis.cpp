#include <doctest.h>

#include <filesystem>
#include <random>

#include "../oracles.hpp"
#include "cvos/analysis.hpp"
#include "cvos/image_io.hpp"

using namespace cvos;

namespace {

Mask random_mask(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mask m(h, w);
  for (double& v : m.values) v = u(rng);
  return m;
}

}  // namespace

TEST_CASE("fft2 magnitude matches a direct DFT") {
  std::mt19937_64 rng(41);
  for (auto [h, w] : {std::pair{8, 8}, std::pair{5, 6}, std::pair{7, 4}}) {
    const Mask m = random_mask(h, w, rng);
    const Grid g = fft2_magnitude(m);
    REQUIRE(g.rows == h);
    REQUIRE(g.cols == w);
    const auto ref = oracle::dft_magnitude_centred(m.values, h, w);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(g.values[i] - ref[i]) < 1e-9);
  }
}

TEST_CASE("freq_response of the identity map is one away from zero bins") {
  std::mt19937_64 rng(42);
  std::vector<Mask> in;
  for (int k = 0; k < 3; ++k) in.push_back(random_mask(8, 8, rng));
  const Grid r = freq_response(in, in);
  for (double v : r.values) CHECK(std::abs(v - 1.0) < 1e-6);
  CHECK_THROWS(freq_response(in, std::vector<Mask>{}));
}

TEST_CASE("high band energy") {
  CHECK(high_band_energy(Mask(8, 8, 0.7)) == doctest::Approx(0.0).epsilon(1e-12));
  Mask checker(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) checker.at(y, x) = (x + y) % 2;
  // All energy besides DC sits at the Nyquist corner: |F| = 32 there.
  CHECK(high_band_energy(checker) == doctest::Approx(32.0 * 32.0));
  Mask smooth(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) smooth.at(y, x) = x < 4 ? 0.0 : 1.0;
  CHECK(high_band_energy(checker) > high_band_energy(smooth));
}

TEST_CASE("grid files round-trip exactly") {
  std::mt19937_64 rng(43);
  Grid g(3, 4);
  for (double& v : g.values) v = std::uniform_real_distribution<double>(-1e3, 1e3)(rng);
  const auto path = std::filesystem::temp_directory_path() / "cvos_grid_test.txt";
  write_grid(g, path);
  const Grid back = read_grid(path);
  CHECK(back.rows == 3);
  CHECK(back.values == g.values);
  std::filesystem::remove(path);
}

TEST_CASE("contour plot is a readable PNG") {
  Grid g(10, 12);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 12; ++x) g.at(y, x) = y * x;
  const auto path = std::filesystem::temp_directory_path() / "cvos_plot_test.png";
  emit_contour_plot(g, path);
  const auto img = image::read_rgb(path);
  CHECK(std::max(img.height, img.width) >= 256);
  CHECK(img.height * 12 == img.width * 10);
  emit_contour_plot(Grid(4, 4, 1.0), path);  // flat grids are fine too
  std::filesystem::remove(path);
}

TEST_CASE("cycle ERF is nonnegative and vanishes at zero step size") {
  std::mt19937_64 rng(44);
  const SegModel model(SegHyper{6, 8, 4, 5, 6}, 3);
  Frame a(16, 16, 1), b(16, 16, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : a.pixels) v = u(rng);
  for (double& v : b.pixels) v = u(rng);
  Mask gt(16, 16);
  for (int y = 4; y < 10; ++y)
    for (int x = 4; x < 10; ++x) gt.at(y, x) = 1.0;
  ErfConfig cfg;
  cfg.m_iters = 5;
  const auto r = cycle_erf(model, a, b, gt, cfg, 50.0);
  for (double v : r.erf.values) CHECK(v >= 0.0);
  CHECK(r.trajectory.size() == 6);
  cfg.alpha = 0.0;
  const auto z = cycle_erf(model, a, b, gt, cfg, 50.0);
  for (double v : z.erf.values) CHECK(v == 0.0);
}
