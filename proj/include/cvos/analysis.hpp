#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "cvos/gradcorrect.hpp"
#include "cvos/losses.hpp"
#include "cvos/maskcore.hpp"
#include "cvos/segnet.hpp"

namespace cvos {

struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major

  Grid() = default;
  Grid(int r, int c, double fill = 0.0)
      : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

struct ErfConfig {
  int m_iters = 50;
  std::optional<double> alpha;       // defaults to the correction alpha
  std::optional<int> target_frame;   // 0-based; unset means the first frame

  void validate() const;
};

struct ErfResult {
  Mask erf;  // max(final iterate, 0)
  std::vector<double> trajectory;
  bool stopped_early = false;
};

// Descends the reconstruction loss of (target frame, target mask) w.r.t. an
// initially empty reference mask paired with `ref_frame`, without clamping.
ErfResult cycle_erf(const SegModel& model, const Frame& ref_frame, const Frame& target_frame,
                    const Mask& target_gt, const ErfConfig& cfg, double default_alpha,
                    const LossConfig& loss_cfg = {});

// |FFT2| with the zero frequency moved to (rows/2, cols/2).
Grid fft2_magnitude(const Mask& m);

// Mean over pairs of |FFT2(out)| / (|FFT2(in)| + eps), DC-centred.
Grid freq_response(const std::vector<Mask>& inputs, const std::vector<Mask>& outputs, double eps = 1e-8);

// Spectral energy sum |F|^2 over bins whose Chebyshev-normalised frequency
// max(|ky|/(H/2), |kx|/(W/2)) is at least `cutoff`.
double high_band_energy(const Mask& m, double cutoff = 0.75);

// Heat map with iso-lines, written as PNG.
void emit_contour_plot(const Grid& grid, const std::filesystem::path& path, int levels = 8);

// Plain-text matrix preceded by a "rows cols" header line.
void write_grid(const Grid& grid, const std::filesystem::path& path);
Grid read_grid(const std::filesystem::path& path);

}  // namespace cvos
