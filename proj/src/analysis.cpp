#include "cvos/analysis.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "cvos/image_io.hpp"

namespace cvos {

void ErfConfig::validate() const {
  if (m_iters < 1) throw std::invalid_argument("ErfConfig: m_iters must be >= 1");
  if (alpha && !(*alpha >= 0.0)) throw std::invalid_argument("ErfConfig: alpha must be >= 0");
  if (target_frame && *target_frame < 0) throw std::invalid_argument("ErfConfig: target_frame must be >= 0");
}

ErfResult cycle_erf(const SegModel& model, const Frame& ref_frame, const Frame& target_frame,
                    const Mask& target_gt, const ErfConfig& cfg, double default_alpha,
                    const LossConfig& loss_cfg) {
  cfg.validate();
  CorrectionConfig cc;
  cc.alpha = cfg.alpha.value_or(default_alpha);
  cc.n_iters = cfg.m_iters;
  cc.lambda = 0.0;
  cc.clamp = ClampMode::none;
  const Mask empty(ref_frame.height, ref_frame.width, 0.0, target_gt.object_id, MaskKind::unconstrained);
  CorrectionResult c = correct_mask(model, ref_frame, empty, target_frame, target_gt, cc, loss_cfg);
  ErfResult out;
  out.erf = c.mask;
  out.erf.kind = MaskKind::unconstrained;
  for (double& v : out.erf.values) v = std::max(v, 0.0);
  out.trajectory = std::move(c.trajectory);
  out.stopped_early = c.stopped_early;
  return out;
}

namespace {

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};

// Unshifted complex spectrum of a real grid.
std::vector<std::complex<double>> fft2(const Mask& m) {
  const int h = m.height, w = m.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::unique_ptr<fftw_complex, FftwFree> in(fftw_alloc_complex(n));
  std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(n));
  fftw_plan plan = fftw_plan_dft_2d(h, w, in.get(), out.get(), FFTW_FORWARD, FFTW_ESTIMATE);
  for (std::size_t i = 0; i < n; ++i) {
    in.get()[i][0] = m.values[i];
    in.get()[i][1] = 0.0;
  }
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  std::vector<std::complex<double>> spec(n);
  for (std::size_t i = 0; i < n; ++i) spec[i] = {out.get()[i][0], out.get()[i][1]};
  return spec;
}

Grid shifted_magnitude(const std::vector<std::complex<double>>& spec, int h, int w) {
  Grid g(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      g.at((r + h / 2) % h, (c + w / 2) % w) = std::abs(spec[static_cast<std::size_t>(r) * w + c]);
    }
  }
  return g;
}

}  // namespace

Grid fft2_magnitude(const Mask& m) { return shifted_magnitude(fft2(m), m.height, m.width); }

Grid freq_response(const std::vector<Mask>& inputs, const std::vector<Mask>& outputs, double eps) {
  if (inputs.empty()) throw std::invalid_argument("freq_response: empty input list");
  if (inputs.size() != outputs.size()) throw std::invalid_argument("freq_response: list lengths differ");
  const int h = inputs[0].height, w = inputs[0].width;
  Grid acc(h, w);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (inputs[t].height != h || inputs[t].width != w || outputs[t].height != h || outputs[t].width != w) {
      throw std::invalid_argument("freq_response: mask shapes differ");
    }
    const Grid a = fft2_magnitude(inputs[t]);
    const Grid b = fft2_magnitude(outputs[t]);
    for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += b.values[i] / (a.values[i] + eps);
  }
  for (double& v : acc.values) v /= static_cast<double>(inputs.size());
  return acc;
}

double high_band_energy(const Mask& m, double cutoff) {
  const auto spec = fft2(m);
  const int h = m.height, w = m.width;
  double energy = 0.0;
  for (int r = 0; r < h; ++r) {
    const int ky = r <= h / 2 ? r : r - h;
    for (int c = 0; c < w; ++c) {
      const int kx = c <= w / 2 ? c : c - w;
      const double f = std::max(std::abs(ky) / (h / 2.0), std::abs(kx) / (w / 2.0));
      if (f >= cutoff) energy += std::norm(spec[static_cast<std::size_t>(r) * w + c]);
    }
  }
  return energy;
}

namespace {

std::array<double, 3> colormap(double t) {
  static constexpr std::array<std::array<double, 3>, 5> anchors{{{0.267, 0.005, 0.329},
                                                                  {0.229, 0.322, 0.546},
                                                                  {0.128, 0.567, 0.551},
                                                                  {0.369, 0.789, 0.383},
                                                                  {0.993, 0.906, 0.144}}};
  t = std::clamp(t, 0.0, 1.0) * (anchors.size() - 1);
  const std::size_t i = std::min(static_cast<std::size_t>(t), anchors.size() - 2);
  const double f = t - static_cast<double>(i);
  std::array<double, 3> rgb{};
  for (std::size_t c = 0; c < 3; ++c) rgb[c] = anchors[i][c] * (1 - f) + anchors[i + 1][c] * f;
  return rgb;
}

}  // namespace

void emit_contour_plot(const Grid& grid, const std::filesystem::path& path, int levels) {
  if (grid.rows < 1 || grid.cols < 1) throw std::invalid_argument("emit_contour_plot: empty grid");
  if (levels < 1) throw std::invalid_argument("emit_contour_plot: levels must be >= 1");
  for (double v : grid.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("emit_contour_plot: grid has non-finite values");
  }
  const auto [lo_it, hi_it] = std::minmax_element(grid.values.begin(), grid.values.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  const int scale = std::max(1, static_cast<int>(std::ceil(256.0 / std::max(grid.rows, grid.cols))));
  const int h = grid.rows * scale, w = grid.cols * scale;

  // Bilinear upsampling of the normalised field.
  std::vector<double> field(static_cast<std::size_t>(h) * w, 0.5);
  if (span > 1e-12) {
    for (int y = 0; y < h; ++y) {
      const double gy = std::clamp((y + 0.5) / scale - 0.5, 0.0, grid.rows - 1.0);
      const int y0 = static_cast<int>(gy), y1 = std::min(y0 + 1, grid.rows - 1);
      for (int x = 0; x < w; ++x) {
        const double gx = std::clamp((x + 0.5) / scale - 0.5, 0.0, grid.cols - 1.0);
        const int x0 = static_cast<int>(gx), x1 = std::min(x0 + 1, grid.cols - 1);
        const double ty = gy - y0, tx = gx - x0;
        const double v = (grid.at(y0, x0) * (1 - tx) + grid.at(y0, x1) * tx) * (1 - ty) +
                         (grid.at(y1, x0) * (1 - tx) + grid.at(y1, x1) * tx) * ty;
        field[static_cast<std::size_t>(y) * w + x] = (v - lo) / span;
      }
    }
  }
  auto band = [&](int y, int x) {
    return std::min(levels - 1, static_cast<int>(field[static_cast<std::size_t>(y) * w + x] * levels));
  };

  image::RgbImage img{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w * 3)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int b = band(y, x);
      const bool edge = (x + 1 < w && band(y, x + 1) != b) || (y + 1 < h && band(y + 1, x) != b);
      auto rgb = colormap(field[static_cast<std::size_t>(y) * w + x]);
      if (edge) rgb = {0.05, 0.05, 0.05};
      for (int c = 0; c < 3; ++c) {
        img.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(rgb[static_cast<std::size_t>(c)] * 255.0));
      }
    }
  }
  image::write_png_rgb(path, img);
}

void write_grid(const Grid& grid, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_grid: cannot open " + path.string());
  out << grid.rows << " " << grid.cols << "\n";
  char buf[32];
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", grid.at(r, c));
      out << (c ? " " : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_grid: write failed for " + path.string());
}

Grid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_grid: cannot open " + path.string());
  int rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) throw std::runtime_error("read_grid: bad header");
  Grid g(rows, cols);
  for (double& v : g.values) {
    if (!(in >> v)) throw std::runtime_error("read_grid: truncated matrix in " + path.string());
  }
  return g;
}

}  // namespace cvos
