#include "tfd/cwt.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "tfd/error.hpp"

namespace tfd::cwt {

double morlet(double t) { return std::exp(-0.5 * t * t) * std::cos(5.0 * t); }

ScaleGrid scale_grid_default() {
  ScaleGrid grid;
  grid.scales.resize(kImageSize);
  for (int64_t i = 0; i < kImageSize; ++i) grid.scales[static_cast<size_t>(i)] = static_cast<double>(i + 1);
  return grid;
}

std::vector<double> positions_default(int64_t n_samples, int64_t n_positions) {
  require(n_samples > 0 && n_positions > 0, ErrorKind::Invalid,
          "positions_default: sample and position counts must be positive");
  std::vector<double> b(static_cast<size_t>(n_positions));
  const double w = static_cast<double>(n_samples) / static_cast<double>(n_positions);
  for (int64_t j = 0; j < n_positions; ++j)
    b[static_cast<size_t>(j)] = (static_cast<double>(j) + 0.5) * w - 0.5;
  return b;
}

namespace {

void check_grid(const ScaleGrid& grid) {
  require(!grid.scales.empty(), ErrorKind::Invalid, "cwt: empty scale grid");
  double prev = 0.0;
  for (double a : grid.scales) {
    require(std::isfinite(a) && a > prev, ErrorKind::Invalid,
            "cwt: scales must be positive and strictly increasing");
    prev = a;
  }
}

double prefactor_value(Prefactor p, double a) {
  return p == Prefactor::kReciprocal ? 1.0 / a : 1.0 / std::sqrt(a);
}

}  // namespace

Tensor<double> cwt(const std::vector<double>& signal, const ScaleGrid& grid,
                   const std::vector<double>& positions, Prefactor prefactor,
                   double dt) {
  check_grid(grid);
  require(!signal.empty(), ErrorKind::Invalid, "cwt: empty signal");
  require(dt > 0, ErrorKind::Invalid, "cwt: dt must be positive");
  for (double v : signal)
    require(std::isfinite(v), ErrorKind::Invalid, "cwt: non-finite sample in signal");
  const double t_max = static_cast<double>(signal.size() - 1) * dt;
  for (double b : positions)
    require(b >= 0.0 && b <= t_max, ErrorKind::Invalid,
            "cwt: position outside signal support [0, " + std::to_string(t_max) + "]");

  const int64_t n_scales = static_cast<int64_t>(grid.scales.size());
  const int64_t n_pos = static_cast<int64_t>(positions.size());
  Tensor<double> c({n_scales, n_pos});
  for (int64_t i = 0; i < n_scales; ++i) {
    const double a = grid.scales[static_cast<size_t>(i)];
    const double pref = prefactor_value(prefactor, a);
    for (int64_t j = 0; j < n_pos; ++j) {
      const double b = positions[static_cast<size_t>(j)];
      double s = 0.0;
      for (size_t n = 0; n < signal.size(); ++n) {
        const double t = static_cast<double>(n) * dt;
        s += signal[n] * pref * morlet((t - b) / a) * dt;
      }
      c.at(i, j) = s;
    }
  }
  return c;
}

ScalogramRenderer::ScalogramRenderer(int64_t n_samples, int64_t image_size,
                                     Prefactor prefactor)
    : n_samples_(n_samples), image_size_(image_size),
      kernel_({image_size * image_size, n_samples}) {
  require(n_samples > 0 && image_size > 0, ErrorKind::Invalid,
          "scalogram renderer: sizes must be positive");
  ScaleGrid grid;
  grid.scales.resize(static_cast<size_t>(image_size));
  for (int64_t i = 0; i < image_size; ++i)
    grid.scales[static_cast<size_t>(i)] = static_cast<double>(i + 1);
  const std::vector<double> pos = positions_default(n_samples, image_size);
  for (int64_t i = 0; i < image_size; ++i) {
    const double a = grid.scales[static_cast<size_t>(i)];
    const double pref = prefactor_value(prefactor, a);
    for (int64_t j = 0; j < image_size; ++j) {
      const double b = pos[static_cast<size_t>(j)];
      double* row = kernel_.data() + (i * image_size + j) * n_samples;
      for (int64_t n = 0; n < n_samples; ++n)
        row[n] = pref * morlet((static_cast<double>(n) - b) / a);
    }
  }
}

Tensor<double> ScalogramRenderer::render_normalized(const std::vector<double>& signal,
                                                    double* raw_min,
                                                    double* raw_max) const {
  require(static_cast<int64_t>(signal.size()) == n_samples_, ErrorKind::Invalid,
          "scalogram renderer: expected " + std::to_string(n_samples_) +
              " samples, got " + std::to_string(signal.size()));
  for (double v : signal)
    require(std::isfinite(v), ErrorKind::Invalid, "scalogram renderer: non-finite sample");

  const int64_t npix = image_size_ * image_size_;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      km(kernel_.data(), npix, n_samples_);
  Eigen::Map<const Eigen::VectorXd> fm(signal.data(), n_samples_);
  Eigen::VectorXd coeffs = km * fm;

  Tensor<double> pixels({image_size_, image_size_});
  double lo = std::abs(coeffs[0]), hi = lo;
  for (int64_t i = 1; i < npix; ++i) {
    const double m = std::abs(coeffs[i]);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  if (raw_min) *raw_min = lo;
  if (raw_max) *raw_max = hi;
  if (hi == lo) return pixels;  // zero-initialized
  const double inv = 1.0 / (hi - lo);
  for (int64_t i = 0; i < npix; ++i) pixels[i] = (std::abs(coeffs[i]) - lo) * inv;
  return pixels;
}

Scalogram ScalogramRenderer::render(const std::vector<double>& signal) const {
  Scalogram out;
  Tensor<double> exact = render_normalized(signal, &out.raw_min, &out.raw_max);
  out.pixels = cast_tensor<float>(exact);
  return out;
}

void write_pgm(const std::string& path, const Tensor<float>& pixels) {
  require(pixels.rank() == 2, ErrorKind::Invalid, "write_pgm: rank-2 image required");
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "write_pgm: cannot open '" + path + "'");
  f << "P5\n" << pixels.dim(1) << " " << pixels.dim(0) << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(pixels.dim(1)));
  for (int64_t i = 0; i < pixels.dim(0); ++i) {
    for (int64_t j = 0; j < pixels.dim(1); ++j) {
      const float v = std::min(1.0f, std::max(0.0f, pixels.at(i, j)));
      row[static_cast<size_t>(j)] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  require(f.good(), ErrorKind::Io, "write_pgm: write failed for '" + path + "'");
}

}  // namespace tfd::cwt
