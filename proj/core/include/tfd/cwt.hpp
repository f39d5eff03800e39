#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfd/tensor.hpp"

// Morlet continuous-wavelet-transform scalograms: a 288-sample daily series
// becomes a 64x64 magnitude image, min-max normalized per image.

namespace tfd::cwt {

inline constexpr int64_t kImageSize = 64;

// Real Morlet mother wavelet, exp(-t^2/2) * cos(5t).
double morlet(double t);

// Coefficient scaling convention. kReciprocal (1/a) is the default; the
// 1/sqrt(a) energy-normalized form is available behind a config switch.
enum class Prefactor { kReciprocal, kReciprocalSqrt };

struct ScaleGrid {
  std::vector<double> scales;  // strictly increasing, all > 0
};

// 64 linearly spaced scales: 1, 2, ..., 64.
ScaleGrid scale_grid_default();

// Translation positions centered on equal-width bins of the signal:
// b_j = (j + 0.5) * n_samples / n_positions - 0.5.
std::vector<double> positions_default(int64_t n_samples, int64_t n_positions);

// Direct Riemann-sum CWT: C[i][j] = sum_n f[n] * pref(a_i) * psi((n*dt - b_j)/a_i) * dt.
// Rows are scales (row 0 = scales[0]), columns are positions.
Tensor<double> cwt(const std::vector<double>& signal, const ScaleGrid& grid,
                   const std::vector<double>& positions,
                   Prefactor prefactor = Prefactor::kReciprocal, double dt = 1.0);

struct Scalogram {
  Tensor<float> pixels;  // [64, 64] in [0,1]; row 0 = smallest scale
  double raw_min = 0.0;  // pre-normalization magnitude extrema
  double raw_max = 0.0;
};

// Precomputes the full CWT evaluation matrix once so rendering a day is a
// single matrix-vector product.
class ScalogramRenderer {
 public:
  explicit ScalogramRenderer(int64_t n_samples = 288,
                             int64_t image_size = kImageSize,
                             Prefactor prefactor = Prefactor::kReciprocal);

  Scalogram render(const std::vector<double>& signal) const;

  // Full-precision variant of render(): the normalized magnitude image
  // before the float32 cast. render() is exactly the cast of this.
  Tensor<double> render_normalized(const std::vector<double>& signal,
                                   double* raw_min = nullptr,
                                   double* raw_max = nullptr) const;

  int64_t n_samples() const { return n_samples_; }
  int64_t image_size() const { return image_size_; }

 private:
  int64_t n_samples_;
  int64_t image_size_;
  Tensor<double> kernel_;  // [image_size^2, n_samples]
};

// 8-bit binary PGM (P5), pixel = round(v * 255).
void write_pgm(const std::string& path, const Tensor<float>& pixels);

}  // namespace tfd::cwt
