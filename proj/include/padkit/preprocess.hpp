#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "padkit/image.hpp"

namespace padkit {

using Rng = std::mt19937_64;

/// 2-D spectrum of one image plane. `centered` means the DC bin has been
/// moved to (height/2, width/2).
struct FrequencySpectrum {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::complex<double>> bins;
  bool centered = false;
};

FrequencySpectrum forward_fft(std::span<const double> plane, std::size_t height, std::size_t width);
/// Unnormalized forward, 1/(h*w) inverse. Input must not be centered.
std::vector<std::complex<double>> inverse_fft(const FrequencySpectrum& spectrum);
FrequencySpectrum center_spectrum(FrequencySpectrum spectrum);
FrequencySpectrum uncenter_spectrum(FrequencySpectrum spectrum);

/// Difference of two unit-peak Gaussians in frequency-bin units, laid out for
/// a centered spectrum: K = G(sigma_low) - G(sigma_high), G = exp(-D^2 / 2 sigma^2).
struct BandPassKernel {
  double sigma_low = 40.0;
  double sigma_high = 10.0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> weights;
};

/// Accepts sigma_low == sigma_high (an all-zero kernel).
BandPassKernel make_band_pass_kernel(std::size_t height, std::size_t width, double sigma_low,
                                     double sigma_high);

/// FFT, center, multiply by the kernel, uncenter, inverse FFT, real part;
/// per channel. Values are the raw filter response, not rescaled.
ImageGrid band_pass_response(const ImageGrid& img, double sigma_low, double sigma_high);

/// The band-pass image: the raw response affinely rescaled to [0,1] over the
/// whole image (all zeros when the response is flat). Requires
/// sigma_low > sigma_high > 0.
ImageGrid band_pass_image(const ImageGrid& img, double sigma_low = 40.0, double sigma_high = 10.0);

struct ZoomResult {
  ImageGrid image;
  double scale = 1.0;
  std::size_t reduced_height = 0;
  std::size_t reduced_width = 0;
  Interp down = Interp::area;
  Interp up = Interp::area;
};

inline constexpr std::size_t kEncoderSide = 224;
inline constexpr double kZoomMin = 0.20;
inline constexpr double kZoomMax = 0.75;

/// Simulates a lower-quality capture of the same face: shrink by a factor
/// drawn from [0.20, 0.75] with a random interpolation, then resize back to
/// 224x224 with an independently drawn interpolation. Non-square inputs are
/// center-padded to a square after the shrink.
ZoomResult random_zoom_in_out(const ImageGrid& img, Rng& rng);

/// Fractional boxes (x0, y0, x1, y1) on the 256x256 grid.
struct PatchBox {
  const char* name;
  double x0, y0, x1, y1;
};

inline constexpr std::size_t kPatchInputSide = 256;
inline constexpr std::array<PatchBox, 4> kPatchBoxes{{
    {"face", 0.125, 0.125, 0.875, 0.875},
    {"eyes", 0.15, 0.25, 0.85, 0.50},
    {"nose", 0.30, 0.40, 0.70, 0.75},
    {"chin", 0.20, 0.70, 0.80, 1.00},
}};

struct FacePatches {
  ImageGrid original;
  ImageGrid face;
  ImageGrid eyes;
  ImageGrid nose;
  ImageGrid chin;
};

/// Input must be exactly 256x256. All five outputs are 224x224, area-resampled.
FacePatches crop_face_patches(const ImageGrid& img);

double sample_beta(double a, double b, Rng& rng);

struct MixupResult {
  std::vector<double> x;
  std::vector<double> y;
  double lambda = 1.0;
};

/// x = lambda x1 + (1 - lambda) x2 and the same for y.
MixupResult mixup_with_lambda(std::span<const double> x1, std::span<const double> y1,
                              std::span<const double> x2, std::span<const double> y2,
                              double lambda);
/// lambda ~ Beta(alpha, alpha).
MixupResult mixup(std::span<const double> x1, std::span<const double> y1,
                  std::span<const double> x2, std::span<const double> y2, double alpha, Rng& rng);

/// (1 - epsilon) y + epsilon / K.
std::vector<double> label_smoothing(std::span<const double> y, double epsilon);

/// Normalized weighted mean of the original and flipped scores.
double tta_flip_average(double score_original, double score_flipped,
                        std::array<double, 2> weights = {0.5, 0.5});

}  // namespace padkit
