#include "padkit/preprocess.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "padkit/error.hpp"

namespace padkit {

namespace {

// FFTW's planner is not re-entrant; plan execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void run_dft(std::vector<std::complex<double>>& data, std::size_t height, std::size_t width,
             int sign) {
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), ptr, ptr, sign,
                            FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw Error("FFTW could not create a plan");
  fftw_execute(plan);
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plan);
}

FrequencySpectrum shift(FrequencySpectrum s, bool to_center) {
  std::vector<std::complex<double>> out(s.bins.size());
  const std::size_t h = s.height, w = s.width;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t ys = (y + h / 2) % h;
      const std::size_t xs = (x + w / 2) % w;
      if (to_center) {
        out[ys * w + xs] = s.bins[y * w + x];
      } else {
        out[y * w + x] = s.bins[ys * w + xs];
      }
    }
  }
  s.bins = std::move(out);
  s.centered = to_center;
  return s;
}

void check_sigmas(double sigma_low, double sigma_high, bool strict) {
  if (!(sigma_low > 0.0) || !(sigma_high > 0.0)) {
    throw ParameterError("band-pass sigmas must be positive");
  }
  if (strict ? !(sigma_low > sigma_high) : !(sigma_low >= sigma_high)) {
    throw ParameterError("band-pass needs sigma_low > sigma_high");
  }
}

}  // namespace

FrequencySpectrum forward_fft(std::span<const double> plane, std::size_t height,
                              std::size_t width) {
  if (plane.size() != height * width || plane.empty()) throw ParameterError("plane size mismatch");
  FrequencySpectrum s;
  s.height = height;
  s.width = width;
  s.bins.assign(plane.begin(), plane.end());
  run_dft(s.bins, height, width, FFTW_FORWARD);
  return s;
}

std::vector<std::complex<double>> inverse_fft(const FrequencySpectrum& spectrum) {
  if (spectrum.centered) throw ParameterError("uncenter the spectrum before inverting it");
  std::vector<std::complex<double>> data = spectrum.bins;
  run_dft(data, spectrum.height, spectrum.width, FFTW_BACKWARD);
  const double norm = 1.0 / static_cast<double>(spectrum.height * spectrum.width);
  for (auto& v : data) v *= norm;
  return data;
}

FrequencySpectrum center_spectrum(FrequencySpectrum spectrum) {
  if (spectrum.centered) return spectrum;
  return shift(std::move(spectrum), true);
}

FrequencySpectrum uncenter_spectrum(FrequencySpectrum spectrum) {
  if (!spectrum.centered) return spectrum;
  return shift(std::move(spectrum), false);
}

BandPassKernel make_band_pass_kernel(std::size_t height, std::size_t width, double sigma_low,
                                     double sigma_high) {
  check_sigmas(sigma_low, sigma_high, false);
  BandPassKernel k{sigma_low, sigma_high, height, width, std::vector<double>(height * width)};
  const double cy = static_cast<double>(height / 2);
  const double cx = static_cast<double>(width / 2);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double d2 = dy * dy + dx * dx;
      k.weights[y * width + x] = std::exp(-d2 / (2.0 * sigma_low * sigma_low)) -
                                 std::exp(-d2 / (2.0 * sigma_high * sigma_high));
    }
  }
  return k;
}

ImageGrid band_pass_response(const ImageGrid& img, double sigma_low, double sigma_high) {
  if (img.size() == 0) throw ParameterError("empty image");
  const BandPassKernel kernel =
      make_band_pass_kernel(img.height(), img.width(), sigma_low, sigma_high);
  ImageGrid out(img.height(), img.width(), img.channels());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    std::vector<double> plane = img.plane(c);
    // K(DC) = 0, so a constant offset never reaches the output. Removing one
    // exactly keeps flat inputs at exactly zero instead of FFT round-off.
    const double offset = plane.front();
    for (double& v : plane) v -= offset;
    FrequencySpectrum spectrum = center_spectrum(forward_fft(plane, img.height(), img.width()));
    for (std::size_t i = 0; i < spectrum.bins.size(); ++i) spectrum.bins[i] *= kernel.weights[i];
    const auto filtered = inverse_fft(uncenter_spectrum(std::move(spectrum)));
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = filtered[i].real();
    out.set_plane(c, plane);
  }
  return out;
}

ImageGrid band_pass_image(const ImageGrid& img, double sigma_low, double sigma_high) {
  check_sigmas(sigma_low, sigma_high, true);
  ImageGrid out = band_pass_response(img, sigma_low, sigma_high);
  const auto [lo, hi] = std::minmax_element(out.values().begin(), out.values().end());
  const double min = *lo;
  const double range = *hi - *lo;
  for (double& v : out.values()) v = range > 0.0 ? std::clamp((v - min) / range, 0.0, 1.0) : 0.0;
  return out;
}

ZoomResult random_zoom_in_out(const ImageGrid& img, Rng& rng) {
  if (img.height() < 8 || img.width() < 8) throw ParameterError("zoom input must be at least 8x8");
  std::uniform_real_distribution<double> factor(kZoomMin, kZoomMax);
  std::uniform_int_distribution<int> method(0, 3);

  ZoomResult r;
  r.scale = factor(rng);
  r.down = static_cast<Interp>(method(rng));
  r.up = static_cast<Interp>(method(rng));
  auto shrink = [&](std::size_t side) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(
                                        std::lround(r.scale * static_cast<double>(side))));
  };
  r.reduced_height = shrink(img.height());
  r.reduced_width = shrink(img.width());
  ImageGrid small = resize(img, r.reduced_height, r.reduced_width, r.down);
  if (r.reduced_height != r.reduced_width) {
    const std::size_t side = std::max(r.reduced_height, r.reduced_width);
    small = pad_center(small, side, side);
  }
  r.image = resize(small, kEncoderSide, kEncoderSide, r.up);
  return r;
}

FacePatches crop_face_patches(const ImageGrid& img) {
  if (img.height() != kPatchInputSide || img.width() != kPatchInputSide) {
    throw ParameterError("patch cropping expects a 256x256 input");
  }
  constexpr double side = static_cast<double>(kPatchInputSide);
  auto crop = [&](const PatchBox& b) {
    return resize_region(img, {b.x0 * side, b.y0 * side, b.x1 * side, b.y1 * side}, kEncoderSide,
                         kEncoderSide);
  };
  FacePatches p;
  p.original = resize_region(img, {0.0, 0.0, side, side}, kEncoderSide, kEncoderSide);
  p.face = crop(kPatchBoxes[0]);
  p.eyes = crop(kPatchBoxes[1]);
  p.nose = crop(kPatchBoxes[2]);
  p.chin = crop(kPatchBoxes[3]);
  return p;
}

double sample_beta(double a, double b, Rng& rng) {
  if (!(a > 0.0) || !(b > 0.0)) throw ParameterError("beta parameters must be positive");
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  while (true) {
    const double x = ga(rng);
    const double y = gb(rng);
    if (x + y > 0.0) return x / (x + y);
  }
}

MixupResult mixup_with_lambda(std::span<const double> x1, std::span<const double> y1,
                              std::span<const double> x2, std::span<const double> y2,
                              double lambda) {
  if (x1.size() != x2.size() || y1.size() != y2.size()) {
    throw ParameterError("mixup inputs must have matching shapes");
  }
  MixupResult r;
  r.lambda = lambda;
  r.x.resize(x1.size());
  r.y.resize(y1.size());
  for (std::size_t i = 0; i < x1.size(); ++i) r.x[i] = lambda * x1[i] + (1.0 - lambda) * x2[i];
  for (std::size_t i = 0; i < y1.size(); ++i) r.y[i] = lambda * y1[i] + (1.0 - lambda) * y2[i];
  return r;
}

MixupResult mixup(std::span<const double> x1, std::span<const double> y1,
                  std::span<const double> x2, std::span<const double> y2, double alpha, Rng& rng) {
  if (x1.size() != x2.size() || y1.size() != y2.size()) {
    throw ParameterError("mixup inputs must have matching shapes");
  }
  return mixup_with_lambda(x1, y1, x2, y2, sample_beta(alpha, alpha, rng));
}

std::vector<double> label_smoothing(std::span<const double> y, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ParameterError("epsilon must be in [0,1)");
  if (y.empty()) throw ParameterError("empty target");
  const double uniform = epsilon / static_cast<double>(y.size());
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (1.0 - epsilon) * y[i] + uniform;
  return out;
}

double tta_flip_average(double score_original, double score_flipped,
                        std::array<double, 2> weights) {
  if (!(weights[0] >= 0.0) || !(weights[1] >= 0.0) || !(weights[0] + weights[1] > 0.0)) {
    throw ParameterError("TTA weights must be nonnegative with a positive sum");
  }
  const double t = weights[1] / (weights[0] + weights[1]);
  return score_original + t * (score_flipped - score_original);
}

}  // namespace padkit
