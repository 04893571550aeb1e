#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace padkit {

/// Height x width x channels grid of reals, stored row-major with channels
/// interleaved. Image-producing operations keep values in [0,1]; raw filter
/// responses reuse the type without that guarantee.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
  ImageGrid(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return values_.size(); }

  double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return values_[(y * width_ + x) * channels_ + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return values_[(y * width_ + x) * channels_ + c];
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  /// One channel as a contiguous height x width plane.
  std::vector<double> plane(std::size_t c) const;
  void set_plane(std::size_t c, std::span<const double> plane);

  bool same_shape(const ImageGrid& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  /// Throws ValidationError unless every value is finite and in [0,1].
  void validate_unit_range() const;

  bool operator==(const ImageGrid&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 1;
  std::vector<double> values_;
};

enum class Interp { nearest, bilinear, area, lanczos };

const char* to_string(Interp interp);

/// Source rectangle in pixel units; edges may be fractional.
struct PixelRect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;
};

/// Resamples the whole image. Area is exact box averaging of the pixel
/// footprint; lanczos is the 3-lobe windowed sinc, widened when shrinking.
/// Results are clamped to [0,1].
ImageGrid resize(const ImageGrid& img, std::size_t out_height, std::size_t out_width,
                 Interp interp);

/// Area-resamples a sub-rectangle. The output mean equals the integral mean
/// of the source over the rectangle.
ImageGrid resize_region(const ImageGrid& img, const PixelRect& rect, std::size_t out_height,
                        std::size_t out_width);

ImageGrid flip_horizontal(const ImageGrid& img);

/// Centers the image on a zero canvas of the given size.
ImageGrid pad_center(const ImageGrid& img, std::size_t height, std::size_t width);

/// 8-bit grayscale/RGB PNG; alpha is dropped.
ImageGrid load_png(const std::string& path);
void save_png(const std::string& path, const ImageGrid& img);

void to_json(nlohmann::json& j, const ImageGrid& img);
void from_json(const nlohmann::json& j, ImageGrid& img);

}  // namespace padkit
