#include "padkit/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "padkit/error.hpp"

namespace padkit {

ImageGrid::ImageGrid(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), channels_(channels),
      values_(height * width * channels, fill) {
  if (channels != 1 && channels != 3) throw ParameterError("images have 1 or 3 channels");
}

ImageGrid::ImageGrid(std::size_t height, std::size_t width, std::size_t channels,
                     std::vector<double> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
  if (channels != 1 && channels != 3) throw ParameterError("images have 1 or 3 channels");
  if (values_.size() != height * width * channels) {
    throw ParameterError("value count does not match image shape");
  }
}

std::vector<double> ImageGrid::plane(std::size_t c) const {
  std::vector<double> out(height_ * width_);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = values_[i * channels_ + c];
  return out;
}

void ImageGrid::set_plane(std::size_t c, std::span<const double> plane) {
  if (plane.size() != height_ * width_) throw ParameterError("plane size mismatch");
  for (std::size_t i = 0; i < plane.size(); ++i) values_[i * channels_ + c] = plane[i];
}

void ImageGrid::validate_unit_range() const {
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw ValidationError("image value outside [0,1]");
    }
  }
}

const char* to_string(Interp interp) {
  switch (interp) {
    case Interp::nearest: return "nearest";
    case Interp::bilinear: return "bilinear";
    case Interp::area: return "area";
    case Interp::lanczos: return "lanczos";
  }
  return "?";
}

namespace {

struct Tap {
  std::size_t index;
  double weight;
};
using Taps = std::vector<std::vector<Tap>>;

std::size_t clamp_index(long k, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(n) - 1));
}

// Each builder maps output index i onto the source span [start, start + extent).
Taps taps_nearest(std::size_t in, std::size_t out, double start, double extent) {
  const double scale = extent / static_cast<double>(out);
  Taps taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double pos = start + (static_cast<double>(i) + 0.5) * scale;
    taps[i].push_back({clamp_index(static_cast<long>(std::floor(pos)), in), 1.0});
  }
  return taps;
}

Taps taps_bilinear(std::size_t in, std::size_t out, double start, double extent) {
  const double scale = extent / static_cast<double>(out);
  Taps taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    double pos = start + (static_cast<double>(i) + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(i0);
    taps[i].push_back({i0, 1.0 - frac});
    if (frac > 0.0 && i0 + 1 < in) taps[i].push_back({i0 + 1, frac});
  }
  return taps;
}

Taps taps_area(std::size_t in, std::size_t out, double start, double extent) {
  const double scale = extent / static_cast<double>(out);
  Taps taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double a = start + static_cast<double>(i) * scale;
    const double b = start + static_cast<double>(i + 1) * scale;
    const long k0 = static_cast<long>(std::floor(a));
    const long k1 = static_cast<long>(std::ceil(b));
    for (long k = k0; k < k1; ++k) {
      const double overlap =
          std::min(b, static_cast<double>(k + 1)) - std::max(a, static_cast<double>(k));
      if (overlap > 0.0) taps[i].push_back({clamp_index(k, in), overlap / scale});
    }
  }
  return taps;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

Taps taps_lanczos(std::size_t in, std::size_t out, double start, double extent) {
  constexpr double kLobes = 3.0;
  const double scale = extent / static_cast<double>(out);
  const double widen = std::max(scale, 1.0);
  const double radius = kLobes * widen;
  Taps taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double center = start + (static_cast<double>(i) + 0.5) * scale - 0.5;
    const long k0 = static_cast<long>(std::ceil(center - radius));
    const long k1 = static_cast<long>(std::floor(center + radius));
    double total = 0.0;
    std::vector<Tap> row;
    for (long k = k0; k <= k1; ++k) {
      const double x = (static_cast<double>(k) - center) / widen;
      if (std::abs(x) >= kLobes) continue;
      const double w = sinc(x) * sinc(x / kLobes);
      row.push_back({clamp_index(k, in), w});
      total += w;
    }
    for (auto& t : row) t.weight /= total;
    taps[i] = std::move(row);
  }
  return taps;
}

Taps make_taps(Interp interp, std::size_t in, std::size_t out, double start, double extent) {
  switch (interp) {
    case Interp::nearest: return taps_nearest(in, out, start, extent);
    case Interp::bilinear: return taps_bilinear(in, out, start, extent);
    case Interp::area: return taps_area(in, out, start, extent);
    case Interp::lanczos: return taps_lanczos(in, out, start, extent);
  }
  return {};
}

ImageGrid apply_separable(const ImageGrid& img, const Taps& rows, const Taps& cols) {
  const std::size_t ch = img.channels();
  const std::size_t out_h = rows.size();
  const std::size_t out_w = cols.size();
  // Horizontal pass: H x out_w.
  std::vector<double> tmp(img.height() * out_w * ch, 0.0);
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      for (const Tap& t : cols[x]) {
        for (std::size_t c = 0; c < ch; ++c) {
          tmp[(y * out_w + x) * ch + c] += t.weight * img.at(y, t.index, c);
        }
      }
    }
  }
  ImageGrid out(out_h, out_w, ch);
  for (std::size_t y = 0; y < out_h; ++y) {
    for (const Tap& t : rows[y]) {
      for (std::size_t x = 0; x < out_w; ++x) {
        for (std::size_t c = 0; c < ch; ++c) {
          out.at(y, x, c) += t.weight * tmp[(t.index * out_w + x) * ch + c];
        }
      }
    }
  }
  return out;
}

void clamp_unit(ImageGrid& img) {
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace

ImageGrid resize(const ImageGrid& img, std::size_t out_height, std::size_t out_width,
                 Interp interp) {
  if (img.size() == 0 || out_height == 0 || out_width == 0) {
    throw ParameterError("resize needs non-empty input and output");
  }
  const auto rows = make_taps(interp, img.height(), out_height, 0.0,
                              static_cast<double>(img.height()));
  const auto cols = make_taps(interp, img.width(), out_width, 0.0,
                              static_cast<double>(img.width()));
  ImageGrid out = apply_separable(img, rows, cols);
  clamp_unit(out);
  return out;
}

ImageGrid resize_region(const ImageGrid& img, const PixelRect& rect, std::size_t out_height,
                        std::size_t out_width) {
  if (!(rect.x0 >= 0.0 && rect.y0 >= 0.0 && rect.x1 <= static_cast<double>(img.width()) &&
        rect.y1 <= static_cast<double>(img.height()) && rect.x1 > rect.x0 && rect.y1 > rect.y0)) {
    throw ParameterError("crop rectangle outside the image");
  }
  const auto rows = taps_area(img.height(), out_height, rect.y0, rect.y1 - rect.y0);
  const auto cols = taps_area(img.width(), out_width, rect.x0, rect.x1 - rect.x0);
  return apply_separable(img, rows, cols);
}

ImageGrid flip_horizontal(const ImageGrid& img) {
  ImageGrid out(img.height(), img.width(), img.channels());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (std::size_t c = 0; c < img.channels(); ++c) {
        out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
      }
    }
  }
  return out;
}

ImageGrid pad_center(const ImageGrid& img, std::size_t height, std::size_t width) {
  if (height < img.height() || width < img.width()) throw ParameterError("canvas smaller than image");
  ImageGrid out(height, width, img.channels());
  const std::size_t oy = (height - img.height()) / 2;
  const std::size_t ox = (width - img.width()) / 2;
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (std::size_t c = 0; c < img.channels(); ++c) out.at(y + oy, x + ox, c) = img.at(y, x, c);
    }
  }
  return out;
}

ImageGrid load_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ParseError("cannot read PNG '" + path + "': " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw ParseError("cannot decode PNG '" + path + "': " + msg);
  }
  std::vector<double> values(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) values[i] = buffer[i] / 255.0;
  return ImageGrid(image.height, image.width, color ? 3 : 1, std::move(values));
}

void save_png(const std::string& path, const ImageGrid& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(img.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    buffer[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.values()[i], 0.0, 1.0) * 255.0));
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error("cannot write PNG '" + path + "': " + image.message);
  }
}

void to_json(nlohmann::json& j, const ImageGrid& img) {
  j = {{"height", img.height()},
       {"width", img.width()},
       {"channels", img.channels()},
       {"values", std::vector<double>(img.values().begin(), img.values().end())}};
}

void from_json(const nlohmann::json& j, ImageGrid& img) {
  img = ImageGrid(j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
                  j.at("channels").get<std::size_t>(), j.at("values").get<std::vector<double>>());
}

}  // namespace padkit
