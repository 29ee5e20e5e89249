#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace gean {

/// A 2D point or vector. Landmarks use normalized coordinates where
/// (-1,-1) is the top-left pixel center and (1,1) the bottom-right one.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

using NormalizedPoint = Vec2;

/// L ordered landmarks in normalized coordinates.
using LandmarkSet = std::vector<Vec2>;

/// Single-channel raster, row-major, intensities nominally in [0,1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0);
  Image(int width, int height, std::vector<double> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(int x, int y) const { return data_[index(x, y)]; }
  double& operator()(int x, int y) { return data_[index(x, y)]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Reads a portable graymap (P2 or P5, maxval <= 65535). Intensities are
/// divided by maxval.
///
/// Throws IoError when the file cannot be opened, UnsupportedFormatError for
/// other PNM kinds, FormatError for a malformed header and
/// TruncatedDataError when pixel data ends early.
Image load_image(const std::filesystem::path& path);

/// Writes a binary P5 graymap with maxval 255, rounding half up.
void save_image(const Image& img, const std::filesystem::path& path);

/// Continuous pixel coordinate of a normalized point. Pixel centers sit on
/// integers, so (-1,-1) -> (0,0) and (1,1) -> (w-1,h-1).
Vec2 to_pixel(Vec2 p, int width, int height);
Vec2 from_pixel(Vec2 px, int width, int height);

struct BilinearSample {
  double value = 0.0;
  /// d value / d (x,y) in normalized coordinates.
  Vec2 grad;
};

/// Bilinear interpolation of the four surrounding pixel centers with
/// clamp-to-edge outside the raster. Along a clamped axis the gradient is 0.
BilinearSample bilinear_sample(const Image& img, Vec2 p);

/// Resamples to a new raster size by bilinear sampling at matching
/// normalized coordinates.
Image resize_bilinear(const Image& img, int width, int height);

/// Adjoint of resize_bilinear: maps a cotangent on the resized raster back
/// to the source raster size.
Image resize_bilinear_adjoint(const Image& cotangent, int src_width, int src_height);

}  // namespace gean
