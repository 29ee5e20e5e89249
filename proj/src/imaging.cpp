#include "gean/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "gean/error.hpp"

namespace gean {

Image::Image(int width, int height, double fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw ShapeError("image dimensions must be non-negative");
  data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

Image::Image(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 0 || height < 0) throw ShapeError("image dimensions must be non-negative");
  if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ShapeError("image data length does not match width*height");
  }
}

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const std::string& name) : bytes_(bytes), name_(name) {}

  // Next whitespace-delimited token, skipping '#' comments.
  std::string token() {
    for (;;) {
      while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
      if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
        continue;
      }
      break;
    }
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_])) &&
           bytes_[pos_] != '#') {
      ++pos_;
    }
    return bytes_.substr(start, pos_ - start);
  }

  long header_number(const char* what) {
    std::string t = token();
    if (t.empty()) throw FormatError(name_ + ": missing " + what + " in header");
    return parse(t, what, /*truncated_if_empty=*/false);
  }

  long pixel_number() {
    std::string t = token();
    if (t.empty()) throw TruncatedDataError(name_ + ": pixel data ends early");
    return parse(t, "pixel value", true);
  }

  std::size_t position() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  long parse(const std::string& t, const char* what, bool) const {
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
        t.size() > 9) {
      throw FormatError(name_ + ": invalid " + what + " '" + t + "'");
    }
    return std::stol(t);
  }

  const std::string& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

struct AxisTaps {
  int i0 = 0;
  int i1 = 0;
  double t = 0.0;
  // d(pixel coordinate)/d(normalized coordinate); 0 when clamped.
  double scale = 0.0;
};

AxisTaps axis_taps(double pixel, int extent) {
  AxisTaps a;
  if (extent <= 1) return a;
  const double last = static_cast<double>(extent - 1);
  double c = pixel;
  bool clamped = false;
  if (c < 0.0) {
    c = 0.0;
    clamped = true;
  } else if (c > last) {
    c = last;
    clamped = true;
  }
  a.i0 = std::min(static_cast<int>(std::floor(c)), extent - 2);
  a.i1 = a.i0 + 1;
  a.t = c - a.i0;
  a.scale = clamped ? 0.0 : 0.5 * last;
  return a;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::string name = path.string();
  HeaderReader reader(bytes, name);
  const std::string magic = reader.token();
  if (magic.size() == 2 && magic[0] == 'P' && magic[1] >= '1' && magic[1] <= '7' && magic != "P2" &&
      magic != "P5") {
    throw UnsupportedFormatError(name + ": unsupported format " + magic + " (only P2/P5 graymaps)");
  }
  if (magic != "P2" && magic != "P5") throw FormatError(name + ": not a portable graymap");

  const long width = reader.header_number("width");
  const long height = reader.header_number("height");
  const long maxval = reader.header_number("maxval");
  if (width < 1 || height < 1) throw FormatError(name + ": empty image dimensions");
  if (maxval < 1 || maxval > 65535) throw FormatError(name + ": maxval out of range");

  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<double> data(count);
  const double scale = 1.0 / static_cast<double>(maxval);

  if (magic == "P2") {
    for (std::size_t i = 0; i < count; ++i) {
      const long v = reader.pixel_number();
      if (v > maxval) throw FormatError(name + ": pixel value exceeds maxval");
      data[i] = static_cast<double>(v) * scale;
    }
  } else {
    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t pos = reader.position();
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      throw TruncatedDataError(name + ": pixel data ends early");
    }
    ++pos;
    const std::size_t bytes_per_pixel = maxval > 255 ? 2 : 1;
    if (bytes.size() - pos < count * bytes_per_pixel) {
      throw TruncatedDataError(name + ": pixel data ends early");
    }
    for (std::size_t i = 0; i < count; ++i) {
      long v = 0;
      if (bytes_per_pixel == 1) {
        v = static_cast<unsigned char>(bytes[pos + i]);
      } else {
        v = (static_cast<long>(static_cast<unsigned char>(bytes[pos + 2 * i])) << 8) |
            static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
      }
      if (v > maxval) throw FormatError(name + ": pixel value exceeds maxval");
      data[i] = static_cast<double>(v) * scale;
    }
  }
  return Image(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

void save_image(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image '" + path.string() + "'");
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::string raster(img.size(), '\0');
  const auto data = img.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double q = std::floor(std::clamp(data[i], 0.0, 1.0) * 255.0 + 0.5);
    raster[i] = static_cast<char>(static_cast<unsigned char>(q));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("failed writing image '" + path.string() + "'");
}

Vec2 to_pixel(Vec2 p, int width, int height) {
  if (width < 1 || height < 1) throw ShapeError("to_pixel: raster dimensions must be >= 1");
  return {(p.x + 1.0) * 0.5 * (width - 1), (p.y + 1.0) * 0.5 * (height - 1)};
}

Vec2 from_pixel(Vec2 px, int width, int height) {
  if (width < 1 || height < 1) throw ShapeError("from_pixel: raster dimensions must be >= 1");
  const double x = width > 1 ? px.x * 2.0 / (width - 1) - 1.0 : 0.0;
  const double y = height > 1 ? px.y * 2.0 / (height - 1) - 1.0 : 0.0;
  return {x, y};
}

BilinearSample bilinear_sample(const Image& img, Vec2 p) {
  const int w = img.width();
  const int h = img.height();
  const Vec2 px = to_pixel(p, w, h);
  const AxisTaps ax = axis_taps(px.x, w);
  const AxisTaps ay = axis_taps(px.y, h);

  const double v00 = img(ax.i0, ay.i0);
  const double v10 = img(ax.i1, ay.i0);
  const double v01 = img(ax.i0, ay.i1);
  const double v11 = img(ax.i1, ay.i1);

  const double top = v00 + ax.t * (v10 - v00);
  const double bottom = v01 + ax.t * (v11 - v01);

  BilinearSample s;
  s.value = top + ay.t * (bottom - top);
  s.grad.x = ((1.0 - ay.t) * (v10 - v00) + ay.t * (v11 - v01)) * ax.scale;
  s.grad.y = (bottom - top) * ay.scale;
  return s;
}

Image resize_bilinear(const Image& img, int width, int height) {
  if (img.width() == width && img.height() == height) return img;
  Image out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out(x, y) = bilinear_sample(img, from_pixel({double(x), double(y)}, width, height)).value;
    }
  }
  return out;
}

Image resize_bilinear_adjoint(const Image& cotangent, int src_width, int src_height) {
  if (cotangent.width() == src_width && cotangent.height() == src_height) return cotangent;
  Image out(src_width, src_height);
  const int w = cotangent.width();
  const int h = cotangent.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec2 px = to_pixel(from_pixel({double(x), double(y)}, w, h), src_width, src_height);
      const AxisTaps ax = axis_taps(px.x, src_width);
      const AxisTaps ay = axis_taps(px.y, src_height);
      const double c = cotangent(x, y);
      out(ax.i0, ay.i0) += c * (1.0 - ax.t) * (1.0 - ay.t);
      out(ax.i1, ay.i0) += c * ax.t * (1.0 - ay.t);
      out(ax.i0, ay.i1) += c * (1.0 - ax.t) * ay.t;
      out(ax.i1, ay.i1) += c * ax.t * ay.t;
    }
  }
  return out;
}

}  // namespace gean
