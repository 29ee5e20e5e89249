#include "gean/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gean/error.hpp"
#include "gean/landmark_io.hpp"

namespace gean {

double bbox_width(const LandmarkSet& P) {
  if (P.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(P.begin(), P.end(), [](Vec2 a, Vec2 b) { return a.x < b.x; });
  return hi->x - lo->x;
}

double face_size(const LandmarkSet& P) {
  if (P.empty()) return 0.0;
  const auto [ylo, yhi] = std::minmax_element(P.begin(), P.end(), [](Vec2 a, Vec2 b) { return a.y < b.y; });
  return std::sqrt(bbox_width(P) * (yhi->y - ylo->y));
}

double interocular_distance(const LandmarkSet& P, const SemanticGroups& groups) {
  const auto [a, b] = groups.outer_eye_corners;
  return norm(P.at(a) - P.at(b));
}

namespace {

// Intensities of the rendered parts.
constexpr double kBackground = 0.05;
constexpr double kHeadFill = 0.3;
constexpr double kOutline = 0.7;
constexpr double kEye = 0.9;
constexpr double kBrow = 0.75;
constexpr double kNose = 0.6;
constexpr double kMouth = 0.8;
constexpr double kNoiseStd = 0.01;

struct FaceShape {
  Vec2 center;
  double angle = 0.0;
  double head_a = 0.0;  // horizontal semi-axis
  double head_b = 0.0;  // vertical semi-axis
  // Everything below is in the head's local (unrotated, centered) frame.
  double eye_y = 0.0, eye_sep = 0.0, eye_w = 0.0, eye_h = 0.0;
  double brow_gap = 0.0, brow_arch = 0.0;
  double nose_top = 0.0, nose_base = 0.0, nose_w = 0.0;
  double mouth_y = 0.0, mouth_w = 0.0, mouth_curve = 0.0;
  double stroke = 0.0;
};

FaceShape sample_shape(std::mt19937_64& rng) {
  auto U = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  FaceShape s;
  s.center = {U(-0.08, 0.08), U(-0.06, 0.06)};
  s.angle = U(-0.15, 0.15);
  s.head_a = U(0.55, 0.7);
  s.head_b = U(0.72, 0.84);
  s.eye_y = -s.head_b * U(0.12, 0.22);
  s.eye_sep = s.head_a * U(0.36, 0.46);
  s.eye_w = s.head_a * U(0.14, 0.18);
  s.eye_h = U(0.06, 0.08);
  s.brow_gap = U(0.13, 0.17);
  s.brow_arch = U(0.01, 0.04);
  s.nose_top = s.eye_y + U(0.04, 0.08);
  s.nose_base = s.head_b * U(0.15, 0.25);
  s.nose_w = s.head_a * U(0.12, 0.18);
  s.mouth_y = s.nose_base + s.head_b * U(0.22, 0.3);
  s.mouth_w = s.head_a * U(0.28, 0.4);
  s.mouth_curve = U(0.01, 0.05);
  s.stroke = 0.045;
  return s;
}

// Landmarks in the local frame, synthetic layout.
LandmarkSet local_landmarks(const FaceShape& s) {
  const double brow_y = s.eye_y - s.brow_gap;
  const double rx = -s.eye_sep;  // subject's right eye appears on the image left
  const double lx = s.eye_sep;
  return {
      {rx - 1.2 * s.eye_w, brow_y},                 // 0 right brow outer
      {rx, brow_y - s.brow_arch},                   // 1 right brow mid
      {rx + 1.1 * s.eye_w, brow_y},                 // 2 right brow inner
      {rx - s.eye_w, s.eye_y},                      // 3 right eye outer
      {rx + s.eye_w, s.eye_y},                      // 4 right eye inner
      {lx - 1.1 * s.eye_w, brow_y},                 // 5 left brow inner
      {lx, brow_y - s.brow_arch},                   // 6 left brow mid
      {lx + 1.2 * s.eye_w, brow_y},                 // 7 left brow outer
      {lx - s.eye_w, s.eye_y},                      // 8 left eye inner
      {lx + s.eye_w, s.eye_y},                      // 9 left eye outer
      {0.0, s.nose_top},                            // 10 nose top
      {-s.nose_w, s.nose_base},                     // 11 nose base left
      {s.nose_w, s.nose_base},                      // 12 nose base right
      {-s.mouth_w, s.mouth_y},                      // 13 mouth left
      {0.0, s.mouth_y + s.mouth_curve},             // 14 mouth mid
      {s.mouth_w, s.mouth_y},                       // 15 mouth right
      {-s.head_a, 0.0},                             // 16 jaw left
      {0.0, s.head_b},                              // 17 chin
      {s.head_a, 0.0},                              // 18 jaw right
  };
}

Vec2 to_global(const FaceShape& s, Vec2 q) {
  const double c = std::cos(s.angle), sn = std::sin(s.angle);
  return {s.center.x + c * q.x - sn * q.y, s.center.y + sn * q.x + c * q.y};
}

Vec2 to_local(const FaceShape& s, Vec2 p) {
  const double c = std::cos(s.angle), sn = std::sin(s.angle);
  const Vec2 d = p - s.center;
  return {c * d.x + sn * d.y, -sn * d.x + c * d.y};
}

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double t = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
  return norm(p - (a + t * ab));
}

double polyline_distance(Vec2 p, std::initializer_list<Vec2> pts) {
  double d = INFINITY;
  for (auto it = pts.begin(); it + 1 != pts.end(); ++it) d = std::min(d, segment_distance(p, *it, *(it + 1)));
  return d;
}

// Approximate signed distance to an axis-aligned ellipse.
double ellipse_sdf(Vec2 q, Vec2 c, double a, double b) {
  const double dx = (q.x - c.x) / a, dy = (q.y - c.y) / b;
  return (std::sqrt(dx * dx + dy * dy) - 1.0) * std::min(a, b);
}

double coverage(double signed_distance, double pixel) {
  return std::clamp(0.5 - signed_distance / pixel, 0.0, 1.0);
}

double blend(double under, double over, double alpha) { return under + alpha * (over - under); }

Image render(const FaceShape& s, const LandmarkSet& lm, int size, std::mt19937_64& rng) {
  const double pixel = 2.0 / (size - 1);
  const double half = 0.5 * s.stroke;
  std::normal_distribution<double> noise(0.0, kNoiseStd);
  Image img(size, size, kBackground);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Vec2 q = to_local(s, from_pixel({double(x), double(y)}, size, size));
      const double head = ellipse_sdf(q, {0, 0}, s.head_a, s.head_b);
      double v = blend(kBackground, kHeadFill, coverage(head, pixel));
      v = blend(v, kOutline, coverage(std::abs(head) - half, pixel));
      for (int side = 0; side < 2; ++side) {
        const int o = side * 5;
        const Vec2 eye_c = 0.5 * (lm[3 + o] + lm[4 + o]);
        v = blend(v, kEye, coverage(ellipse_sdf(q, eye_c, 1.2 * s.eye_w, s.eye_h), pixel));
        v = blend(v, kBrow, coverage(polyline_distance(q, {lm[0 + o], lm[1 + o], lm[2 + o]}) - half, pixel));
      }
      v = blend(v, kNose, coverage(polyline_distance(q, {lm[11], lm[10], lm[12], lm[11]}) - half, pixel));
      v = blend(v, kMouth, coverage(polyline_distance(q, {lm[13], lm[14], lm[15]}) - half, pixel));
      img(x, y) = std::clamp(v + noise(rng), 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace

std::vector<Sample> synth_dataset(int n, std::uint64_t seed, int size) {
  if (n < 1) throw ConfigError("synth_dataset: n must be >= 1");
  if (size < 16) throw ConfigError("synth_dataset: size must be >= 16");
  const SemanticGroups groups = assign_groups(19, "synthetic");
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const FaceShape shape = sample_shape(rng);
    const LandmarkSet local = local_landmarks(shape);
    Sample smp;
    char name[32];
    std::snprintf(name, sizeof name, "face_%05d", i);
    smp.name = name;
    smp.image = render(shape, local, size, rng);
    for (const Vec2& q : local) smp.landmarks.push_back(to_global(shape, q));
    smp.face_size = face_size(smp.landmarks);
    smp.interocular = interocular_distance(smp.landmarks, groups);
    out.push_back(std::move(smp));
  }
  return out;
}

void save_dataset(const std::vector<Sample>& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  for (const Sample& s : data) {
    save_image(s.image, dir / (s.name + ".pgm"));
    save_landmarks(s.landmarks, dir / (s.name + ".pts"));
  }
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir, const std::string& scheme) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> images;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".pgm") images.push_back(entry.path());
  }
  std::sort(images.begin(), images.end());
  const SemanticGroups groups = assign_groups(scheme_landmark_count(scheme), scheme);
  std::vector<Sample> out;
  for (const auto& img_path : images) {
    std::filesystem::path pts = img_path;
    pts.replace_extension(".pts");
    if (!std::filesystem::exists(pts)) continue;
    Sample s;
    s.name = img_path.stem().string();
    s.image = load_image(img_path);
    s.landmarks = load_landmarks(pts);
    if (s.landmarks.size() != groups.landmark_count()) {
      throw ShapeError("'" + pts.string() + "' has " + std::to_string(s.landmarks.size()) +
                       " landmarks; scheme '" + scheme + "' expects " + std::to_string(groups.landmark_count()));
    }
    s.face_size = face_size(s.landmarks);
    s.interocular = interocular_distance(s.landmarks, groups);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw IoError("no samples (<name>.pgm + <name>.pts) in '" + dir.string() + "'");
  return out;
}

}  // namespace gean
