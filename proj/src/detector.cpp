#include "gean/detector.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gean/error.hpp"

namespace gean {

SoftArgmaxResult soft_argmax(const HeatmapStack& h) {
  SoftArgmaxResult r;
  r.points.resize(h.count);
  r.mass.resize(h.count);
  for (int i = 0; i < h.count; ++i) {
    const auto m = h.map(i);
    double zeta = 0.0;
    double sx = 0.0;
    double sy = 0.0;
    for (int y = 0; y < h.height; ++y) {
      const double* row = m.data() + std::size_t(y) * h.width;
      double row_sum = 0.0;
      for (int x = 0; x < h.width; ++x) {
        const double v = row[x];
        if (!(v >= 0.0) || !std::isfinite(v)) throw ShapeError("soft_argmax: responses must be finite and >= 0");
        row_sum += v;
        sx += x * v;
      }
      zeta += row_sum;
      sy += y * row_sum;
    }
    if (!(zeta > 0.0)) {
      throw DegenerateError("soft_argmax: response map " + std::to_string(i) + " has zero mass");
    }
    r.mass[i] = zeta;
    r.points[i] = from_pixel({sx / zeta, sy / zeta}, h.width, h.height);
  }
  return r;
}

HeatmapStack soft_argmax_backward(const HeatmapStack& h, const SoftArgmaxResult& decoded,
                                  std::span<const Vec2> cotangent) {
  if (cotangent.size() != static_cast<std::size_t>(h.count) || decoded.points.size() != cotangent.size()) {
    throw ShapeError("soft_argmax_backward: cotangent size mismatch");
  }
  const double sx = h.width > 1 ? 2.0 / (h.width - 1) : 0.0;
  const double sy = h.height > 1 ? 2.0 / (h.height - 1) : 0.0;
  HeatmapStack g(h.count, h.height, h.width);
  for (int i = 0; i < h.count; ++i) {
    const Vec2 c{cotangent[i].x * sx, cotangent[i].y * sy};
    if (c.x == 0.0 && c.y == 0.0) continue;
    const Vec2 p = to_pixel(decoded.points[i], h.width, h.height);
    const double inv = 1.0 / decoded.mass[i];
    auto out = g.map(i);
    for (int y = 0; y < h.height; ++y) {
      const double row_term = (y - p.y) * c.y;
      double* dst = out.data() + std::size_t(y) * h.width;
      for (int x = 0; x < h.width; ++x) dst[x] = ((x - p.x) * c.x + row_term) * inv;
    }
  }
  return g;
}

HeatmapStack render_gaussian_heatmaps(const LandmarkSet& P, double sigma, int height, int width) {
  if (!(sigma > 0.0)) throw ShapeError("render_gaussian_heatmaps: sigma must be > 0");
  HeatmapStack h(static_cast<int>(P.size()), height, width);
  const double cutoff2 = 16.0 * sigma * sigma;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t i = 0; i < P.size(); ++i) {
    const Vec2 c = to_pixel(P[i], width, height);
    const int y0 = std::max(0, static_cast<int>(std::floor(c.y - 4.0 * sigma)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(c.y + 4.0 * sigma)));
    const int x0 = std::max(0, static_cast<int>(std::floor(c.x - 4.0 * sigma)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(c.x + 4.0 * sigma)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d2 = (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y);
        if (d2 <= cutoff2) h.at(static_cast<int>(i), y, x) = std::exp(-d2 * inv);
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// ToyDetector

namespace {

constexpr int kCoordChannels = 2;
// The head also sees x^2 and y^2, so a landmark's log-response can hold a
// Gaussian position prior.
constexpr int kHeadCoordChannels = 4;

void check_architecture(const ToyDetector::Architecture& a) {
  if (a.landmarks < 1) throw ShapeError("ToyDetector: need at least one landmark");
  if (a.width < 4 || a.height < 4 || a.width % 4 != 0 || a.height % 4 != 0) {
    throw ShapeError("ToyDetector: input size must be a multiple of 4");
  }
  if (a.enc1_channels < 1 || a.enc2_channels < 1) throw ShapeError("ToyDetector: channel counts must be >= 1");
}

void add_coordinates(nn::Tensor& t, int first_channel, bool quadratic) {
  for (int y = 0; y < t.height; ++y) {
    for (int x = 0; x < t.width; ++x) {
      const Vec2 p = from_pixel({double(x), double(y)}, t.width, t.height);
      t.at(first_channel, y, x) = p.x;
      t.at(first_channel + 1, y, x) = p.y;
      if (quadratic) {
        t.at(first_channel + 2, y, x) = p.x * p.x;
        t.at(first_channel + 3, y, x) = p.y * p.y;
      }
    }
  }
}

void add_into(nn::Tensor& dst, const nn::Tensor& src) {
  for (std::size_t i = 0; i < dst.values.size(); ++i) dst.values[i] += src.values[i];
}

}  // namespace

ToyDetector::ToyDetector(const Architecture& arch, std::uint64_t seed) : arch_(arch) {
  check_architecture(arch);
  build_manifest();
  std::mt19937_64 rng(seed);
  for (const TensorInfo& t : manifest_) {
    const bool is_bias = t.name.ends_with(".bias");
    if (is_bias) continue;  // zero
    const int fan_in = t.shape[1] * t.shape[2] * t.shape[3];
    // Small head weights keep untrained maps close to uniform.
    const double stddev = t.name == "head.weight" ? 0.1 / std::sqrt(double(fan_in)) : std::sqrt(2.0 / fan_in);
    std::normal_distribution<double> dist(0.0, stddev);
    for (std::size_t i = 0; i < t.count; ++i) params_[t.offset + i] = dist(rng);
  }
  round_to_float();
}

ToyDetector::ToyDetector(const Architecture& arch, std::vector<double> parameters) : arch_(arch) {
  check_architecture(arch);
  build_manifest();
  if (parameters.size() != params_.size()) {
    throw ShapeError("ToyDetector: expected " + std::to_string(params_.size()) + " parameters, got " +
                     std::to_string(parameters.size()));
  }
  params_ = std::move(parameters);
}

void ToyDetector::build_manifest() {
  const int c1 = arch_.enc1_channels;
  const int c2 = arch_.enc2_channels;
  const int L = arch_.landmarks;
  const std::vector<std::pair<std::string, std::vector<int>>> layout = {
      {"e1.weight", {c1, 1 + kCoordChannels, 3, 3}}, {"e1.bias", {c1}},
      {"e2.weight", {c2, c1, 3, 3}},                 {"e2.bias", {c2}},
      {"b.weight", {c2, c2, 3, 3}},                  {"b.bias", {c2}},
      {"d1.weight", {c1, c2, 3, 3}},                 {"d1.bias", {c1}},
      {"head.weight", {L, c1 + kHeadCoordChannels, 1, 1}}, {"head.bias", {L}},
  };
  manifest_.clear();
  std::size_t offset = 0;
  for (const auto& [name, shape] : layout) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    manifest_.push_back({name, shape, offset, count});
    offset += count;
  }
  params_.assign(offset, 0.0);
}

std::span<double> ToyDetector::tensor(std::string_view name) {
  for (const TensorInfo& t : manifest_) {
    if (t.name == name) return {params_.data() + t.offset, t.count};
  }
  throw ShapeError("ToyDetector: no tensor named '" + std::string(name) + "'");
}

std::span<const double> ToyDetector::tensor(std::string_view name) const {
  return const_cast<ToyDetector*>(this)->tensor(name);
}

nn::ConvShape ToyDetector::shape_of(std::string_view conv) const {
  const int c1 = arch_.enc1_channels;
  const int c2 = arch_.enc2_channels;
  if (conv == "e1") return {1 + kCoordChannels, c1, 3};
  if (conv == "e2") return {c1, c2, 3};
  if (conv == "b") return {c2, c2, 3};
  if (conv == "d1") return {c2, c1, 3};
  return {c1 + kHeadCoordChannels, arch_.landmarks, 1};
}

void ToyDetector::round_to_float() {
  for (double& v : params_) v = static_cast<double>(static_cast<float>(v));
}

ToyDetector::ForwardState ToyDetector::forward(const Image& img) const {
  if (img.width() != arch_.width || img.height() != arch_.height) {
    throw ShapeError("ToyDetector: image size " + std::to_string(img.width()) + "x" +
                     std::to_string(img.height()) + " does not match the detector input");
  }
  ForwardState s;
  s.input = nn::Tensor(1 + kCoordChannels, arch_.height, arch_.width);
  std::copy(img.data().begin(), img.data().end(), s.input.channel(0));
  add_coordinates(s.input, 1, false);

  auto conv = [this](const nn::Tensor& in, const char* name) {
    const std::string base(name);
    nn::Tensor out = nn::conv2d(in, shape_of(base), tensor(base + ".weight"), tensor(base + ".bias"));
    return out;
  };

  s.e1 = conv(s.input, "e1");
  nn::leaky_relu_inplace(s.e1);
  s.p1 = nn::avg_pool(s.e1, 2);
  s.e2 = conv(s.p1, "e2");
  nn::leaky_relu_inplace(s.e2);
  s.p2 = nn::avg_pool(s.e2, 2);
  s.b = conv(s.p2, "b");
  nn::leaky_relu_inplace(s.b);
  s.u1 = nn::upsample_nearest(s.b, 2);
  add_into(s.u1, s.e2);
  s.d1 = conv(s.u1, "d1");
  nn::leaky_relu_inplace(s.d1);

  const int c1 = arch_.enc1_channels;
  s.head_in = nn::Tensor(c1 + kHeadCoordChannels, arch_.height, arch_.width);
  {
    const nn::Tensor up = nn::upsample_nearest(s.d1, 2);
    for (std::size_t i = 0; i < up.values.size(); ++i) s.head_in.values[i] = up.values[i] + s.e1.values[i];
    add_coordinates(s.head_in, c1, true);
  }
  const nn::Tensor logits = conv(s.head_in, "head");

  s.heatmaps = HeatmapStack(arch_.landmarks, arch_.height, arch_.width);
  s.argmax.resize(arch_.landmarks);
  for (int i = 0; i < arch_.landmarks; ++i) {
    const double* z = logits.channel(i);
    const std::size_t n = logits.plane();
    const std::size_t am = static_cast<std::size_t>(std::max_element(z, z + n) - z);
    const double zmax = z[am];
    auto out = s.heatmaps.map(i);
    for (std::size_t k = 0; k < n; ++k) out[k] = std::exp(z[k] - zmax);
    s.argmax[i] = am;
  }
  return s;
}

HeatmapStack ToyDetector::predict_heatmaps(const Image& img) const { return forward(img).heatmaps; }

void ToyDetector::backward(const ForwardState& s, const HeatmapStack& cotangent, std::span<double> grad) const {
  if (!s.valid()) throw Error("ToyDetector::backward: no cached forward pass");
  if (grad.size() != params_.size()) throw ShapeError("ToyDetector::backward: gradient buffer size mismatch");
  if (cotangent.count != arch_.landmarks || cotangent.height != arch_.height || cotangent.width != arch_.width) {
    throw ShapeError("ToyDetector::backward: cotangent shape mismatch");
  }

  // r = exp(z - z[argmax])
  nn::Tensor z_bar(arch_.landmarks, arch_.height, arch_.width);
  for (int i = 0; i < arch_.landmarks; ++i) {
    const auto r = s.heatmaps.map(i);
    const auto c = cotangent.map(i);
    double* dst = z_bar.channel(i);
    double total = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      dst[k] = r[k] * c[k];
      total += dst[k];
    }
    dst[s.argmax[i]] -= total;
  }

  backward_logits(s, z_bar, grad);
}

void ToyDetector::backward_logits(const ForwardState& s, const nn::Tensor& logits_grad, std::span<double> grad) const {
  if (!s.valid()) throw Error("ToyDetector::backward_logits: no cached forward pass");
  if (grad.size() != params_.size()) throw ShapeError("ToyDetector::backward_logits: gradient buffer size mismatch");
  if (logits_grad.channels != arch_.landmarks || logits_grad.height != arch_.height ||
      logits_grad.width != arch_.width) {
    throw ShapeError("ToyDetector::backward_logits: gradient shape mismatch");
  }
  auto grad_of = [&](const std::string& name) -> std::span<double> {
    for (const TensorInfo& t : manifest_) {
      if (t.name == name) return grad.subspan(t.offset, t.count);
    }
    throw ShapeError("no tensor " + name);
  };
  auto conv_back = [&](const nn::Tensor& in, const nn::Tensor& g_out, const std::string& name, nn::Tensor* g_in) {
    const nn::ConvShape shape = shape_of(name);
    nn::conv2d_backward_params(in, g_out, shape, grad_of(name + ".weight"), grad_of(name + ".bias"));
    if (g_in != nullptr) nn::conv2d_backward_input(g_out, shape, tensor(name + ".weight"), *g_in);
  };

  const int c1 = arch_.enc1_channels;
  nn::Tensor head_in_bar(c1 + kHeadCoordChannels, arch_.height, arch_.width);
  conv_back(s.head_in, logits_grad, "head", &head_in_bar);

  nn::Tensor e1_bar(c1, arch_.height, arch_.width);
  std::copy(head_in_bar.values.begin(), head_in_bar.values.begin() + e1_bar.values.size(), e1_bar.values.begin());
  nn::Tensor d1_bar = nn::upsample_nearest_backward(e1_bar, 2);

  nn::leaky_relu_backward_inplace(s.d1, d1_bar);
  nn::Tensor u1_bar(s.u1.channels, s.u1.height, s.u1.width);
  conv_back(s.u1, d1_bar, "d1", &u1_bar);

  nn::Tensor e2_bar = u1_bar;
  nn::Tensor b_bar = nn::upsample_nearest_backward(u1_bar, 2);
  nn::leaky_relu_backward_inplace(s.b, b_bar);
  nn::Tensor p2_bar(s.p2.channels, s.p2.height, s.p2.width);
  conv_back(s.p2, b_bar, "b", &p2_bar);
  add_into(e2_bar, nn::avg_pool_backward(p2_bar, 2));

  nn::leaky_relu_backward_inplace(s.e2, e2_bar);
  nn::Tensor p1_bar(s.p1.channels, s.p1.height, s.p1.width);
  conv_back(s.p1, e2_bar, "e2", &p1_bar);
  add_into(e1_bar, nn::avg_pool_backward(p1_bar, 2));

  nn::leaky_relu_backward_inplace(s.e1, e1_bar);
  conv_back(s.input, e1_bar, "e1", nullptr);
}

}  // namespace gean
