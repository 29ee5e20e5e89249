#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gean/imaging.hpp"
#include "gean/nn.hpp"

namespace gean {

/// L response maps of size height x width, map-major then row-major. Also
/// used, with the same layout, for cotangents with respect to the maps.
struct HeatmapStack {
  int count = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  HeatmapStack() = default;
  HeatmapStack(int count, int height, int width)
      : count(count), height(height), width(width), values(std::size_t(count) * height * width, 0.0) {}

  std::size_t plane() const { return std::size_t(height) * width; }
  std::span<double> map(int i) { return {values.data() + std::size_t(i) * plane(), plane()}; }
  std::span<const double> map(int i) const { return {values.data() + std::size_t(i) * plane(), plane()}; }
  double& at(int i, int y, int x) { return values[std::size_t(i) * plane() + std::size_t(y) * width + x]; }
  double at(int i, int y, int x) const { return values[std::size_t(i) * plane() + std::size_t(y) * width + x]; }
};

struct SoftArgmaxResult {
  LandmarkSet points;       // normalized coordinates
  std::vector<double> mass; // zeta_i, the total response of map i
};

/// Intensity-weighted centroid of every map (0-based pixel indices),
/// converted to normalized coordinates. Throws DegenerateError when a map
/// has zero total mass and ShapeError for negative or non-finite values.
SoftArgmaxResult soft_argmax(const HeatmapStack& h);

/// Pulls a cotangent on the decoded points (normalized units) back to the maps.
HeatmapStack soft_argmax_backward(const HeatmapStack& h, const SoftArgmaxResult& decoded,
                                  std::span<const Vec2> cotangent);

/// Gaussian bump exp(-d^2 / 2 sigma^2) per landmark, zero beyond 4 sigma.
HeatmapStack render_gaussian_heatmaps(const LandmarkSet& P, double sigma, int height, int width);

/// Heatmap landmark detector interface.
class LandmarkDetector {
 public:
  virtual ~LandmarkDetector() = default;
  virtual int landmark_count() const = 0;
  virtual int input_width() const = 0;
  virtual int input_height() const = 0;
  virtual HeatmapStack predict_heatmaps(const Image& img) const = 0;
};

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// Small encoder-decoder heatmap regressor:
///
///   [image, x, y] -conv3-> e1 (64)  -pool-> -conv3-> e2 (32) -pool-> -conv3-> b (16)
///   up(b) + e2 -conv3-> d1 (32);  [up(d1) + e1, x, y] -conv1-> logits (64)
///
/// Leaky ReLU after every hidden conv; each output map is exp(logit - max)
/// so responses are positive and the soft-argmax is a spatial softmax.
/// Coordinate channels let the network express position priors.
class ToyDetector final : public LandmarkDetector {
 public:
  struct Architecture {
    int landmarks = 19;
    int width = 64;
    int height = 64;
    int enc1_channels = 8;
    int enc2_channels = 16;

    friend bool operator==(const Architecture&, const Architecture&) = default;
  };

  /// Activations of one forward pass, needed by backward().
  struct ForwardState {
    nn::Tensor input, e1, p1, e2, p2, b, u1, d1, head_in;
    HeatmapStack heatmaps;
    std::vector<std::size_t> argmax;  // per map, index of the max logit
    bool valid() const { return !heatmaps.values.empty(); }
  };

  /// He-normal initialization from `seed`, rounded to float32.
  ToyDetector(const Architecture& arch, std::uint64_t seed);
  /// Adopts existing parameters (e.g. from a checkpoint).
  ToyDetector(const Architecture& arch, std::vector<double> parameters);

  int landmark_count() const override { return arch_.landmarks; }
  int input_width() const override { return arch_.width; }
  int input_height() const override { return arch_.height; }
  const Architecture& architecture() const { return arch_; }

  HeatmapStack predict_heatmaps(const Image& img) const override;
  ForwardState forward(const Image& img) const;

  /// Accumulates d <cotangent, heatmaps> / d parameters into `grad`
  /// (parameter_count() entries). Throws Error if `state` holds no forward pass.
  void backward(const ForwardState& state, const HeatmapStack& cotangent, std::span<double> grad) const;
  /// Same, starting from a cotangent on the logits (maps = exp(logit - max)).
  void backward_logits(const ForwardState& state, const nn::Tensor& logits_grad, std::span<double> grad) const;

  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  const std::vector<TensorInfo>& manifest() const { return manifest_; }
  std::span<double> tensor(std::string_view name);
  std::span<const double> tensor(std::string_view name) const;

  /// Rounds every parameter to the nearest float32 value.
  void round_to_float();

 private:
  void build_manifest();
  nn::ConvShape shape_of(std::string_view conv) const;

  Architecture arch_;
  std::vector<double> params_;
  std::vector<TensorInfo> manifest_;
};

/// Trained detector plus what is needed to reproduce and use it.
struct Checkpoint {
  ToyDetector::Architecture architecture;
  std::vector<double> parameters;  // float32-representable
  /// Echo of the configuration that produced the checkpoint.
  std::map<std::string, std::string> config;
  std::vector<double> epoch_losses;

  ToyDetector detector() const { return ToyDetector(architecture, parameters); }
};

/// Text header (format version, architecture, config echo, loss log,
/// tensor manifest) followed by little-endian float32 parameters.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gean
