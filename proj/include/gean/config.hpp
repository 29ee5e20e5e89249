#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "gean/aggregate.hpp"
#include "gean/attack.hpp"
#include "gean/detector.hpp"
#include "gean/groups.hpp"

namespace gean {

enum class Variant { kAdv, kGadv, kGK };
enum class Normalization { kInterocular, kFaceSize };
enum class OptimizerKind { kSgd, kAdam };

struct PipelineConfig {
  Variant variant = Variant::kGK;
  int k_train = 3;
  int k_test = 3;
  /// false trains every manipulated face as an independent single-branch
  /// sample (the no-aggregation ablation).
  bool aggregate = true;
  ScoreWeighting weighting = ScoreWeighting::kDisplacement;
  std::string scheme = "synthetic";

  /// tau, step, max_iters and ridge are used; branches and clip are set per
  /// call (clip = delta_fraction * landmark bounding-box width).
  AttackConfig attack;
  double delta_fraction = 0.05;
  KnownTransformRanges known;

  double sigma_eta = 0.02;
  int epochs = 15;
  int batch_size = 8;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 3e-4;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  /// Epochs of Gaussian-heatmap regression before the landmark loss, with
  /// their own optimizer state.
  int warm_start_epochs = 15;
  double warm_start_learning_rate = 2e-3;
  double heatmap_sigma = 2.0;
  ToyDetector::Architecture detector;

  Normalization normalization = Normalization::kInterocular;
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

std::string to_string(Variant v);
std::string to_string(Normalization n);
Variant parse_variant(std::string_view s);
Normalization parse_normalization(std::string_view s);

/// Sets one field by its config-file key. Throws ConfigError for unknown keys
/// or unparsable values.
void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value);

/// Every key with its current value, as written by the checkpoint echo.
std::map<std::string, std::string> config_to_map(const PipelineConfig& cfg);

/// Applies a `key = value` file (blank lines and `#` comments ignored).
void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path);

}  // namespace gean
