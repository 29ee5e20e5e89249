#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gean/aggregate.hpp"
#include "gean/config.hpp"
#include "gean/dataset.hpp"
#include "gean/detector.hpp"
#include "gean/embedder.hpp"
#include "gean/manipulation.hpp"

namespace gean {

struct TrainResult {
  Checkpoint checkpoint;
  int skipped_samples = 0;
  std::vector<std::string> warnings;
};

/// Called after every epoch with (epoch, mean loss); may be empty.
using EpochCallback = std::function<void(int, double)>;

/// Per sample: perturb the ground truth into coarse landmarks, manipulate
/// into k_train faces, detect on each, map the predictions back through the
/// inverse warp, and minimize the score-weighted distance to the ground
/// truth. Samples whose manipulation is degenerate are skipped with a
/// warning; a non-finite loss throws Error.
TrainResult train(const PipelineConfig& cfg, const std::vector<Sample>& data, const Embedder& embedder,
                  const EpochCallback& on_epoch = {});

/// One training sample's loss and its gradient accumulated into `grad`.
/// Exposed for gradient checks. Returns the loss.
double sample_loss_and_grad(const ToyDetector& det, const LandmarkSet& truth,
                            const std::vector<ManipulatedFace>& faces, bool aggregate, ScoreWeighting weighting,
                            double ridge, std::span<double> grad);

struct InferenceResult {
  LandmarkSet landmarks;  // fused prediction
  LandmarkSet coarse;     // first-pass prediction on the unmodified image
  std::vector<LandmarkSet> branches;  // compensated, clamped branch predictions
  ScoreMatrix scores;
  bool fallback = false;  // manipulation failed; landmarks == coarse
  std::string warning;
};

/// Coarse pass, K manipulated branches around the coarse landmarks,
/// detection and compensation per branch, then score-weighted fusion.
InferenceResult infer(const ToyDetector& det, const Image& img, const Manipulator& manipulator, int K,
                      std::mt19937_64& rng, ScoreWeighting weighting = ScoreWeighting::kDisplacement,
                      double ridge = kDefaultTpsRidge);

/// Coarse detection only: soft-argmax of the maps, clamped to [-1, 1].
LandmarkSet detect(const ToyDetector& det, const Image& img);

struct Evaluation {
  double nme = 0.0;                  // percent
  std::vector<double> per_sample;    // per-sample NME as a fraction
  std::vector<std::pair<double, double>> ced;  // (threshold, fraction of samples)
};

/// Thresholds 0, 0.002, ..., 0.1 applied to per-sample NME fractions.
std::vector<double> ced_thresholds();

/// Throws ShapeError on size mismatch and Error on a zero normalizer.
Evaluation evaluate_predictions(const std::vector<LandmarkSet>& predictions, const std::vector<Sample>& data,
                                Normalization norm);

/// Runs infer on every sample with k_test branches. The manipulation rng of
/// sample i is seeded from (cfg.seed, i).
Evaluation evaluate(const ToyDetector& det, const std::vector<Sample>& data, const PipelineConfig& cfg,
                    const Embedder& embedder, std::vector<LandmarkSet>* predictions = nullptr);

}  // namespace gean
