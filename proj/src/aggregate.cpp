#include "gean/aggregate.hpp"

#include <algorithm>
#include <cmath>

#include "gean/error.hpp"

namespace gean {

namespace {

void check_shapes(std::span<const LandmarkSet> predictions, const ScoreMatrix& scores) {
  if (predictions.empty()) throw ShapeError("aggregation: no branches");
  if (static_cast<int>(predictions.size()) != scores.branches) throw ShapeError("aggregation: branch count mismatch");
  for (const auto& p : predictions) {
    if (static_cast<int>(p.size()) != scores.landmarks) throw ShapeError("aggregation: landmark count mismatch");
  }
}

}  // namespace

ScoreMatrix branch_scores(std::span<const DisplacementField> displacements, ScoreWeighting weighting) {
  if (displacements.empty()) throw ShapeError("branch_scores: K must be >= 1");
  const std::size_t L = displacements[0].size();
  for (const auto& d : displacements) {
    if (d.size() != L) throw ShapeError("branch_scores: displacement fields differ in length");
  }
  const int K = static_cast<int>(displacements.size());
  ScoreMatrix sc{static_cast<int>(L), K, std::vector<double>(L * K, 0.0)};
  std::vector<double> mag(K);
  for (std::size_t i = 0; i < L; ++i) {
    for (int k = 0; k < K; ++k) mag[k] = norm(displacements[k][i]);
    const bool any = std::any_of(mag.begin(), mag.end(), [](double m) { return m > 0.0; });
    if (!any) {
      for (int k = 0; k < K; ++k) sc(int(i), k) = 1.0 / K;
      continue;
    }
    if (weighting == ScoreWeighting::kInverseDisplacement) {
      const int zeros = static_cast<int>(std::count(mag.begin(), mag.end(), 0.0));
      if (zeros > 0) {
        for (int k = 0; k < K; ++k) sc(int(i), k) = mag[k] == 0.0 ? 1.0 / zeros : 0.0;
        continue;
      }
      for (double& m : mag) m = 1.0 / m;
    }
    double total = 0.0;
    for (double m : mag) total += m;
    for (int k = 0; k < K; ++k) sc(int(i), k) = mag[k] / total;
  }
  return sc;
}

double aggregation_loss(const LandmarkSet& truth, std::span<const LandmarkSet> predictions,
                        const ScoreMatrix& scores) {
  check_shapes(predictions, scores);
  if (static_cast<int>(truth.size()) != scores.landmarks) throw ShapeError("aggregation_loss: truth size mismatch");
  double s = 0.0;
  for (int i = 0; i < scores.landmarks; ++i) {
    for (int k = 0; k < scores.branches; ++k) s += scores(i, k) * norm(truth[i] - predictions[k][i]);
  }
  return s / (static_cast<double>(scores.landmarks) * scores.branches);
}

std::vector<LandmarkSet> aggregation_loss_grad(const LandmarkSet& truth, std::span<const LandmarkSet> predictions,
                                               const ScoreMatrix& scores) {
  check_shapes(predictions, scores);
  if (static_cast<int>(truth.size()) != scores.landmarks) throw ShapeError("aggregation_loss: truth size mismatch");
  const double inv = 1.0 / (static_cast<double>(scores.landmarks) * scores.branches);
  std::vector<LandmarkSet> g(predictions.size(), LandmarkSet(scores.landmarks));
  for (int k = 0; k < scores.branches; ++k) {
    for (int i = 0; i < scores.landmarks; ++i) {
      const Vec2 e = predictions[k][i] - truth[i];
      const double n = norm(e);
      if (n > 0.0) g[k][i] = (scores(i, k) * inv / n) * e;
    }
  }
  return g;
}

LandmarkSet final_landmarks(std::span<const LandmarkSet> predictions, const ScoreMatrix& scores) {
  check_shapes(predictions, scores);
  LandmarkSet out(scores.landmarks);
  for (int i = 0; i < scores.landmarks; ++i) {
    Vec2 p;
    for (int k = 0; k < scores.branches; ++k) p += scores(i, k) * predictions[k][i];
    out[i] = p;
  }
  return out;
}

LandmarkSet perturb_ground_truth(const LandmarkSet& truth, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("perturb_ground_truth: sigma must be >= 0");
  if (sigma == 0.0) return truth;
  std::normal_distribution<double> noise(0.0, sigma);
  LandmarkSet out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double nx = noise(rng);
    const double ny = noise(rng);
    out[i] = {std::clamp(truth[i].x + nx, -1.0, 1.0), std::clamp(truth[i].y + ny, -1.0, 1.0)};
  }
  return out;
}

}  // namespace gean
