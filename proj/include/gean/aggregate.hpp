#pragma once

#include <random>
#include <span>
#include <vector>

#include "gean/imaging.hpp"
#include "gean/tps.hpp"

namespace gean {

/// L x K branch weights, row-major (landmark i, branch k).
struct ScoreMatrix {
  int landmarks = 0;
  int branches = 0;
  std::vector<double> values;

  double operator()(int i, int k) const { return values[std::size_t(i) * branches + k]; }
  double& operator()(int i, int k) { return values[std::size_t(i) * branches + k]; }
};

/// Compensated per-branch predictions together with the displacement fields
/// that produced the branches.
struct BranchPredictions {
  std::vector<LandmarkSet> predictions;          // K sets of L points
  std::vector<DisplacementField> displacements;  // K fields of L offsets

  int branch_count() const { return static_cast<int>(predictions.size()); }
};

enum class ScoreWeighting {
  kDisplacement,         // weight proportional to |d_{i,k}|
  kInverseDisplacement,  // weight proportional to 1 / |d_{i,k}|
};

/// Per-landmark normalized displacement magnitudes. Rows with no displaced
/// branch get 1/K. Under inverse weighting, undisplaced branches of a row
/// share the whole weight.
ScoreMatrix branch_scores(std::span<const DisplacementField> displacements,
                          ScoreWeighting weighting = ScoreWeighting::kDisplacement);

/// (1 / LK) sum_i sum_k Sc_ik |p*_i - p~_ik|.
double aggregation_loss(const LandmarkSet& truth, std::span<const LandmarkSet> predictions,
                        const ScoreMatrix& scores);

/// d aggregation_loss / d p~, one LandmarkSet per branch; zero where p~ = p*.
std::vector<LandmarkSet> aggregation_loss_grad(const LandmarkSet& truth, std::span<const LandmarkSet> predictions,
                                               const ScoreMatrix& scores);

/// p^f_i = sum_k Sc_ik p~_ik.
LandmarkSet final_landmarks(std::span<const LandmarkSet> predictions, const ScoreMatrix& scores);

/// P* + eta, eta ~ N(0, sigma^2) per coordinate, clamped to [-1, 1].
LandmarkSet perturb_ground_truth(const LandmarkSet& truth, double sigma, std::mt19937_64& rng);

}  // namespace gean
