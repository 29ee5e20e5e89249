#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gean/embedder.hpp"
#include "gean/imaging.hpp"
#include "gean/tps.hpp"

namespace gean {

struct AttackConfig {
  int branches = 3;              // K
  double tau = 0.05;             // embedding distance threshold
  double clip = 0.05;            // l_inf bound on each displacement coordinate
  double step = 0.005;           // sign-step size epsilon
  int max_iters = 100;
  double ridge = kDefaultTpsRidge;
  /// Drives the random sign used when the cost gradient vanishes entirely.
  std::uint64_t seed = 0;

  /// Throws ConfigError if a field is out of range.
  void validate() const;
};

enum class BranchStatus {
  kConverged,     // reached the distance threshold
  kMaxIterations, // iteration cap hit before the threshold
  kAborted,       // degenerate spline mid-attack; last valid state kept
};

struct ManipulatedFace {
  Image image;
  LandmarkSet control_source;  // P
  LandmarkSet control_target;  // P_adv = P + d
  DisplacementField displacement;
  int iterations_used = 0;
  BranchStatus status = BranchStatus::kConverged;
  std::string diagnostic;
  /// attack_cost after every accepted iteration (empty for sampled faces).
  std::vector<double> cost_history;
};

/// Embeddings of the faces an attack branch must move away from.
class PeerSet {
 public:
  explicit PeerSet(const Embedder& embedder) : embedder_(&embedder) {}

  void add(const Image& img) { embeddings_.push_back(embed_resized(*embedder_, img)); }
  void add(EmbeddingVector z) { embeddings_.push_back(std::move(z)); }

  bool empty() const { return embeddings_.empty(); }
  std::size_t size() const { return embeddings_.size(); }
  const std::vector<EmbeddingVector>& embeddings() const { return embeddings_; }
  const Embedder& embedder() const { return *embedder_; }

  /// Sum of distances from z to every peer.
  double total_distance(const EmbeddingVector& z) const;
  /// Smallest distance from z to any peer.
  double min_distance(const EmbeddingVector& z) const;

 private:
  const Embedder* embedder_;
  std::vector<EmbeddingVector> embeddings_;
};

/// sum over peers of |f(T(P, P_adv, img)) - f(peer)|_2. Throws ShapeError on an
/// empty peer set.
double attack_cost(const Image& img, const LandmarkSet& P, const LandmarkSet& P_adv, const PeerSet& peers,
                   double ridge = kDefaultTpsRidge);

/// Gradient of attack_cost with respect to P_adv: the embedder VJP chained
/// into warp_vjp. Peers at distance exactly zero contribute the zero
/// subgradient.
std::vector<Vec2> cost_grad(const Image& img, const LandmarkSet& P, const LandmarkSet& P_adv,
                            const PeerSet& peers, double ridge = kDefaultTpsRidge);

/// P_adv + step * sign(g), with sign(0) = 0.
LandmarkSet fgsm_step(const LandmarkSet& P_adv, std::span<const Vec2> g, double step);

/// Clamps every coordinate of P_adv - P to [-clip, clip].
LandmarkSet clip_displacement(const LandmarkSet& P_adv, const LandmarkSet& P, double clip);

/// Iterative sign-gradient generation of K faces, each pushed until its
/// embedding is at least tau from the original and every earlier face (or
/// the iteration cap is reached).
std::vector<ManipulatedFace> generate_adversarial_set(const Embedder& embedder, const Image& img,
                                                      const LandmarkSet& P, const AttackConfig& cfg);

/// Maps raw sign-stepped landmarks to the landmarks actually warped with.
/// Must keep every displacement coordinate within `clip`.
using StepProjection =
    std::function<LandmarkSet(const LandmarkSet& P, const LandmarkSet& stepped, double clip)>;

namespace detail {

/// Shared loop of the adversarial generators; `project` defaults to
/// clip_displacement.
std::vector<ManipulatedFace> run_attack(const Embedder& embedder, const Image& img, const LandmarkSet& P,
                                        const AttackConfig& cfg, const StepProjection& project);

}  // namespace detail

}  // namespace gean
