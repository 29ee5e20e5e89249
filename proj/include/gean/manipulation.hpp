#pragma once

#include <memory>
#include <random>
#include <vector>

#include "gean/attack.hpp"
#include "gean/config.hpp"
#include "gean/embedder.hpp"
#include "gean/groups.hpp"

namespace gean {

/// Produces the K manipulated faces of one image. Every variant yields
/// ManipulatedFace records whose image is warp_image(img, P, P_adv), so the
/// rest of the pipeline does not depend on which variant is used.
class Manipulator {
 public:
  virtual ~Manipulator() = default;
  /// Throws DegenerateError if no valid manipulation exists for P.
  virtual std::vector<ManipulatedFace> manipulate(const Image& img, const LandmarkSet& P, int K,
                                                  std::mt19937_64& rng) const = 0;
};

/// Per-landmark (adv) or group-constrained (Gadv) adversarial faces with
/// clip = delta_fraction * bbox_width(P). The attack seed is drawn from rng.
class AdversarialManipulator final : public Manipulator {
 public:
  /// `groups` non-null selects the grouped attack; it must outlive this object.
  AdversarialManipulator(const Embedder& embedder, AttackConfig attack, double delta_fraction,
                         const SemanticGroups* groups = nullptr);
  std::vector<ManipulatedFace> manipulate(const Image& img, const LandmarkSet& P, int K,
                                          std::mt19937_64& rng) const override;

 private:
  const Embedder* embedder_;
  AttackConfig attack_;
  double delta_fraction_;
  const SemanticGroups* groups_;
};

/// Sampled per-group similarities (GK).
class KnownTransformManipulator final : public Manipulator {
 public:
  KnownTransformManipulator(SemanticGroups groups, KnownTransformRanges ranges, double ridge);
  std::vector<ManipulatedFace> manipulate(const Image& img, const LandmarkSet& P, int K,
                                          std::mt19937_64& rng) const override;

 private:
  SemanticGroups groups_;
  KnownTransformRanges ranges_;
  double ridge_;
};

/// K unmodified copies (zero displacement).
class IdentityManipulator final : public Manipulator {
 public:
  std::vector<ManipulatedFace> manipulate(const Image& img, const LandmarkSet& P, int K,
                                          std::mt19937_64& rng) const override;
};

/// Builds the manipulator selected by cfg.variant. `embedder` must outlive it.
std::unique_ptr<Manipulator> make_manipulator(const PipelineConfig& cfg, const Embedder& embedder);

}  // namespace gean
