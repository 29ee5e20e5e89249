#include "gean/manipulation.hpp"

#include "gean/dataset.hpp"
#include "gean/error.hpp"

namespace gean {

namespace {

ManipulatedFace make_face(const Image& img, const LandmarkSet& P, LandmarkSet P_adv, double ridge) {
  ManipulatedFace f;
  f.image = warp_image(img, P, P_adv, ridge);
  f.control_source = P;
  f.displacement.resize(P.size());
  for (std::size_t i = 0; i < P.size(); ++i) f.displacement[i] = P_adv[i] - P[i];
  f.control_target = std::move(P_adv);
  return f;
}

// Owns the grouping used by the Gadv variant.
class GroupedAdversarialManipulator final : public Manipulator {
 public:
  GroupedAdversarialManipulator(const Embedder& e, AttackConfig a, double frac, SemanticGroups g)
      : groups_(std::move(g)), inner_(e, a, frac, &groups_) {}
  std::vector<ManipulatedFace> manipulate(const Image& img, const LandmarkSet& P, int K,
                                          std::mt19937_64& rng) const override {
    return inner_.manipulate(img, P, K, rng);
  }

 private:
  SemanticGroups groups_;
  AdversarialManipulator inner_;
};

}  // namespace

AdversarialManipulator::AdversarialManipulator(const Embedder& embedder, AttackConfig attack,
                                               double delta_fraction, const SemanticGroups* groups)
    : embedder_(&embedder), attack_(attack), delta_fraction_(delta_fraction), groups_(groups) {}

std::vector<ManipulatedFace> AdversarialManipulator::manipulate(const Image& img, const LandmarkSet& P, int K,
                                                                std::mt19937_64& rng) const {
  AttackConfig cfg = attack_;
  cfg.branches = K;
  cfg.clip = delta_fraction_ * bbox_width(P);
  if (!(cfg.clip > 0.0)) throw DegenerateError("landmarks have zero bounding-box width");
  cfg.seed = rng();
  std::vector<ManipulatedFace> faces = groups_ != nullptr
                                           ? generate_grouped_adversarial_set(*embedder_, img, P, *groups_, cfg)
                                           : generate_adversarial_set(*embedder_, img, P, cfg);
  for (const ManipulatedFace& f : faces) {
    if (f.status == BranchStatus::kAborted) throw DegenerateError(f.diagnostic);
  }
  return faces;
}

KnownTransformManipulator::KnownTransformManipulator(SemanticGroups groups, KnownTransformRanges ranges,
                                                     double ridge)
    : groups_(std::move(groups)), ranges_(ranges), ridge_(ridge) {}

std::vector<ManipulatedFace> KnownTransformManipulator::manipulate(const Image& img, const LandmarkSet& P, int K,
                                                                   std::mt19937_64& rng) const {
  std::vector<ManipulatedFace> faces;
  faces.reserve(K);
  for (int k = 0; k < K; ++k) {
    const auto transforms = sample_known_transforms(groups_, P, rng, ranges_);
    faces.push_back(make_face(img, P, apply_group_transforms(groups_, P, transforms), ridge_));
  }
  return faces;
}

std::vector<ManipulatedFace> IdentityManipulator::manipulate(const Image& img, const LandmarkSet& P, int K,
                                                             std::mt19937_64&) const {
  return std::vector<ManipulatedFace>(K, make_face(img, P, P, kDefaultTpsRidge));
}

std::unique_ptr<Manipulator> make_manipulator(const PipelineConfig& cfg, const Embedder& embedder) {
  switch (cfg.variant) {
    case Variant::kAdv:
      return std::make_unique<AdversarialManipulator>(embedder, cfg.attack, cfg.delta_fraction);
    case Variant::kGadv:
      return std::make_unique<GroupedAdversarialManipulator>(
          embedder, cfg.attack, cfg.delta_fraction, assign_groups(scheme_landmark_count(cfg.scheme), cfg.scheme));
    case Variant::kGK:
      return std::make_unique<KnownTransformManipulator>(
          assign_groups(scheme_landmark_count(cfg.scheme), cfg.scheme), cfg.known, cfg.attack.ridge);
  }
  throw ConfigError("unknown variant");
}

}  // namespace gean
