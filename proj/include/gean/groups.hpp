#pragma once

#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gean/attack.hpp"
#include "gean/imaging.hpp"

namespace gean {

/// Partition of the landmarks into semantic groups (eye+brow, nose, mouth,
/// jaw, ...) plus the structural relations checked after sampling.
struct SemanticGroups {
  /// A named landmark subset used only for structure checks (e.g. a brow
  /// inside an eye+brow group).
  struct Region {
    std::string name;
    std::vector<int> landmarks;
  };
  /// Region `upper` must stay above and clear of region `lower`.
  struct VerticalOrder {
    int upper = 0;
    int lower = 0;
  };
  /// Group `second` receives the x-mirror of group `first`'s transform.
  struct MirrorPair {
    int first = 0;
    int second = 0;
  };

  std::string scheme;
  std::vector<std::string> names;
  std::vector<int> membership;             // landmark -> group id
  std::vector<std::vector<int>> members;   // group id -> landmark indices
  std::vector<Region> regions;
  std::vector<VerticalOrder> vertical_orders;
  std::vector<MirrorPair> mirror_pairs;
  std::pair<int, int> outer_eye_corners{0, 0};

  std::size_t landmark_count() const { return membership.size(); }
  std::size_t group_count() const { return members.size(); }
  std::vector<std::size_t> sizes() const;
};

/// Built-in schemes: "ibug68" (68 points; groups of 11, 11, 9, 20, 17) and
/// "synthetic" (19 points, matching the synthetic face renderer).
/// Throws ConfigError for an unknown scheme or a landmark-count mismatch.
SemanticGroups assign_groups(std::size_t landmark_count, std::string_view scheme);

/// Landmark count a built-in scheme expects.
std::size_t scheme_landmark_count(std::string_view scheme);

/// Scale alpha about the group mean and new group center beta:
/// p -> alpha (p - mean) + beta.
struct GroupSimilarity {
  double scale = 1.0;
  Vec2 translation;
};

Vec2 group_mean(std::span<const Vec2> group);

LandmarkSet gather(const LandmarkSet& points, std::span<const int> indices);

LandmarkSet apply_group_transform(std::span<const Vec2> group, const GroupSimilarity& s);

/// Least-squares scale+translation taking `from` onto `to`:
/// alpha = sum (p - p_mean).(q - q_mean) / sum |p - p_mean|^2, beta = q_mean.
/// Throws DegenerateError when `from` has no spread.
GroupSimilarity fit_group_similarity(std::span<const Vec2> from, std::span<const Vec2> to);

/// Applies one similarity per group to the full landmark set.
LandmarkSet apply_group_transforms(const SemanticGroups& groups, const LandmarkSet& base,
                                   std::span<const GroupSimilarity> transforms);

struct KnownTransformRanges {
  double scale_min = 0.9;
  double scale_max = 1.1;
  /// Translation offsets are uniform in +-fraction * frame_width per axis.
  double translation_fraction = 0.05;
  /// Image width in normalized units.
  double frame_width = 2.0;
  int max_attempts = 50;
};

/// Samples a per-group similarity: alpha ~ U[scale_min, scale_max],
/// beta = mean + u with u uniform in the translation square. Mirror pairs
/// copy the mirrored transform of their partner. Rejects and resamples until
/// validate_structure accepts; throws DegenerateError after max_attempts.
std::vector<GroupSimilarity> sample_known_transforms(const SemanticGroups& groups, const LandmarkSet& base,
                                                     std::mt19937_64& rng,
                                                     const KnownTransformRanges& ranges = {});

/// True iff every vertical-order region pair keeps its order with disjoint
/// bounding boxes, and every mirror pair's fitted transforms are x-mirrors
/// of each other (same scale, mirrored center offset).
bool validate_structure(const SemanticGroups& groups, const LandmarkSet& base, const LandmarkSet& transformed);

/// The adversarial loop with every sign step projected onto the per-group
/// similarity family. A group whose displacement would exceed the clip is
/// pulled back toward the identity along the family, so outputs stay exact
/// similarities of the base groups.
std::vector<ManipulatedFace> generate_grouped_adversarial_set(const Embedder& embedder, const Image& img,
                                                              const LandmarkSet& P,
                                                              const SemanticGroups& groups,
                                                              const AttackConfig& cfg);

/// The projection used by generate_grouped_adversarial_set, exposed for tests.
LandmarkSet project_to_group_family(const SemanticGroups& groups, const LandmarkSet& P,
                                    const LandmarkSet& stepped, double clip);

}  // namespace gean
