#include "gean/groups.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gean/error.hpp"

namespace gean {

namespace {

std::vector<int> range(int first, int last) {
  std::vector<int> v(last - first + 1);
  std::iota(v.begin(), v.end(), first);
  return v;
}

std::vector<int> concat(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

SemanticGroups finish(SemanticGroups g, std::size_t L) {
  g.membership.assign(L, -1);
  for (std::size_t gid = 0; gid < g.members.size(); ++gid) {
    for (int idx : g.members[gid]) g.membership[idx] = static_cast<int>(gid);
  }
  return g;
}

SemanticGroups ibug68() {
  SemanticGroups g;
  g.scheme = "ibug68";
  g.names = {"right_eye_brow", "left_eye_brow", "nose", "mouth", "jaw"};
  g.members = {concat(range(17, 21), range(36, 41)), concat(range(22, 26), range(42, 47)), range(27, 35),
               range(48, 67), range(0, 16)};
  g.regions = {{"right_brow", range(17, 21)}, {"right_eye", range(36, 41)}, {"left_brow", range(22, 26)},
               {"left_eye", range(42, 47)},   {"nose", range(27, 35)},      {"mouth", range(48, 67)}};
  g.vertical_orders = {{0, 1}, {2, 3}, {4, 5}};
  g.mirror_pairs = {{0, 1}};
  g.outer_eye_corners = {36, 45};
  return finish(std::move(g), 68);
}

// Layout produced by the synthetic face renderer:
//  0-2 right brow (outer, mid, inner)   3-4 right eye (outer, inner)
//  5-7 left brow (inner, mid, outer)    8-9 left eye (inner, outer)
//  10-12 nose (top, base left, base right)
//  13-15 mouth (left, mid, right)       16-18 jaw (left, chin, right)
SemanticGroups synthetic() {
  SemanticGroups g;
  g.scheme = "synthetic";
  g.names = {"right_eye_brow", "left_eye_brow", "nose", "mouth", "jaw"};
  g.members = {range(0, 4), range(5, 9), range(10, 12), range(13, 15), range(16, 18)};
  g.regions = {{"right_brow", range(0, 2)}, {"right_eye", range(3, 4)}, {"left_brow", range(5, 7)},
               {"left_eye", range(8, 9)},   {"nose", range(10, 12)},   {"mouth", range(13, 15)}};
  g.vertical_orders = {{0, 1}, {2, 3}, {4, 5}};
  g.mirror_pairs = {{0, 1}};
  g.outer_eye_corners = {3, 9};
  return finish(std::move(g), 19);
}

struct Box {
  double x0, y0, x1, y1;
};

Box bounding_box(const LandmarkSet& pts, std::span<const int> idx) {
  Box b{pts[idx[0]].x, pts[idx[0]].y, pts[idx[0]].x, pts[idx[0]].y};
  for (int i : idx) {
    b.x0 = std::min(b.x0, pts[i].x);
    b.y0 = std::min(b.y0, pts[i].y);
    b.x1 = std::max(b.x1, pts[i].x);
    b.y1 = std::max(b.y1, pts[i].y);
  }
  return b;
}

bool overlaps(const Box& a, const Box& b) {
  return a.x0 <= b.x1 && b.x0 <= a.x1 && a.y0 <= b.y1 && b.y0 <= a.y1;
}

constexpr double kMirrorTolerance = 1e-9;

}  // namespace

std::vector<std::size_t> SemanticGroups::sizes() const {
  std::vector<std::size_t> s;
  for (const auto& m : members) s.push_back(m.size());
  return s;
}

std::size_t scheme_landmark_count(std::string_view scheme) {
  if (scheme == "ibug68") return 68;
  if (scheme == "synthetic") return 19;
  throw ConfigError("unknown landmark grouping scheme '" + std::string(scheme) + "'");
}

SemanticGroups assign_groups(std::size_t landmark_count, std::string_view scheme) {
  const std::size_t expected = scheme_landmark_count(scheme);
  if (landmark_count != expected) {
    throw ConfigError("scheme '" + std::string(scheme) + "' is defined for " + std::to_string(expected) +
                      " landmarks, got " + std::to_string(landmark_count));
  }
  return scheme == "ibug68" ? ibug68() : synthetic();
}

Vec2 group_mean(std::span<const Vec2> group) {
  if (group.empty()) throw ShapeError("group_mean: empty group");
  Vec2 s;
  for (const Vec2& p : group) s += p;
  return (1.0 / static_cast<double>(group.size())) * s;
}

LandmarkSet gather(const LandmarkSet& points, std::span<const int> indices) {
  LandmarkSet out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(points.at(i));
  return out;
}

LandmarkSet apply_group_transform(std::span<const Vec2> group, const GroupSimilarity& s) {
  const Vec2 mean = group_mean(group);
  LandmarkSet out;
  out.reserve(group.size());
  for (const Vec2& p : group) out.push_back(s.scale * (p - mean) + s.translation);
  return out;
}

GroupSimilarity fit_group_similarity(std::span<const Vec2> from, std::span<const Vec2> to) {
  if (from.size() != to.size()) throw ShapeError("fit_group_similarity: size mismatch");
  if (from.size() < 2) throw ShapeError("fit_group_similarity: need at least 2 points");
  const Vec2 pm = group_mean(from);
  const Vec2 qm = group_mean(to);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < from.size(); ++j) {
    const Vec2 p = from[j] - pm;
    num += dot(p, to[j] - qm);
    den += dot(p, p);
  }
  if (!(den > 0.0)) throw DegenerateError("fit_group_similarity: source group has no spread");
  return {num / den, qm};
}

LandmarkSet apply_group_transforms(const SemanticGroups& groups, const LandmarkSet& base,
                                   std::span<const GroupSimilarity> transforms) {
  if (base.size() != groups.landmark_count()) throw ShapeError("apply_group_transforms: landmark count");
  if (transforms.size() != groups.group_count()) throw ShapeError("apply_group_transforms: group count");
  LandmarkSet out = base;
  for (std::size_t g = 0; g < groups.group_count(); ++g) {
    const auto& idx = groups.members[g];
    const LandmarkSet moved = apply_group_transform(gather(base, idx), transforms[g]);
    for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] = moved[j];
  }
  return out;
}

bool validate_structure(const SemanticGroups& groups, const LandmarkSet& base, const LandmarkSet& transformed) {
  if (base.size() != groups.landmark_count() || transformed.size() != base.size()) {
    throw ShapeError("validate_structure: landmark count mismatch");
  }
  for (const auto& order : groups.vertical_orders) {
    const auto& upper = groups.regions[order.upper].landmarks;
    const auto& lower = groups.regions[order.lower].landmarks;
    if (overlaps(bounding_box(transformed, upper), bounding_box(transformed, lower))) return false;
    if (!(group_mean(gather(transformed, upper)).y < group_mean(gather(transformed, lower)).y)) return false;
  }
  for (const auto& pair : groups.mirror_pairs) {
    const LandmarkSet a0 = gather(base, groups.members[pair.first]);
    const LandmarkSet b0 = gather(base, groups.members[pair.second]);
    const GroupSimilarity a = fit_group_similarity(a0, gather(transformed, groups.members[pair.first]));
    const GroupSimilarity b = fit_group_similarity(b0, gather(transformed, groups.members[pair.second]));
    const Vec2 ua = a.translation - group_mean(a0);
    const Vec2 ub = b.translation - group_mean(b0);
    if (std::abs(a.scale - b.scale) > kMirrorTolerance) return false;
    if (std::abs(ua.x + ub.x) > kMirrorTolerance || std::abs(ua.y - ub.y) > kMirrorTolerance) return false;
  }
  return true;
}

std::vector<GroupSimilarity> sample_known_transforms(const SemanticGroups& groups, const LandmarkSet& base,
                                                     std::mt19937_64& rng, const KnownTransformRanges& ranges) {
  if (base.size() != groups.landmark_count()) throw ShapeError("sample_known_transforms: landmark count");
  if (!(ranges.scale_min > 0.0) || ranges.scale_max < ranges.scale_min || ranges.translation_fraction < 0.0 ||
      ranges.max_attempts < 1) {
    throw ConfigError("sample_known_transforms: invalid ranges");
  }
  const double half = ranges.translation_fraction * ranges.frame_width;
  std::uniform_real_distribution<double> scale_dist(ranges.scale_min, ranges.scale_max);
  std::uniform_real_distribution<double> shift_dist(-half, half);

  std::vector<Vec2> means;
  for (const auto& m : groups.members) means.push_back(group_mean(gather(base, m)));

  std::vector<int> mirror_of(groups.group_count(), -1);
  for (const auto& pair : groups.mirror_pairs) mirror_of[pair.second] = pair.first;

  for (int attempt = 0; attempt < ranges.max_attempts; ++attempt) {
    std::vector<double> scales(groups.group_count());
    std::vector<Vec2> offsets(groups.group_count());
    for (std::size_t g = 0; g < groups.group_count(); ++g) {
      scales[g] = scale_dist(rng);
      const double ux = shift_dist(rng);
      const double uy = shift_dist(rng);
      offsets[g] = {ux, uy};
    }
    for (std::size_t g = 0; g < groups.group_count(); ++g) {
      if (mirror_of[g] < 0) continue;
      scales[g] = scales[mirror_of[g]];
      offsets[g] = {-offsets[mirror_of[g]].x, offsets[mirror_of[g]].y};
    }
    std::vector<GroupSimilarity> transforms(groups.group_count());
    for (std::size_t g = 0; g < groups.group_count(); ++g) transforms[g] = {scales[g], means[g] + offsets[g]};
    if (validate_structure(groups, base, apply_group_transforms(groups, base, transforms))) return transforms;
  }
  throw DegenerateError("sample_known_transforms: no structurally valid sample in " +
                        std::to_string(ranges.max_attempts) + " attempts");
}

LandmarkSet project_to_group_family(const SemanticGroups& groups, const LandmarkSet& P,
                                    const LandmarkSet& stepped, double clip) {
  if (P.size() != groups.landmark_count() || stepped.size() != P.size()) {
    throw ShapeError("project_to_group_family: landmark count mismatch");
  }
  LandmarkSet out = P;
  for (const auto& idx : groups.members) {
    const LandmarkSet base = gather(P, idx);
    const Vec2 mean = group_mean(base);
    GroupSimilarity s = fit_group_similarity(base, gather(stepped, idx));
    // Displacement of member j is (alpha - 1)(p_j - mean) + (beta - mean),
    // linear along the ray from the identity, so scaling back is exact.
    double worst = 0.0;
    for (const Vec2& p : base) {
      const Vec2 d = (s.scale - 1.0) * (p - mean) + (s.translation - mean);
      worst = std::max({worst, std::abs(d.x), std::abs(d.y)});
    }
    if (worst > clip) {
      const double t = clip / worst;
      s = {1.0 + t * (s.scale - 1.0), mean + t * (s.translation - mean)};
    }
    const LandmarkSet moved = apply_group_transform(base, s);
    for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] = moved[j];
  }
  // Rounding may leave a coordinate an ulp past the bound.
  return clip_displacement(out, P, clip);
}

std::vector<ManipulatedFace> generate_grouped_adversarial_set(const Embedder& embedder, const Image& img,
                                                              const LandmarkSet& P,
                                                              const SemanticGroups& groups,
                                                              const AttackConfig& cfg) {
  if (P.size() != groups.landmark_count()) throw ShapeError("grouped attack: landmark count mismatch");
  return detail::run_attack(embedder, img, P, cfg,
                            [&groups](const LandmarkSet& base, const LandmarkSet& stepped, double clip) {
                              return project_to_group_family(groups, base, stepped, clip);
                            });
}

}  // namespace gean
