#include "gean/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gean/error.hpp"

namespace gean {

void AttackConfig::validate() const {
  if (branches < 1) throw ConfigError("attack: branch count K must be >= 1");
  if (!(tau >= 0.0)) throw ConfigError("attack: tau must be >= 0");
  if (!(clip > 0.0)) throw ConfigError("attack: clip threshold must be > 0");
  if (!(step > 0.0)) throw ConfigError("attack: step size must be > 0");
  if (max_iters < 1) throw ConfigError("attack: max_iters must be >= 1");
  if (!(ridge >= 0.0)) throw ConfigError("attack: ridge must be >= 0");
}

double PeerSet::total_distance(const EmbeddingVector& z) const {
  double s = 0.0;
  for (const auto& peer : embeddings_) s += embedding_distance(z, peer);
  return s;
}

double PeerSet::min_distance(const EmbeddingVector& z) const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& peer : embeddings_) m = std::min(m, embedding_distance(z, peer));
  return m;
}

namespace {

// Gradient of the summed distance with P_adv's warp and embedding precomputed.
std::vector<Vec2> cost_grad_at(const Image& img, const LandmarkSet& P, const LandmarkSet& P_adv,
                               const Image& warped, const EmbeddingVector& z, const PeerSet& peers,
                               double ridge) {
  std::vector<double> cot(z.size(), 0.0);
  for (const auto& peer : peers.embeddings()) {
    const double d = embedding_distance(z, peer);
    if (d == 0.0) continue;
    for (std::size_t i = 0; i < cot.size(); ++i) cot[i] += (z[i] - peer[i]) / d;
  }
  if (std::all_of(cot.begin(), cot.end(), [](double v) { return v == 0.0; })) {
    return std::vector<Vec2>(P_adv.size());
  }
  const Image pixel_grad = embed_resized_input_grad(peers.embedder(), warped, EmbeddingVector(std::move(cot)));
  return warp_vjp(img, P, P_adv, pixel_grad, ridge);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// p + clamp(a - p), nudged toward p until the recomputed offset a' - p is
// within the bound in floating point too.
double clip_coordinate(double p, double a, double clip) {
  if (std::abs(a - p) <= clip) return a;
  double q = p + std::clamp(a - p, -clip, clip);
  while (std::abs(q - p) > clip) q = std::nextafter(q, p);
  return q;
}

}  // namespace

double attack_cost(const Image& img, const LandmarkSet& P, const LandmarkSet& P_adv, const PeerSet& peers,
                   double ridge) {
  if (peers.empty()) throw ShapeError("attack_cost: peer set is empty");
  const Image warped = warp_image(img, P, P_adv, ridge);
  return peers.total_distance(embed_resized(peers.embedder(), warped));
}

std::vector<Vec2> cost_grad(const Image& img, const LandmarkSet& P, const LandmarkSet& P_adv,
                            const PeerSet& peers, double ridge) {
  if (peers.empty()) throw ShapeError("cost_grad: peer set is empty");
  const Image warped = warp_image(img, P, P_adv, ridge);
  const EmbeddingVector z = embed_resized(peers.embedder(), warped);
  return cost_grad_at(img, P, P_adv, warped, z, peers, ridge);
}

LandmarkSet fgsm_step(const LandmarkSet& P_adv, std::span<const Vec2> g, double step) {
  if (P_adv.size() != g.size()) throw ShapeError("fgsm_step: gradient size mismatch");
  LandmarkSet out(P_adv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {P_adv[i].x + step * sign(g[i].x), P_adv[i].y + step * sign(g[i].y)};
  }
  return out;
}

LandmarkSet clip_displacement(const LandmarkSet& P_adv, const LandmarkSet& P, double clip) {
  if (P_adv.size() != P.size()) throw ShapeError("clip_displacement: size mismatch");
  LandmarkSet out(P.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {clip_coordinate(P[i].x, P_adv[i].x, clip), clip_coordinate(P[i].y, P_adv[i].y, clip)};
  }
  return out;
}

namespace detail {

std::vector<ManipulatedFace> run_attack(const Embedder& embedder, const Image& img, const LandmarkSet& P,
                                        const AttackConfig& cfg, const StepProjection& project) {
  cfg.validate();
  if (P.size() < 3) throw ShapeError("attack: need at least 3 control points");

  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution coin(0.5);

  PeerSet peers(embedder);
  peers.add(img);
  std::vector<ManipulatedFace> faces;
  faces.reserve(cfg.branches);

  for (int k = 0; k < cfg.branches; ++k) {
    ManipulatedFace face;
    face.control_source = P;
    LandmarkSet adv = P;
    Image current = warp_image(img, P, adv, cfg.ridge);
    EmbeddingVector z = embed_resized(embedder, current);
    int iters = 0;
    try {
      while (peers.min_distance(z) < cfg.tau) {
        if (iters >= cfg.max_iters) {
          face.status = BranchStatus::kMaxIterations;
          break;
        }
        std::vector<Vec2> g = cost_grad_at(img, P, adv, current, z, peers, cfg.ridge);
        // The summed distance is not differentiable where the candidate
        // coincides with every peer (always true on the first step of the
        // first branch); take a random sign step from there.
        if (std::all_of(g.begin(), g.end(), [](Vec2 v) { return v.x == 0.0 && v.y == 0.0; })) {
          for (Vec2& v : g) v = {coin(rng) ? 1.0 : -1.0, coin(rng) ? 1.0 : -1.0};
        }
        const LandmarkSet stepped = fgsm_step(adv, g, cfg.step);
        LandmarkSet next = project ? project(P, stepped, cfg.clip) : clip_displacement(stepped, P, cfg.clip);
        Image next_img = warp_image(img, P, next, cfg.ridge);
        adv = std::move(next);
        current = std::move(next_img);
        z = embed_resized(embedder, current);
        ++iters;
        face.cost_history.push_back(peers.total_distance(z));
      }
    } catch (const DegenerateError& e) {
      face.status = BranchStatus::kAborted;
      face.diagnostic = std::string("branch ") + std::to_string(k) + ": " + e.what();
    }
    face.iterations_used = iters;
    face.control_target = adv;
    face.displacement.resize(P.size());
    for (std::size_t i = 0; i < P.size(); ++i) face.displacement[i] = adv[i] - P[i];
    face.image = std::move(current);
    peers.add(std::move(z));
    faces.push_back(std::move(face));
  }
  return faces;
}

}  // namespace detail

std::vector<ManipulatedFace> generate_adversarial_set(const Embedder& embedder, const Image& img,
                                                      const LandmarkSet& P, const AttackConfig& cfg) {
  return detail::run_attack(embedder, img, P, cfg, {});
}

}  // namespace gean
