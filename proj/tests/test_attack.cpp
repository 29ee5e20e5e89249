#include <gtest/gtest.h>

#include <random>

#include "gean/attack.hpp"
#include "gean/dataset.hpp"
#include "gean/error.hpp"
#include "test_support.hpp"

namespace gean {
namespace {

using testing::rel_err;

struct Face {
  Image image;
  LandmarkSet P;
};

Face synthetic_face(std::uint64_t seed) {
  const Sample s = synth_dataset(1, seed, 64).front();
  return {s.image, s.landmarks};
}

LandmarkSet jitter(const LandmarkSet& P, std::mt19937_64& rng, double amount) {
  std::uniform_real_distribution<double> u(-amount, amount);
  LandmarkSet q = P;
  for (Vec2& v : q) v += Vec2{u(rng), u(rng)};
  return q;
}

AttackConfig toy_config(int K, double tau, std::uint64_t seed) {
  AttackConfig c;
  c.branches = K;
  c.tau = tau;
  c.seed = seed;
  return c;
}

double linf(const LandmarkSet& a, const LandmarkSet& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max({m, std::abs(a[i].x - b[i].x), std::abs(a[i].y - b[i].y)});
  return m;
}

TEST(AttackCost, IdentityAgainstOriginalIsZero) {
  const ToyEmbedder e;
  const Face f = synthetic_face(1);
  PeerSet peers(e);
  peers.add(f.image);
  EXPECT_EQ(attack_cost(f.image, f.P, f.P, peers), 0.0);
  EXPECT_THROW(attack_cost(f.image, f.P, f.P, PeerSet(e)), ShapeError);
}

TEST(AttackCost, SumsOverPeers) {
  const ToyEmbedder e;
  const Face f = synthetic_face(2);
  std::mt19937_64 rng(2);
  const LandmarkSet Q = jitter(f.P, rng, 0.03);
  PeerSet one(e), two(e);
  one.add(f.image);
  two.add(f.image);
  two.add(f.image);
  EXPECT_EQ(attack_cost(f.image, f.P, Q, two), 2.0 * attack_cost(f.image, f.P, Q, one));
}

TEST(AttackCost, EqualsDirectRecomposition) {
  const ToyEmbedder e;
  const Face f = synthetic_face(3);
  const Face other = synthetic_face(4);
  std::mt19937_64 rng(3);
  const LandmarkSet Q = jitter(f.P, rng, 0.03);
  PeerSet peers(e);
  peers.add(other.image);
  const double direct = embedding_distance(e.embed(warp_image(f.image, f.P, Q)), e.embed(other.image));
  EXPECT_NEAR(attack_cost(f.image, f.P, Q, peers), direct, 1e-14);
}

TEST(CostGrad, ConstantImageHasZeroGradient) {
  const ToyEmbedder e;
  const Face f = synthetic_face(5);
  std::mt19937_64 rng(5);
  const Image flat(64, 64, 0.4);
  PeerSet peers(e);
  peers.add(f.image);
  for (const Vec2& g : cost_grad(flat, f.P, jitter(f.P, rng, 0.03), peers)) EXPECT_EQ(g, (Vec2{0, 0}));
}

TEST(CostGrad, MatchesFiniteDifferences) {
  const ToyEmbedder e;
  const Face f = synthetic_face(6);
  std::mt19937_64 rng(6);
  const LandmarkSet Q = jitter(f.P, rng, 0.03);
  PeerSet peers(e);
  peers.add(f.image);
  peers.add(synthetic_face(7).image);
  const std::vector<Vec2> g = cost_grad(f.image, f.P, Q, peers);
  std::uniform_int_distribution<int> pick(0, int(Q.size()) * 2 - 1);
  const double h = 1e-4;
  for (int n = 0; n < 10; ++n) {
    const int c = pick(rng);
    const std::size_t i = c / 2;
    LandmarkSet plus = Q, minus = Q;
    (c % 2 ? plus[i].y : plus[i].x) += h;
    (c % 2 ? minus[i].y : minus[i].x) -= h;
    const double fd = (attack_cost(f.image, f.P, plus, peers) - attack_cost(f.image, f.P, minus, peers)) / (2 * h);
    const double an = c % 2 ? g[i].y : g[i].x;
    EXPECT_LT(rel_err(an, fd, 1e-9), 2e-2) << "landmark " << i << " axis " << c % 2 << ": " << an << " vs " << fd;
  }
}

TEST(CostGrad, AdditiveOverDisjointPeerSets) {
  const ToyEmbedder e;
  const Face f = synthetic_face(8);
  std::mt19937_64 rng(8);
  const LandmarkSet Q = jitter(f.P, rng, 0.03);
  const Image a = synthetic_face(9).image, b = synthetic_face(10).image;
  PeerSet s1(e), s2(e), both(e);
  s1.add(a);
  s2.add(b);
  both.add(a);
  both.add(b);
  const auto g1 = cost_grad(f.image, f.P, Q, s1);
  const auto g2 = cost_grad(f.image, f.P, Q, s2);
  const auto g12 = cost_grad(f.image, f.P, Q, both);
  for (std::size_t i = 0; i < Q.size(); ++i) {
    EXPECT_NEAR(g12[i].x, g1[i].x + g2[i].x, 1e-8);
    EXPECT_NEAR(g12[i].y, g1[i].y + g2[i].y, 1e-8);
  }
}

TEST(FgsmStep, SignSteps) {
  const LandmarkSet P{{0.1, 0.2}, {0.3, -0.4}};
  EXPECT_EQ(fgsm_step(P, std::vector<Vec2>(2), 0.01), P);
  const std::vector<Vec2> g{{3.7, -0.2}, {0.0, 1e-30}};
  const LandmarkSet once = fgsm_step(P, g, 0.01);
  EXPECT_EQ(once[0], (Vec2{0.1 + 0.01, 0.2 - 0.01}));
  EXPECT_EQ(once[1], (Vec2{0.3, -0.4 + 0.01}));
  const LandmarkSet twice = fgsm_step(once, g, 0.01);
  EXPECT_NEAR(twice[0].x - P[0].x, 0.02, 1e-15);
  EXPECT_NEAR(twice[0].y - P[0].y, -0.02, 1e-15);
  EXPECT_THROW(fgsm_step(P, std::vector<Vec2>(3), 0.01), ShapeError);
}

TEST(ClipDisplacement, ProjectsPerCoordinate) {
  const LandmarkSet P{{0, 0}};
  EXPECT_EQ(clip_displacement({{0.1, -0.02}}, P, 0.05), (LandmarkSet{{0.05, -0.02}}));
  EXPECT_EQ(clip_displacement({{0.01, -0.02}}, P, 0.05), (LandmarkSet{{0.01, -0.02}}));
}

TEST(ClipDisplacement, IdempotentAndExactBound) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 2000; ++i) {
    const LandmarkSet P{{u(rng), u(rng)}, {u(rng), u(rng)}};
    const LandmarkSet A = jitter(P, rng, 0.2);
    const double clip = 0.01 + 0.1 * std::abs(u(rng));
    const LandmarkSet c = clip_displacement(A, P, clip);
    EXPECT_LE(linf(c, P), clip);
    EXPECT_EQ(clip_displacement(c, P, clip), c);
  }
}

TEST(AttackConfig, Validation) {
  AttackConfig c;
  EXPECT_NO_THROW(c.validate());
  for (auto mutate : std::vector<void (*)(AttackConfig&)>{
           [](AttackConfig& a) { a.branches = 0; }, [](AttackConfig& a) { a.tau = -1; },
           [](AttackConfig& a) { a.clip = 0; }, [](AttackConfig& a) { a.step = 0; },
           [](AttackConfig& a) { a.max_iters = 0; }, [](AttackConfig& a) { a.ridge = -1; }}) {
    AttackConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), ConfigError);
  }
}

TEST(GenerateAdversarialSet, ZeroTauGivesIdentityFaces) {
  const ToyEmbedder e;
  const Face f = synthetic_face(11);
  const auto faces = generate_adversarial_set(e, f.image, f.P, toy_config(3, 0.0, 1));
  ASSERT_EQ(faces.size(), 3u);
  for (const ManipulatedFace& m : faces) {
    EXPECT_EQ(m.iterations_used, 0);
    EXPECT_EQ(m.status, BranchStatus::kConverged);
    EXPECT_EQ(m.control_target, f.P);
    EXPECT_EQ(m.image, f.image);
  }
}

TEST(GenerateAdversarialSet, SingleBranchReachesTau) {
  const ToyEmbedder e;
  const Face f = synthetic_face(12);
  AttackConfig cfg = toy_config(1, 0.05, 2);
  cfg.clip = 0.05 * bbox_width(f.P);
  const auto faces = generate_adversarial_set(e, f.image, f.P, cfg);
  ASSERT_EQ(faces.size(), 1u);
  const double d = embedding_distance(e.embed(faces[0].image), e.embed(f.image));
  EXPECT_TRUE(d >= cfg.tau || faces[0].status == BranchStatus::kMaxIterations) << d;
  EXPECT_EQ(faces[0].image, warp_image(f.image, f.P, faces[0].control_target));
}

TEST(GenerateAdversarialSet, BranchesAreMutuallyDistantAndBounded) {
  const ToyEmbedder e;
  int non_decreasing = 0, steps = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Face f = synthetic_face(20 + seed);
    AttackConfig cfg = toy_config(3, 0.05, seed);
    cfg.clip = 0.05 * bbox_width(f.P);
    const auto faces = generate_adversarial_set(e, f.image, f.P, cfg);
    ASSERT_EQ(faces.size(), 3u);
    std::vector<EmbeddingVector> zs{e.embed(f.image)};
    bool capped = false;
    for (const ManipulatedFace& m : faces) {
      EXPECT_NE(m.status, BranchStatus::kAborted) << m.diagnostic;
      capped = capped || m.status == BranchStatus::kMaxIterations;
      EXPECT_LE(linf(m.control_target, f.P), cfg.clip);
      for (std::size_t i = 0; i < f.P.size(); ++i) {
        EXPECT_LE(std::abs(m.displacement[i].x), cfg.clip);
        EXPECT_LE(std::abs(m.displacement[i].y), cfg.clip);
      }
      EXPECT_LE(m.iterations_used, cfg.max_iters);
      zs.push_back(e.embed(m.image));
      for (std::size_t t = 1; t < m.cost_history.size(); ++t) {
        ++steps;
        non_decreasing += m.cost_history[t] >= m.cost_history[t - 1];
      }
    }
    if (capped) continue;
    for (std::size_t a = 0; a < zs.size(); ++a)
      for (std::size_t b = a + 1; b < zs.size(); ++b) EXPECT_GE(embedding_distance(zs[a], zs[b]), cfg.tau);
  }
  // Sign ascent is not monotone in general; most accepted steps still raise the cost.
  if (steps > 0) {
    EXPECT_GE(double(non_decreasing) / steps, 0.8);
  }
}

TEST(GenerateAdversarialSet, Deterministic) {
  const ToyEmbedder e;
  const Face f = synthetic_face(30);
  const AttackConfig cfg = toy_config(2, 0.05, 5);
  const auto a = generate_adversarial_set(e, f.image, f.P, cfg);
  const auto b = generate_adversarial_set(e, f.image, f.P, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].control_target, b[k].control_target);
    EXPECT_EQ(a[k].image, b[k].image);
  }
}

TEST(GenerateAdversarialSet, MaxIterationsIsFlagged) {
  const ToyEmbedder e;
  const Face f = synthetic_face(31);
  AttackConfig cfg = toy_config(1, 1.9, 0);
  cfg.max_iters = 3;
  const auto faces = generate_adversarial_set(e, f.image, f.P, cfg);
  EXPECT_EQ(faces[0].status, BranchStatus::kMaxIterations);
  EXPECT_EQ(faces[0].iterations_used, 3);
}

}  // namespace
}  // namespace gean
