#include <gtest/gtest.h>

#include "gean/error.hpp"
#include "gean/pipeline.hpp"
#include "test_support.hpp"

namespace gean {
namespace {

using testing::rel_err;

PipelineConfig small_config() {
  PipelineConfig cfg;
  set_config_value(cfg, "image_size", "32");
  cfg.detector.enc1_channels = 4;
  cfg.detector.enc2_channels = 6;
  cfg.warm_start_epochs = 2;
  cfg.epochs = 3;
  cfg.k_train = 2;
  cfg.k_test = 2;
  cfg.seed = 11;
  return cfg;
}

TEST(Metrics, PerfectPredictions) {
  const auto data = synth_dataset(6, 1);
  std::vector<LandmarkSet> preds;
  for (const Sample& s : data) preds.push_back(s.landmarks);
  const Evaluation ev = evaluate_predictions(preds, data, Normalization::kInterocular);
  EXPECT_EQ(ev.nme, 0.0);
  ASSERT_EQ(ev.ced.size(), 51u);
  for (const auto& [t, f] : ev.ced) EXPECT_EQ(f, 1.0);
}

TEST(Metrics, ConstantOffsetIsPercentOfNormalizer) {
  auto data = synth_dataset(4, 2);
  std::vector<LandmarkSet> preds;
  for (Sample& s : data) {
    s.interocular = 0.5;
    s.face_size = 0.25;
    LandmarkSet p = s.landmarks;
    for (Vec2& v : p) v.x += 0.005;
    preds.push_back(p);
  }
  EXPECT_NEAR(evaluate_predictions(preds, data, Normalization::kInterocular).nme, 1.0, 1e-9);
  const Evaluation ev = evaluate_predictions(preds, data, Normalization::kFaceSize);
  EXPECT_NEAR(ev.nme, 2.0, 1e-9);
  for (double e : ev.per_sample) EXPECT_NEAR(e, 0.02, 1e-12);
}

TEST(Metrics, CedGridAndMonotonicity) {
  const std::vector<double> t = ced_thresholds();
  ASSERT_EQ(t.size(), 51u);
  EXPECT_EQ(t.front(), 0.0);
  EXPECT_NEAR(t.back(), 0.1, 1e-15);
  for (std::size_t i = 1; i < t.size(); ++i) EXPECT_NEAR(t[i] - t[i - 1], 0.002, 1e-15);

  auto data = synth_dataset(20, 3);
  std::vector<LandmarkSet> preds;
  for (std::size_t s = 0; s < data.size(); ++s) {
    LandmarkSet p = data[s].landmarks;
    for (Vec2& v : p) v.y += 0.003 * double(s);
    preds.push_back(p);
  }
  const Evaluation ev = evaluate_predictions(preds, data, Normalization::kInterocular);
  for (std::size_t i = 1; i < ev.ced.size(); ++i) EXPECT_GE(ev.ced[i].second, ev.ced[i - 1].second);
  EXPECT_GE(ev.ced.front().second, 1.0 / 20 - 1e-12);
}

TEST(Metrics, Errors) {
  auto data = synth_dataset(2, 4);
  std::vector<LandmarkSet> preds{data[0].landmarks, data[1].landmarks};
  EXPECT_THROW(evaluate_predictions({preds[0]}, data, Normalization::kInterocular), ShapeError);
  preds[1].pop_back();
  EXPECT_THROW(evaluate_predictions(preds, data, Normalization::kInterocular), ShapeError);
  preds[1] = data[1].landmarks;
  data[1].interocular = 0.0;
  EXPECT_THROW(evaluate_predictions(preds, data, Normalization::kInterocular), Error);
  EXPECT_NO_THROW(evaluate_predictions(preds, data, Normalization::kFaceSize));
}

TEST(Inference, IdentityManipulatorWithOneBranchReturnsCoarse) {
  const PipelineConfig cfg = small_config();
  const ToyDetector det(cfg.detector, 5);
  const auto data = synth_dataset(3, 5, 32);
  const IdentityManipulator id;
  std::mt19937_64 rng(1);
  for (const Sample& s : data) {
    const InferenceResult r = infer(det, s.image, id, 1, rng);
    EXPECT_FALSE(r.fallback);
    ASSERT_EQ(r.branches.size(), 1u);
    for (std::size_t i = 0; i < r.landmarks.size(); ++i) EXPECT_LT(norm(r.landmarks[i] - r.coarse[i]), 1e-9);
  }
}

TEST(Inference, OutputsStayInFrame) {
  const PipelineConfig cfg = small_config();
  const ToyDetector det(cfg.detector, 6);
  const KnownTransformManipulator gk(assign_groups(19, "synthetic"), {}, kDefaultTpsRidge);
  std::mt19937_64 rng(2);
  for (const Sample& s : synth_dataset(5, 6, 32)) {
    const InferenceResult r = infer(det, s.image, gk, 3, rng);
    if (r.fallback) continue;
    EXPECT_EQ(r.branches.size(), 3u);
    EXPECT_EQ(r.scores.branches, 3);
    for (const Vec2& p : r.landmarks) {
      EXPECT_LE(std::abs(p.x), 1.0);
      EXPECT_LE(std::abs(p.y), 1.0);
    }
  }
  EXPECT_THROW(infer(det, synth_dataset(1, 6, 32)[0].image, gk, 0, rng), ConfigError);
}

TEST(Training, SampleGradientMatchesFiniteDifferences) {
  const PipelineConfig cfg = small_config();
  ToyDetector det(cfg.detector, 7);
  const Sample s = synth_dataset(1, 7, 32)[0];
  const KnownTransformManipulator gk(assign_groups(19, "synthetic"), {}, kDefaultTpsRidge);
  std::mt19937_64 rng(3);
  const auto faces = gk.manipulate(s.image, s.landmarks, 3, rng);

  for (bool aggregate : {true, false}) {
    std::vector<double> grad(det.parameter_count(), 0.0);
    sample_loss_and_grad(det, s.landmarks, faces, aggregate, ScoreWeighting::kDisplacement, kDefaultTpsRidge, grad);
    std::vector<double> scratch(det.parameter_count());
    const auto loss = [&] {
      return sample_loss_and_grad(det, s.landmarks, faces, aggregate, ScoreWeighting::kDisplacement,
                                  kDefaultTpsRidge, scratch);
    };
    std::mt19937_64 pick(4);
    std::uniform_int_distribution<std::size_t> idx(0, det.parameter_count() - 1);
    for (int t = 0; t < 10; ++t) {
      const std::size_t j = idx(pick);
      const double h = 1e-6, saved = det.parameters()[j];
      det.parameters()[j] = saved + h;
      const double fp = loss();
      det.parameters()[j] = saved - h;
      const double fm = loss();
      det.parameters()[j] = saved;
      EXPECT_LT(rel_err(grad[j], (fp - fm) / (2 * h), 1e-7), 1e-2) << "param " << j;
    }
  }
}

TEST(Training, GradientAccumulates) {
  const PipelineConfig cfg = small_config();
  const ToyDetector det(cfg.detector, 8);
  const Sample s = synth_dataset(1, 8, 32)[0];
  const IdentityManipulator id;
  std::mt19937_64 rng(5);
  const auto faces = id.manipulate(s.image, s.landmarks, 1, rng);
  std::vector<double> once(det.parameter_count(), 0.0), twice(det.parameter_count(), 0.0);
  sample_loss_and_grad(det, s.landmarks, faces, true, ScoreWeighting::kDisplacement, kDefaultTpsRidge, once);
  sample_loss_and_grad(det, s.landmarks, faces, true, ScoreWeighting::kDisplacement, kDefaultTpsRidge, twice);
  sample_loss_and_grad(det, s.landmarks, faces, true, ScoreWeighting::kDisplacement, kDefaultTpsRidge, twice);
  for (std::size_t j = 0; j < once.size(); j += 7) EXPECT_NEAR(twice[j], 2 * once[j], 1e-12 + 1e-12 * std::abs(once[j]));
  EXPECT_THROW(sample_loss_and_grad(det, s.landmarks, {}, true, ScoreWeighting::kDisplacement, kDefaultTpsRidge, once),
               ShapeError);
}

TEST(Training, SmokeRunIsDeterministicAndLoadable) {
  const PipelineConfig cfg = small_config();
  const auto data = synth_dataset(16, 9, 32);
  const ToyEmbedder emb;
  std::vector<double> seen;
  const TrainResult a = train(cfg, data, emb, [&](int epoch, double loss) {
    EXPECT_EQ(epoch, int(seen.size()) + 1);
    seen.push_back(loss);
  });
  const TrainResult b = train(cfg, data, emb);
  ASSERT_EQ(a.checkpoint.epoch_losses.size(), 3u);
  EXPECT_EQ(a.checkpoint.epoch_losses, seen);
  EXPECT_EQ(a.checkpoint.parameters, b.checkpoint.parameters);
  EXPECT_EQ(a.checkpoint.epoch_losses, b.checkpoint.epoch_losses);
  EXPECT_EQ(a.checkpoint.config.at("k_train"), "2");
  for (double p : a.checkpoint.parameters) EXPECT_EQ(p, double(float(p)));

  testing::TempDir dir("train");
  save_checkpoint(a.checkpoint, dir / "m.ckpt");
  const ToyDetector det = load_checkpoint(dir / "m.ckpt").detector();
  const Evaluation ev = evaluate(det, synth_dataset(4, 10, 32), cfg, emb);
  EXPECT_TRUE(std::isfinite(ev.nme));
}

TEST(Training, LossDecreases) {
  PipelineConfig cfg = small_config();
  cfg.epochs = 6;
  const auto data = synth_dataset(40, 12, 32);
  const TrainResult r = train(cfg, data, ToyEmbedder{});
  EXPECT_LT(r.checkpoint.epoch_losses.back(), r.checkpoint.epoch_losses.front());
}

// Default configuration end to end; takes about a minute.
TEST(Training, ReducesLandmarkErrorFivefold) {
  PipelineConfig cfg;
  cfg.seed = 3;
  const auto train_set = synth_dataset(100, 40);
  const auto test_set = synth_dataset(50, 41);
  const ToyEmbedder emb;
  const double before = evaluate(ToyDetector(cfg.detector, 1), test_set, cfg, emb).nme;
  const TrainResult r = train(cfg, train_set, emb);
  const double after = evaluate(r.checkpoint.detector(), test_set, cfg, emb).nme;
  EXPECT_LE(after * 5.0, before) << "untrained " << before << ", trained " << after;
  EXPECT_LT(r.checkpoint.epoch_losses.back(), r.checkpoint.epoch_losses.front());
}

TEST(Training, RejectsMismatchedData) {
  const PipelineConfig cfg = small_config();
  const ToyEmbedder emb;
  EXPECT_THROW(train(cfg, {}, emb), ConfigError);
  EXPECT_THROW(train(cfg, synth_dataset(2, 13, 64), emb), ShapeError);
  PipelineConfig bad = cfg;
  bad.batch_size = 0;
  EXPECT_THROW(train(bad, synth_dataset(2, 13, 32), emb), ConfigError);
}

}  // namespace
}  // namespace gean
