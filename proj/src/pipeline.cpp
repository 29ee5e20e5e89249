#include "gean/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gean/error.hpp"

namespace gean {

namespace {

LandmarkSet clamp_unit(LandmarkSet P) {
  for (Vec2& p : P) p = {std::clamp(p.x, -1.0, 1.0), std::clamp(p.y, -1.0, 1.0)};
  return P;
}

class Optimizer {
 public:
  Optimizer(const PipelineConfig& cfg, double lr, std::size_t n) : cfg_(cfg), lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::vector<double>& grad) {
    ++t_;
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.momentum * m_[i] + grad[i] + cfg_.weight_decay * params[i];
        params[i] -= lr_ * m_[i];
      }
      return;
    }
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    // Decoupled decay: its strength does not depend on the scale of the loss.
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i] -= lr_ * cfg_.weight_decay * params[i];
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  const PipelineConfig& cfg_;
  double lr_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// Cross-entropy between each map's spatial softmax and its normalized
// Gaussian target; the logit gradient is softmax - target.
double heatmap_loss_and_grad(const ToyDetector& det, const Sample& s, double sigma, std::span<double> grad) {
  const ToyDetector::ForwardState st = det.forward(s.image);
  const HeatmapStack& r = st.heatmaps;
  const HeatmapStack target = render_gaussian_heatmaps(s.landmarks, sigma, r.height, r.width);
  nn::Tensor z_bar(r.count, r.height, r.width);
  double loss = 0.0;
  for (int i = 0; i < r.count; ++i) {
    const auto ri = r.map(i);
    const auto ti = target.map(i);
    const double zeta = std::accumulate(ri.begin(), ri.end(), 0.0);
    const double t_mass = std::accumulate(ti.begin(), ti.end(), 0.0);
    if (!(t_mass > 0.0)) continue;
    double* dst = z_bar.channel(i);
    for (std::size_t u = 0; u < ri.size(); ++u) {
      const double t = ti[u] / t_mass;
      if (t > 0.0) loss -= t * (std::log(std::max(ri[u], std::numeric_limits<double>::min())) - std::log(zeta));
      dst[u] = ri[u] / zeta - t;
    }
  }
  det.backward_logits(st, z_bar, grad);
  return loss / r.count;
}

}  // namespace

LandmarkSet detect(const ToyDetector& det, const Image& img) {
  return clamp_unit(soft_argmax(det.predict_heatmaps(img)).points);
}

double sample_loss_and_grad(const ToyDetector& det, const LandmarkSet& truth,
                            const std::vector<ManipulatedFace>& faces, bool aggregate, ScoreWeighting weighting,
                            double ridge, std::span<double> grad) {
  const int K = static_cast<int>(faces.size());
  if (K < 1) throw ShapeError("sample_loss_and_grad: no faces");
  std::vector<ToyDetector::ForwardState> states;
  std::vector<SoftArgmaxResult> decoded;
  std::vector<LandmarkSet> compensated;
  std::vector<TpsTransform> inverse;
  std::vector<DisplacementField> displacements;
  for (const ManipulatedFace& f : faces) {
    states.push_back(det.forward(f.image));
    decoded.push_back(soft_argmax(states.back().heatmaps));
    if (f.control_source == f.control_target) {
      inverse.emplace_back();
      compensated.push_back(decoded.back().points);
    } else {
      inverse.push_back(fit_tps(f.control_target, f.control_source, ridge));
      compensated.push_back(eval_tps(inverse.back(), decoded.back().points));
    }
    displacements.push_back(f.displacement);
  }

  double loss = 0.0;
  std::vector<LandmarkSet> g;
  if (aggregate) {
    const ScoreMatrix sc = branch_scores(displacements, weighting);
    loss = aggregation_loss(truth, compensated, sc);
    g = aggregation_loss_grad(truth, compensated, sc);
  } else {
    // Each face is its own single-branch item; items are averaged.
    const ScoreMatrix one{static_cast<int>(truth.size()), 1, std::vector<double>(truth.size(), 1.0)};
    for (int k = 0; k < K; ++k) {
      const std::span<const LandmarkSet> item(&compensated[k], 1);
      loss += aggregation_loss(truth, item, one) / K;
      LandmarkSet gk = aggregation_loss_grad(truth, item, one)[0];
      for (Vec2& v : gk) v = (1.0 / K) * v;
      g.push_back(std::move(gk));
    }
  }

  for (int k = 0; k < K; ++k) {
    LandmarkSet cot = g[k];
    if (!inverse[k].control_points.empty()) {
      for (std::size_t i = 0; i < cot.size(); ++i) {
        const Jacobian2 J = inverse[k].jacobian(decoded[k].points[i]);
        const Vec2 c = g[k][i];
        cot[i] = {J[0][0] * c.x + J[1][0] * c.y, J[0][1] * c.x + J[1][1] * c.y};
      }
    }
    const HeatmapStack h_bar = soft_argmax_backward(states[k].heatmaps, decoded[k], cot);
    det.backward(states[k], h_bar, grad);
  }
  return loss;
}

TrainResult train(const PipelineConfig& cfg, const std::vector<Sample>& data, const Embedder& embedder,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");
  for (const Sample& s : data) {
    if (s.image.width() != cfg.detector.width || s.image.height() != cfg.detector.height) {
      throw ShapeError("train: sample '" + s.name + "' does not match image_size " +
                       std::to_string(cfg.detector.width));
    }
    if (static_cast<int>(s.landmarks.size()) != cfg.detector.landmarks) {
      throw ShapeError("train: sample '" + s.name + "' has the wrong landmark count");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  ToyDetector det(cfg.detector, rng());
  const std::unique_ptr<Manipulator> manipulator = make_manipulator(cfg, embedder);
  TrainResult result;
  std::vector<double> grad(det.parameter_count());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto run_epochs = [&](int epochs, bool warm) {
    Optimizer opt(cfg, warm ? cfg.warm_start_learning_rate : cfg.learning_rate, det.parameter_count());
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      double epoch_loss = 0.0;
      int used = 0;
      for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
        std::fill(grad.begin(), grad.end(), 0.0);
        int in_batch = 0;
        for (std::size_t j = b; j < std::min(order.size(), b + cfg.batch_size); ++j) {
          const Sample& s = data[order[j]];
          double loss = 0.0;
          if (warm) {
            loss = heatmap_loss_and_grad(det, s, cfg.heatmap_sigma, grad);
          } else {
            const LandmarkSet P = perturb_ground_truth(s.landmarks, cfg.sigma_eta, rng);
            std::vector<ManipulatedFace> faces;
            try {
              faces = manipulator->manipulate(s.image, P, cfg.k_train, rng);
              loss = sample_loss_and_grad(det, s.landmarks, faces, cfg.aggregate, cfg.weighting, cfg.attack.ridge,
                                          grad);
            } catch (const DegenerateError& e) {
              ++result.skipped_samples;
              result.warnings.push_back("skipped sample '" + s.name + "': " + e.what());
              continue;
            }
          }
          if (!std::isfinite(loss)) {
            throw Error("training diverged: non-finite loss on sample '" + s.name + "' in epoch " +
                        std::to_string(epoch + 1));
          }
          epoch_loss += loss;
          ++used;
          ++in_batch;
        }
        if (in_batch == 0) continue;
        for (double& g : grad) g /= in_batch;
        opt.step(det.parameters(), grad);
      }
      const double mean = used > 0 ? epoch_loss / used : 0.0;
      if (!warm) {
        result.checkpoint.epoch_losses.push_back(mean);
        if (on_epoch) on_epoch(epoch + 1, mean);
      }
    }
  };
  run_epochs(cfg.warm_start_epochs, true);
  run_epochs(cfg.epochs, false);

  det.round_to_float();
  result.checkpoint.architecture = cfg.detector;
  result.checkpoint.parameters.assign(det.parameters().begin(), det.parameters().end());
  result.checkpoint.config = config_to_map(cfg);
  return result;
}

InferenceResult infer(const ToyDetector& det, const Image& img, const Manipulator& manipulator, int K,
                      std::mt19937_64& rng, ScoreWeighting weighting, double ridge) {
  if (K < 1) throw ConfigError("infer: K must be >= 1");
  InferenceResult r;
  r.coarse = detect(det, img);
  std::vector<ManipulatedFace> faces;
  try {
    faces = manipulator.manipulate(img, r.coarse, K, rng);
    std::vector<DisplacementField> displacements;
    for (const ManipulatedFace& f : faces) {
      const LandmarkSet predicted = detect(det, f.image);
      r.branches.push_back(clamp_unit(invert_landmarks(f.control_source, f.control_target, predicted, ridge)));
      displacements.push_back(f.displacement);
    }
    r.scores = branch_scores(displacements, weighting);
    r.landmarks = final_landmarks(r.branches, r.scores);
  } catch (const DegenerateError& e) {
    r.fallback = true;
    r.warning = std::string("manipulation failed, using coarse landmarks: ") + e.what();
    r.landmarks = r.coarse;
    r.branches.clear();
  }
  return r;
}

std::vector<double> ced_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 50; ++i) t.push_back(i * 0.002);
  return t;
}

Evaluation evaluate_predictions(const std::vector<LandmarkSet>& predictions, const std::vector<Sample>& data,
                                Normalization normalization) {
  if (predictions.size() != data.size()) throw ShapeError("evaluate: prediction count mismatch");
  if (data.empty()) throw ShapeError("evaluate: no samples");
  Evaluation ev;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const LandmarkSet& P = predictions[s];
    const LandmarkSet& T = data[s].landmarks;
    if (P.size() != T.size() || T.empty()) throw ShapeError("evaluate: landmark count mismatch");
    const double normalizer = normalization == Normalization::kInterocular ? data[s].interocular : data[s].face_size;
    if (!(normalizer > 0.0)) {
      throw Error("evaluate: sample '" + data[s].name + "' has a zero " + to_string(normalization) + " normalizer");
    }
    double err = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) err += norm(P[i] - T[i]);
    ev.per_sample.push_back(err / static_cast<double>(P.size()) / normalizer);
  }
  ev.nme = 100.0 * std::accumulate(ev.per_sample.begin(), ev.per_sample.end(), 0.0) /
           static_cast<double>(ev.per_sample.size());
  for (double t : ced_thresholds()) {
    const auto n = std::count_if(ev.per_sample.begin(), ev.per_sample.end(), [t](double e) { return e <= t; });
    ev.ced.emplace_back(t, static_cast<double>(n) / static_cast<double>(ev.per_sample.size()));
  }
  return ev;
}

Evaluation evaluate(const ToyDetector& det, const std::vector<Sample>& data, const PipelineConfig& cfg,
                    const Embedder& embedder, std::vector<LandmarkSet>* predictions) {
  cfg.validate();
  const std::unique_ptr<Manipulator> manipulator = make_manipulator(cfg, embedder);
  std::vector<LandmarkSet> preds;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    preds.push_back(infer(det, data[i].image, *manipulator, cfg.k_test, rng, cfg.weighting, cfg.attack.ridge).landmarks);
  }
  Evaluation ev = evaluate_predictions(preds, data, cfg.normalization);
  if (predictions != nullptr) *predictions = std::move(preds);
  return ev;
}

}  // namespace gean
