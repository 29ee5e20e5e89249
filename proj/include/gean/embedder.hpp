#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gean/imaging.hpp"

namespace gean {

/// Identity representation z; embedders return unit-norm vectors.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

/// |z1 - z2|_2. Throws ShapeError on dimension mismatch.
double embedding_distance(const EmbeddingVector& z1, const EmbeddingVector& z2);

/// Face-recognizer interface f: Image -> R^{n_z} with input gradients.
class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual int input_width() const = 0;
  virtual int input_height() const = 0;
  virtual int dimension() const = 0;

  virtual EmbeddingVector embed(const Image& img) const = 0;
  /// d <cotangent, embed(img)> / d img, one value per pixel.
  virtual Image embed_input_grad(const Image& img, const EmbeddingVector& cotangent) const = 0;
};

/// Embeds an image of any size by first resampling it to the embedder's
/// input size.
EmbeddingVector embed_resized(const Embedder& e, const Image& img);
Image embed_resized_input_grad(const Embedder& e, const Image& img, const EmbeddingVector& cotangent);

/// Fixed random-weight embedding network standing in for a trained
/// recognizer: mean removal, conv5x5(8)+tanh, 2x2 pool, conv3x3(8)+tanh,
/// 4x4 pool, linear to n_z, l2 normalization. Weights depend only on the seed.
class ToyEmbedder final : public Embedder {
 public:
  struct Options {
    int width = 64;
    int height = 64;
    int dimension = 128;
    std::uint64_t seed = 7;
  };

  ToyEmbedder() : ToyEmbedder(Options{}) {}
  explicit ToyEmbedder(const Options& options);

  int input_width() const override { return options_.width; }
  int input_height() const override { return options_.height; }
  int dimension() const override { return options_.dimension; }

  EmbeddingVector embed(const Image& img) const override;
  Image embed_input_grad(const Image& img, const EmbeddingVector& cotangent) const override;

 private:
  struct Activations;
  void check_input(const Image& img) const;
  /// Runs the network; fills `acts` when non-null. Returns the unnormalized output.
  std::vector<double> forward(const Image& img, Activations* acts) const;

  Options options_;
  std::vector<double> conv1_w_, conv1_b_, conv2_w_, conv2_b_, linear_w_;
};

}  // namespace gean
