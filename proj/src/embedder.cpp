#include "gean/embedder.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "gean/error.hpp"
#include "gean/nn.hpp"

namespace gean {

namespace {

constexpr nn::ConvShape kConv1{1, 8, 5};
constexpr nn::ConvShape kConv2{8, 8, 3};
constexpr int kPool1 = 2;
constexpr int kPool2 = 4;

std::vector<double> normal_weights(std::mt19937_64& rng, std::size_t n, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> w(n);
  for (double& v : w) v = dist(rng);
  return w;
}

// Zero-mean kernels respond to structure only, not to flat intensity.
void center_kernels(std::vector<double>& w, std::size_t kernel_size) {
  for (std::size_t k = 0; k < w.size(); k += kernel_size) {
    double mean = 0.0;
    for (std::size_t i = 0; i < kernel_size; ++i) mean += w[k + i];
    mean /= static_cast<double>(kernel_size);
    for (std::size_t i = 0; i < kernel_size; ++i) w[k + i] -= mean;
  }
}

}  // namespace

double embedding_distance(const EmbeddingVector& z1, const EmbeddingVector& z2) {
  if (z1.size() != z2.size()) throw ShapeError("embedding_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < z1.size(); ++i) {
    const double d = z1[i] - z2[i];
    s += d * d;
  }
  return std::sqrt(s);
}

EmbeddingVector embed_resized(const Embedder& e, const Image& img) {
  return e.embed(resize_bilinear(img, e.input_width(), e.input_height()));
}

Image embed_resized_input_grad(const Embedder& e, const Image& img, const EmbeddingVector& cotangent) {
  const Image small = resize_bilinear(img, e.input_width(), e.input_height());
  return resize_bilinear_adjoint(e.embed_input_grad(small, cotangent), img.width(), img.height());
}

ToyEmbedder::ToyEmbedder(const Options& options) : options_(options) {
  if (options.width <= 0 || options.height <= 0 || options.width % (kPool1 * kPool2) != 0 ||
      options.height % (kPool1 * kPool2) != 0) {
    throw ShapeError("ToyEmbedder: input size must be a positive multiple of 8");
  }
  if (options.dimension <= 0) throw ShapeError("ToyEmbedder: dimension must be positive");

  std::mt19937_64 rng(options.seed);
  // Small first-layer weights keep tanh near its linear range, so the
  // embedding changes smoothly with geometry.
  conv1_w_ = normal_weights(rng, kConv1.weight_count(), 0.1);
  center_kernels(conv1_w_, 25);
  conv1_b_ = normal_weights(rng, kConv1.bias_count(), 0.1);
  conv2_w_ = normal_weights(rng, kConv2.weight_count(), 1.5 / std::sqrt(72.0));
  conv2_b_ = normal_weights(rng, kConv2.bias_count(), 0.1);
  const std::size_t features =
      std::size_t(kConv2.out_channels) * (options.width / 8) * (options.height / 8);
  linear_w_ = normal_weights(rng, features * options.dimension, 1.0 / std::sqrt(double(features)));
}

void ToyEmbedder::check_input(const Image& img) const {
  if (img.width() != options_.width || img.height() != options_.height) {
    throw ShapeError("ToyEmbedder: image is " + std::to_string(img.width()) + "x" +
                     std::to_string(img.height()) + ", expected " + std::to_string(options_.width) + "x" +
                     std::to_string(options_.height));
  }
}

struct ToyEmbedder::Activations {
  nn::Tensor a1, p1, a2, f;
};

std::vector<double> ToyEmbedder::forward(const Image& img, Activations* acts) const {
  check_input(img);
  nn::Tensor x(1, img.height(), img.width());
  const auto data = img.data();
  const double mean = std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) x.values[i] = data[i] - mean;

  nn::Tensor a1 = nn::conv2d(x, kConv1, conv1_w_, conv1_b_);
  nn::tanh_inplace(a1);
  nn::Tensor p1 = nn::avg_pool(a1, kPool1);
  nn::Tensor a2 = nn::conv2d(p1, kConv2, conv2_w_, conv2_b_);
  nn::tanh_inplace(a2);
  nn::Tensor f = nn::avg_pool(a2, kPool2);

  const std::size_t nf = f.values.size();
  std::vector<double> y(options_.dimension, 0.0);
  for (int o = 0; o < options_.dimension; ++o) {
    const double* row = linear_w_.data() + std::size_t(o) * nf;
    double s = 0.0;
    for (std::size_t i = 0; i < nf; ++i) s += row[i] * f.values[i];
    y[o] = s;
  }
  if (acts != nullptr) {
    acts->a1 = std::move(a1);
    acts->p1 = std::move(p1);
    acts->a2 = std::move(a2);
    acts->f = std::move(f);
  }
  return y;
}

namespace {

double output_norm(const std::vector<double>& y) {
  double n2 = 0.0;
  for (double v : y) n2 += v * v;
  return std::sqrt(n2 + 1e-24);
}

}  // namespace

EmbeddingVector ToyEmbedder::embed(const Image& img) const {
  std::vector<double> y = forward(img, nullptr);
  const double inv = 1.0 / output_norm(y);
  for (double& v : y) v *= inv;
  return EmbeddingVector(std::move(y));
}

Image ToyEmbedder::embed_input_grad(const Image& img, const EmbeddingVector& cotangent) const {
  if (cotangent.size() != static_cast<std::size_t>(options_.dimension)) {
    throw ShapeError("ToyEmbedder: cotangent dimension mismatch");
  }
  Activations acts;
  const std::vector<double> y = forward(img, &acts);
  const double norm = output_norm(y);

  // z = y / |y|  =>  y_bar = (c - z (z . c)) / |y|
  double zc = 0.0;
  for (int o = 0; o < options_.dimension; ++o) zc += (y[o] / norm) * cotangent[o];
  std::vector<double> y_bar(options_.dimension);
  for (int o = 0; o < options_.dimension; ++o) y_bar[o] = (cotangent[o] - (y[o] / norm) * zc) / norm;

  const nn::Tensor& f = acts.f;
  const std::size_t nf = f.values.size();
  nn::Tensor f_bar(f.channels, f.height, f.width);
  for (int o = 0; o < options_.dimension; ++o) {
    const double* row = linear_w_.data() + std::size_t(o) * nf;
    const double g = y_bar[o];
    if (g == 0.0) continue;
    for (std::size_t i = 0; i < nf; ++i) f_bar.values[i] += row[i] * g;
  }

  nn::Tensor a2_bar = nn::avg_pool_backward(f_bar, kPool2);
  nn::tanh_backward_inplace(acts.a2, a2_bar);
  nn::Tensor p1_bar(acts.p1.channels, acts.p1.height, acts.p1.width);
  nn::conv2d_backward_input(a2_bar, kConv2, conv2_w_, p1_bar);
  nn::Tensor a1_bar = nn::avg_pool_backward(p1_bar, kPool1);
  nn::tanh_backward_inplace(acts.a1, a1_bar);
  nn::Tensor x_bar(1, img.height(), img.width());
  nn::conv2d_backward_input(a1_bar, kConv1, conv1_w_, x_bar);

  // Mean removal is a projection; its adjoint removes the mean of the gradient.
  const double g_mean =
      std::accumulate(x_bar.values.begin(), x_bar.values.end(), 0.0) / static_cast<double>(x_bar.values.size());
  Image grad(img.width(), img.height());
  auto out = grad.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x_bar.values[i] - g_mean;
  return grad;
}

}  // namespace gean
