#pragma once

// Minimal CPU kernels for the toy embedder and detector: same-padded stride-1
// convolutions, average pooling and nearest upsampling, each with the
// backward passes needed for input and parameter gradients. Loop order is
// fixed so results are bitwise reproducible.

#include <cstddef>
#include <span>
#include <vector>

namespace gean::nn {

/// Channel-major feature map (c, h, w).
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), values(std::size_t(c) * h * w, 0.0) {}

  std::size_t plane() const { return std::size_t(height) * width; }
  double* channel(int c) { return values.data() + std::size_t(c) * plane(); }
  const double* channel(int c) const { return values.data() + std::size_t(c) * plane(); }
  double& at(int c, int y, int x) { return values[std::size_t(c) * plane() + std::size_t(y) * width + x]; }
  double at(int c, int y, int x) const { return values[std::size_t(c) * plane() + std::size_t(y) * width + x]; }
};

/// Shape of a k x k convolution with zero "same" padding.
struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;

  std::size_t weight_count() const { return std::size_t(out_channels) * in_channels * kernel * kernel; }
  std::size_t bias_count() const { return std::size_t(out_channels); }
};

/// weights laid out [out][in][ky][kx]; bias may be empty.
Tensor conv2d(const Tensor& in, const ConvShape& shape, std::span<const double> weights,
              std::span<const double> bias);

/// Accumulates the input gradient of conv2d into grad_in (same shape as input).
void conv2d_backward_input(const Tensor& grad_out, const ConvShape& shape, std::span<const double> weights,
                           Tensor& grad_in);

/// Accumulates weight and bias gradients; grad_bias may be empty.
void conv2d_backward_params(const Tensor& in, const Tensor& grad_out, const ConvShape& shape,
                            std::span<double> grad_weights, std::span<double> grad_bias);

/// Non-overlapping factor x factor mean pooling; dimensions must divide.
Tensor avg_pool(const Tensor& in, int factor);
Tensor avg_pool_backward(const Tensor& grad_out, int factor);

Tensor upsample_nearest(const Tensor& in, int factor);
Tensor upsample_nearest_backward(const Tensor& grad_out, int factor);

inline constexpr double kLeakySlope = 0.01;

void leaky_relu_inplace(Tensor& t);
/// grad *= leaky'(pre-activation output), where `activated` is the forward output.
void leaky_relu_backward_inplace(const Tensor& activated, Tensor& grad);

void tanh_inplace(Tensor& t);
void tanh_backward_inplace(const Tensor& activated, Tensor& grad);

}  // namespace gean::nn
