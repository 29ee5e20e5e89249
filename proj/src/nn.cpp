#include "gean/nn.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "gean/error.hpp"

namespace gean::nn {

namespace {

struct Tap {
  int y_begin, y_end, x_begin, x_end, dy, dx;
};

// Output rows/cols for which input (y + dy, x + dx) is inside the map.
Tap make_tap(int h, int w, int k, int ky, int kx) {
  const int dy = ky - k / 2;
  const int dx = kx - k / 2;
  return {std::max(0, -dy), std::min(h, h - dy), std::max(0, -dx), std::min(w, w - dx), dy, dx};
}

void check_conv(const Tensor& in, const ConvShape& shape, std::size_t weights) {
  if (in.channels != shape.in_channels) throw ShapeError("conv2d: input channel mismatch");
  if (weights != shape.weight_count()) throw ShapeError("conv2d: weight count mismatch");
  if (shape.kernel % 2 != 1) throw ShapeError("conv2d: kernel size must be odd");
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

// Rows (ic, ky, kx), columns (y, x): the zero-padded input patch values.
RowMatrix im2col(const Tensor& in, int k) {
  const int h = in.height;
  const int w = in.width;
  RowMatrix col = RowMatrix::Zero(Eigen::Index(in.channels) * k * k, Eigen::Index(h) * w);
  for (int ic = 0; ic < in.channels; ++ic) {
    const double* src_plane = in.channel(ic);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col.row((Eigen::Index(ic) * k + ky) * k + kx).data();
        const Tap t = make_tap(h, w, k, ky, kx);
        for (int y = t.y_begin; y < t.y_end; ++y) {
          const double* src = src_plane + std::size_t(y + t.dy) * w + t.dx;
          double* dst = row + std::size_t(y) * w;
          std::copy(src + t.x_begin, src + t.x_end, dst + t.x_begin);
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col, accumulated into `out`.
void col2im_add(const RowMatrix& col, int k, Tensor& out) {
  const int h = out.height;
  const int w = out.width;
  for (int ic = 0; ic < out.channels; ++ic) {
    double* dst_plane = out.channel(ic);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col.row((Eigen::Index(ic) * k + ky) * k + kx).data();
        const Tap t = make_tap(h, w, k, ky, kx);
        for (int y = t.y_begin; y < t.y_end; ++y) {
          const double* src = row + std::size_t(y) * w;
          double* dst = dst_plane + std::size_t(y + t.dy) * w + t.dx;
          for (int x = t.x_begin; x < t.x_end; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& in, const ConvShape& shape, std::span<const double> weights,
              std::span<const double> bias) {
  check_conv(in, shape, weights.size());
  const int k = shape.kernel;
  const Eigen::Index hw = Eigen::Index(in.height) * in.width;
  Tensor out(shape.out_channels, in.height, in.width);
  RowMap y(out.values.data(), shape.out_channels, hw);
  const ConstRowMap wm(weights.data(), shape.out_channels, Eigen::Index(shape.in_channels) * k * k);
  if (k == 1) {
    y.noalias() = wm * ConstRowMap(in.values.data(), in.channels, hw);
  } else {
    y.noalias() = wm * im2col(in, k);
  }
  if (!bias.empty()) {
    for (int oc = 0; oc < shape.out_channels; ++oc) y.row(oc).array() += bias[oc];
  }
  return out;
}

void conv2d_backward_input(const Tensor& grad_out, const ConvShape& shape, std::span<const double> weights,
                           Tensor& grad_in) {
  if (grad_in.channels != shape.in_channels || grad_out.channels != shape.out_channels) {
    throw ShapeError("conv2d_backward_input: channel mismatch");
  }
  const int k = shape.kernel;
  const Eigen::Index hw = Eigen::Index(grad_out.height) * grad_out.width;
  const ConstRowMap wm(weights.data(), shape.out_channels, Eigen::Index(shape.in_channels) * k * k);
  const ConstRowMap g(grad_out.values.data(), shape.out_channels, hw);
  if (k == 1) {
    RowMap(grad_in.values.data(), shape.in_channels, hw).noalias() += wm.transpose() * g;
    return;
  }
  const RowMatrix col = wm.transpose() * g;
  col2im_add(col, k, grad_in);
}

void conv2d_backward_params(const Tensor& in, const Tensor& grad_out, const ConvShape& shape,
                            std::span<double> grad_weights, std::span<double> grad_bias) {
  check_conv(in, shape, grad_weights.size());
  const int k = shape.kernel;
  const Eigen::Index hw = Eigen::Index(in.height) * in.width;
  const ConstRowMap g(grad_out.values.data(), shape.out_channels, hw);
  RowMap gw(grad_weights.data(), shape.out_channels, Eigen::Index(shape.in_channels) * k * k);
  if (k == 1) {
    gw.noalias() += g * ConstRowMap(in.values.data(), in.channels, hw).transpose();
  } else {
    gw.noalias() += g * im2col(in, k).transpose();
  }
  if (!grad_bias.empty()) {
    for (int oc = 0; oc < shape.out_channels; ++oc) grad_bias[oc] += g.row(oc).sum();
  }
}

Tensor avg_pool(const Tensor& in, int factor) {
  if (in.height % factor != 0 || in.width % factor != 0) throw ShapeError("avg_pool: size not divisible");
  Tensor out(in.channels, in.height / factor, in.width / factor);
  const double scale = 1.0 / (factor * factor);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < in.height; ++y) {
      for (int x = 0; x < in.width; ++x) out.at(c, y / factor, x / factor) += in.at(c, y, x);
    }
  }
  for (double& v : out.values) v *= scale;
  return out;
}

Tensor avg_pool_backward(const Tensor& grad_out, int factor) {
  Tensor g(grad_out.channels, grad_out.height * factor, grad_out.width * factor);
  const double scale = 1.0 / (factor * factor);
  for (int c = 0; c < g.channels; ++c) {
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) g.at(c, y, x) = grad_out.at(c, y / factor, x / factor) * scale;
    }
  }
  return g;
}

Tensor upsample_nearest(const Tensor& in, int factor) {
  Tensor out(in.channels, in.height * factor, in.width * factor);
  for (int c = 0; c < out.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) out.at(c, y, x) = in.at(c, y / factor, x / factor);
    }
  }
  return out;
}

Tensor upsample_nearest_backward(const Tensor& grad_out, int factor) {
  if (grad_out.height % factor != 0 || grad_out.width % factor != 0) {
    throw ShapeError("upsample_nearest_backward: size not divisible");
  }
  Tensor g(grad_out.channels, grad_out.height / factor, grad_out.width / factor);
  for (int c = 0; c < grad_out.channels; ++c) {
    for (int y = 0; y < grad_out.height; ++y) {
      for (int x = 0; x < grad_out.width; ++x) g.at(c, y / factor, x / factor) += grad_out.at(c, y, x);
    }
  }
  return g;
}

void leaky_relu_inplace(Tensor& t) {
  for (double& v : t.values) v = v > 0.0 ? v : kLeakySlope * v;
}

void leaky_relu_backward_inplace(const Tensor& activated, Tensor& grad) {
  for (std::size_t i = 0; i < grad.values.size(); ++i) {
    if (!(activated.values[i] > 0.0)) grad.values[i] *= kLeakySlope;
  }
}

void tanh_inplace(Tensor& t) {
  for (double& v : t.values) v = std::tanh(v);
}

void tanh_backward_inplace(const Tensor& activated, Tensor& grad) {
  for (std::size_t i = 0; i < grad.values.size(); ++i) {
    const double a = activated.values[i];
    grad.values[i] *= 1.0 - a * a;
  }
}

}  // namespace gean::nn
