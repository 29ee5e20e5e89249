#pragma once

#include <array>
#include <vector>

#include "gean/imaging.hpp"

namespace gean {

/// Ridge added to the kernel block for fits made during attacks.
inline constexpr double kDefaultTpsRidge = 1e-6;
/// Ridge used for the single retry after a singular fit.
inline constexpr double kFallbackTpsRidge = 1e-4;

/// Per-landmark offsets d_i in normalized units.
using DisplacementField = std::vector<Vec2>;

/// 2x2 Jacobian, row-major: {{dfx/dx, dfx/dy}, {dfy/dx, dfy/dy}}.
using Jacobian2 = std::array<std::array<double, 2>, 2>;

/// Thin-plate spline radial basis U(r) = r^2 log r^2, written in terms of
/// r^2 so that U(0) = 0 needs no special casing by callers.
double tps_kernel(double r2);

/// A fitted thin-plate spline f(p) = a + A p + sum_j w_j U(|p - c_j|^2).
struct TpsTransform {
  LandmarkSet control_points;
  /// Row r holds {constant, x coefficient, y coefficient} of output r.
  std::array<std::array<double, 3>, 2> affine{};
  std::vector<Vec2> kernel_weights;
  double regularization = 0.0;

  Vec2 operator()(Vec2 p) const;
  Jacobian2 jacobian(Vec2 p) const;
};

/// Fits the bending-energy minimizing spline mapping `source` onto `target`.
/// With ridge == 0 the fit interpolates exactly. If the system is singular the
/// fit is retried once with ridge + kFallbackTpsRidge; if that also fails a
/// DegenerateError is thrown (collinear or otherwise rank-deficient controls).
TpsTransform fit_tps(const LandmarkSet& source, const LandmarkSet& target,
                     double ridge = kDefaultTpsRidge);

LandmarkSet eval_tps(const TpsTransform& t, const LandmarkSet& pts);

/// Backward warp: fits the spline P_adv -> P and samples `img` at f(x) for
/// every output pixel x, so the content at P lands on P_adv in the result.
Image warp_image(const Image& img, const LandmarkSet& P, const LandmarkSet& P_adv,
                 double ridge = kDefaultTpsRidge);

/// Maps points predicted on the manipulated image back to the original frame
/// using the same P_adv -> P spline as warp_image.
LandmarkSet invert_landmarks(const LandmarkSet& P, const LandmarkSet& P_adv,
                             const LandmarkSet& predicted, double ridge = kDefaultTpsRidge);

/// Gradient of sum_x cotangent(x) * warp_image(img, P, P_adv)(x) with respect to
/// every P_adv coordinate. Differentiates through the spline solve with one
/// adjoint solve, including the dependence of the kernel matrix on P_adv.
std::vector<Vec2> warp_vjp(const Image& img, const LandmarkSet& P, const LandmarkSet& P_adv,
                           const Image& cotangent, double ridge = kDefaultTpsRidge);

}  // namespace gean
