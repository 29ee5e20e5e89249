#include "gean/tps.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "gean/error.hpp"

namespace gean {

double tps_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

namespace {

// dU/d(r^2); the r^2 -> 0 limit of its product with (p - c) is 0, which the
// callers rely on by treating r2 == 0 as contributing nothing.
double tps_kernel_slope(double r2) { return r2 > 0.0 ? std::log(r2) + 1.0 : 0.0; }

double squared_distance(Vec2 a, Vec2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// The bordered spline system [[K + ridge I, Q], [Q^T, 0]] together with its
// factorization and solution, kept so the VJP can run the adjoint solve.
struct TpsSystem {
  Eigen::MatrixXd matrix;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  Eigen::MatrixXd coeffs;  // (L+3) x 2
  double ridge = 0.0;
};

Eigen::MatrixXd assemble(const LandmarkSet& c, double ridge) {
  const Eigen::Index L = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(L + 3, L + 3);
  for (Eigen::Index i = 0; i < L; ++i) {
    for (Eigen::Index j = i + 1; j < L; ++j) {
      const double u = tps_kernel(squared_distance(c[i], c[j]));
      m(i, j) = u;
      m(j, i) = u;
    }
    m(i, i) = ridge;
    m(i, L) = m(L, i) = 1.0;
    m(i, L + 1) = m(L + 1, i) = c[i].x;
    m(i, L + 2) = m(L + 2, i) = c[i].y;
  }
  return m;
}

bool try_solve(const LandmarkSet& source, const Eigen::MatrixXd& rhs, double ridge, TpsSystem& sys) {
  sys.matrix = assemble(source, ridge);
  sys.lu.compute(sys.matrix);
  if (!(sys.lu.rcond() > 1e-13)) return false;
  sys.coeffs = sys.lu.solve(rhs);
  if (!sys.coeffs.allFinite()) return false;
  sys.ridge = ridge;
  return true;
}

TpsSystem solve_system(const LandmarkSet& source, const LandmarkSet& target, double ridge) {
  if (source.size() != target.size()) throw ShapeError("fit_tps: source and target sizes differ");
  if (source.size() < 3) throw ShapeError("fit_tps: need at least 3 control points");
  if (ridge < 0.0) throw ShapeError("fit_tps: ridge must be non-negative");

  const Eigen::Index L = static_cast<Eigen::Index>(source.size());
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(L + 3, 2);
  for (Eigen::Index i = 0; i < L; ++i) {
    rhs(i, 0) = target[i].x;
    rhs(i, 1) = target[i].y;
  }
  TpsSystem sys;
  if (try_solve(source, rhs, ridge, sys)) return sys;
  if (try_solve(source, rhs, ridge + kFallbackTpsRidge, sys)) return sys;
  throw DegenerateError("fit_tps: singular control-point configuration (collinear or duplicate points)");
}

TpsTransform to_transform(const LandmarkSet& source, const TpsSystem& sys) {
  const Eigen::Index L = static_cast<Eigen::Index>(source.size());
  TpsTransform t;
  t.control_points = source;
  t.regularization = sys.ridge;
  t.kernel_weights.resize(source.size());
  for (Eigen::Index j = 0; j < L; ++j) t.kernel_weights[j] = {sys.coeffs(j, 0), sys.coeffs(j, 1)};
  for (int r = 0; r < 2; ++r) {
    for (int k = 0; k < 3; ++k) t.affine[r][k] = sys.coeffs(L + k, r);
  }
  return t;
}

void check_pair(const LandmarkSet& P, const LandmarkSet& P_adv) {
  if (P.size() != P_adv.size()) throw ShapeError("control point sets differ in size");
}

}  // namespace

Vec2 TpsTransform::operator()(Vec2 p) const {
  double x = affine[0][0] + affine[0][1] * p.x + affine[0][2] * p.y;
  double y = affine[1][0] + affine[1][1] * p.x + affine[1][2] * p.y;
  for (std::size_t j = 0; j < control_points.size(); ++j) {
    const double u = tps_kernel(squared_distance(p, control_points[j]));
    x += kernel_weights[j].x * u;
    y += kernel_weights[j].y * u;
  }
  return {x, y};
}

Jacobian2 TpsTransform::jacobian(Vec2 p) const {
  Jacobian2 J{{{affine[0][1], affine[0][2]}, {affine[1][1], affine[1][2]}}};
  for (std::size_t j = 0; j < control_points.size(); ++j) {
    const Vec2 d = p - control_points[j];
    const double s = 2.0 * tps_kernel_slope(d.x * d.x + d.y * d.y);
    J[0][0] += kernel_weights[j].x * s * d.x;
    J[0][1] += kernel_weights[j].x * s * d.y;
    J[1][0] += kernel_weights[j].y * s * d.x;
    J[1][1] += kernel_weights[j].y * s * d.y;
  }
  return J;
}

TpsTransform fit_tps(const LandmarkSet& source, const LandmarkSet& target, double ridge) {
  return to_transform(source, solve_system(source, target, ridge));
}

LandmarkSet eval_tps(const TpsTransform& t, const LandmarkSet& pts) {
  LandmarkSet out;
  out.reserve(pts.size());
  for (const Vec2& p : pts) out.push_back(t(p));
  return out;
}

Image warp_image(const Image& img, const LandmarkSet& P, const LandmarkSet& P_adv, double ridge) {
  check_pair(P, P_adv);
  if (P == P_adv) return img;
  const TpsTransform t = fit_tps(P_adv, P, ridge);
  const int w = img.width();
  const int h = img.height();
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out(x, y) = bilinear_sample(img, t(from_pixel({double(x), double(y)}, w, h))).value;
    }
  }
  return out;
}

LandmarkSet invert_landmarks(const LandmarkSet& P, const LandmarkSet& P_adv,
                             const LandmarkSet& predicted, double ridge) {
  check_pair(P, P_adv);
  if (P == P_adv) return predicted;
  return eval_tps(fit_tps(P_adv, P, ridge), predicted);
}

std::vector<Vec2> warp_vjp(const Image& img, const LandmarkSet& P, const LandmarkSet& P_adv,
                           const Image& cotangent, double ridge) {
  check_pair(P, P_adv);
  if (cotangent.width() != img.width() || cotangent.height() != img.height()) {
    throw ShapeError("warp_vjp: cotangent must have the image dimensions");
  }
  const TpsSystem sys = solve_system(P_adv, P, ridge);
  const std::size_t L = P_adv.size();
  const Eigen::Index n = static_cast<Eigen::Index>(L) + 3;
  const Eigen::MatrixXd& theta = sys.coeffs;

  std::vector<Vec2> grad(L);
  Eigen::MatrixXd theta_bar = Eigen::MatrixXd::Zero(n, 2);
  std::vector<double> phi(L);
  std::vector<double> slope(L);

  const int w = img.width();
  const int h = img.height();
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const double c = cotangent(px, py);
      if (c == 0.0) continue;
      const Vec2 x = from_pixel({double(px), double(py)}, w, h);
      Vec2 s{theta(L, 0) + theta(L + 1, 0) * x.x + theta(L + 2, 0) * x.y,
             theta(L, 1) + theta(L + 1, 1) * x.x + theta(L + 2, 1) * x.y};
      for (std::size_t j = 0; j < L; ++j) {
        const double r2 = squared_distance(x, P_adv[j]);
        phi[j] = tps_kernel(r2);
        slope[j] = tps_kernel_slope(r2);
        s.x += theta(j, 0) * phi[j];
        s.y += theta(j, 1) * phi[j];
      }
      const Vec2 g = c * bilinear_sample(img, s).grad;
      if (g.x == 0.0 && g.y == 0.0) continue;

      for (std::size_t j = 0; j < L; ++j) {
        theta_bar(j, 0) += phi[j] * g.x;
        theta_bar(j, 1) += phi[j] * g.y;
        // d U(|x - c_j|^2) / d c_j = slope * 2 (c_j - x)
        const double a = (theta(j, 0) * g.x + theta(j, 1) * g.y) * 2.0 * slope[j];
        grad[j].x += a * (P_adv[j].x - x.x);
        grad[j].y += a * (P_adv[j].y - x.y);
      }
      theta_bar(L, 0) += g.x;
      theta_bar(L, 1) += g.y;
      theta_bar(L + 1, 0) += x.x * g.x;
      theta_bar(L + 1, 1) += x.x * g.y;
      theta_bar(L + 2, 0) += x.y * g.x;
      theta_bar(L + 2, 1) += x.y * g.y;
    }
  }

  // theta = M^-1 B with B independent of P_adv, so M_bar = -M^-T theta_bar theta^T.
  // M is symmetric, hence the same factorization serves the adjoint solve.
  const Eigen::MatrixXd rhs_bar = sys.lu.solve(theta_bar);
  const Eigen::MatrixXd m_bar = -rhs_bar * theta.transpose();

  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      if (i == j) continue;
      const double r2 = squared_distance(P_adv[i], P_adv[j]);
      const double a = (m_bar(i, j) + m_bar(j, i)) * 2.0 * tps_kernel_slope(r2);
      grad[i].x += a * (P_adv[i].x - P_adv[j].x);
      grad[i].y += a * (P_adv[i].y - P_adv[j].y);
    }
    grad[i].x += m_bar(i, L + 1) + m_bar(L + 1, i);
    grad[i].y += m_bar(i, L + 2) + m_bar(L + 2, i);
  }
  return grad;
}

}  // namespace gean
