#pragma once

// Pinhole camera algebra, rigid transforms and epipolar lines.
//
// Pose convention: a RigidTransform T = (R, t) between two cameras maps
// source-camera coordinates to target-camera coordinates,
//   X_tgt = R * X_src + t.

#include <cmath>
#include <string>

#include "geodet/errors.hpp"
#include "geodet/linalg.hpp"

namespace geodet {

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double px = 0.0;
  double py = 0.0;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(std::isfinite(fx) && std::isfinite(fy) && std::isfinite(px) && std::isfinite(py)))
      throw InvalidArgument("camera intrinsics must be finite");
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InvalidArgument("image size must be positive");
  }

  Mat3d matrix() const { return Mat3d::from_rows({fx, 0, px, 0, fy, py, 0, 0, 1}); }

  Mat3d inverse_matrix() const {
    return Mat3d::from_rows({1.0 / fx, 0, -px / fx, 0, 1.0 / fy, -py / fy, 0, 0, 1});
  }

  /// Intrinsics of the same camera observed on a grid of `grid_width` x
  /// `grid_height` cells; pixel coordinates are divided by the stride.
  CameraIntrinsics rescaled_to(int grid_width, int grid_height) const {
    const double sx = static_cast<double>(grid_width) / width;
    const double sy = static_cast<double>(grid_height) / height;
    return CameraIntrinsics{fx * sx, fy * sy, px * sx, py * sy, grid_width, grid_height};
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

struct RigidTransform {
  Mat3d R = Mat3d::identity();
  Vec3d t = Vec3d::zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform rotation(const Mat3d& r) { return {r, Vec3d::zero()}; }
  static RigidTransform translation(const Vec3d& v) { return {Mat3d::identity(), v}; }

  Vec3d apply(const Vec3d& x) const { return R * x + t; }

  /// Throws InvalidArgument unless R is a rotation within `tol` and t is finite.
  void validate(double tol = 1e-9) const {
    for (double e : R.m)
      if (!std::isfinite(e)) throw InvalidArgument("rotation has non-finite entries");
    for (double e : t.v)
      if (!std::isfinite(e)) throw InvalidArgument("translation has non-finite entries");
    if (max_abs_diff(R.transpose() * R, Mat3d::identity()) > tol)
      throw InvalidArgument("rotation is not orthonormal");
    if (std::abs(R.determinant() - 1.0) > tol)
      throw InvalidArgument("rotation determinant is not 1");
  }

  friend bool operator==(const RigidTransform&, const RigidTransform&) = default;
};

struct EpipolarLine {
  Vec3d l = Vec3d::zero();
  bool degenerate = true;

  /// Signed point-line distance in pixels (line is stored with unit normal).
  double residual(const Pixel& p) const { return l[0] * p.u + l[1] * p.v + l[2]; }
};

/// Translation norm below which a pose is treated as a pure rotation.
inline constexpr double kDegenerateTranslation = 1e-9;

inline Mat3d skew(const Vec3d& t) {
  return Mat3d::from_rows({0, -t[2], t[1], t[2], 0, -t[0], -t[1], t[0], 0});
}

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  // (a o b)(x) = a(b(x))
  return {a.R * b.R, a.R * b.t + a.t};
}

inline RigidTransform invert(const RigidTransform& T) {
  const Mat3d Rt = T.R.transpose();
  return {Rt, -(Rt * T.t)};
}

inline Pixel project(const CameraIntrinsics& K, const Vec3d& X) {
  if (!(X[2] > 0.0)) throw NonPositiveDepth("point is not in front of the camera");
  return {K.fx * X[0] / X[2] + K.px, K.fy * X[1] / X[2] + K.py};
}

/// Camera-frame point at depth `z` along the ray through pixel `p`.
inline Vec3d backproject(const CameraIntrinsics& K, const Pixel& p, double z) {
  return {(p.u - K.px) * z / K.fx, (p.v - K.py) * z / K.fy, z};
}

/// Epipolar line in the source image of target pixel `uv`.
///
/// With T mapping source to target, the target-to-source pose is
/// (R', t') = (R^T, -R^T t) and the line is
///   l = K_src^-T [t']x R' K_tgt^-1 [u, v, 1]^T,
/// normalized so that l0^2 + l1^2 = 1.
inline EpipolarLine epipolar_line(const CameraIntrinsics& K_src, const CameraIntrinsics& K_tgt,
                                  const RigidTransform& T, const Pixel& uv,
                                  double eps_t = kDegenerateTranslation) {
  K_src.validate();
  K_tgt.validate();
  EpipolarLine out;
  if (norm(T.t) < eps_t) return out;

  const RigidTransform to_src = invert(T);
  const Mat3d F = K_src.inverse_matrix().transpose() * skew(to_src.t) * to_src.R *
                  K_tgt.inverse_matrix();
  const Vec3d l = F * Vec3d(uv.u, uv.v, 1.0);
  const double n = std::hypot(l[0], l[1]);
  // A line through the epipole with vanishing normal only happens when uv is
  // itself the epipole projected at infinity; treat it as degenerate.
  if (!(n > 0.0)) return out;
  out.l = l / n;
  out.degenerate = false;
  return out;
}

/// Homography mapping target pixels to source pixels under a pure rotation
/// X_tgt = R X_src.
inline Mat3d rotation_homography(const CameraIntrinsics& K_src, const CameraIntrinsics& K_tgt,
                                 const Mat3d& R) {
  return K_src.matrix() * R.transpose() * K_tgt.inverse_matrix();
}

/// Apply a homography to a pixel (dehomogenized).
inline Pixel apply_homography(const Mat3d& H, const Pixel& p) {
  const Vec3d q = H * Vec3d(p.u, p.v, 1.0);
  return {q[0] / q[2], q[1] / q[2]};
}

}  // namespace geodet
