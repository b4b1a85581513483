#pragma once

// The 13-parameter cube-head representation and its decoding into oriented
// 3D boxes in the camera frame.
//
// Parameter vector layout (index: meaning):
//   0 u, 1 v        projected center relative to the RoI, in RoI units
//   2 z_v           virtual depth
//   3..5 wbar, hbar, lbar   log dimensions (meters)
//   6..11 p         continuous 6D rotation (two 3-vectors)
//   12 mu           predicted uncertainty

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include "geodet/dual.hpp"
#include "geodet/errors.hpp"
#include "geodet/geometry.hpp"
#include "geodet/linalg.hpp"

namespace geodet {

struct Roi2D {
  double rx = 0.0;
  double ry = 0.0;
  double rw = 1.0;
  double rh = 1.0;

  void validate() const {
    if (!(rw > 0.0) || !(rh > 0.0)) throw InvalidArgument("RoI width and height must be positive");
  }
};

inline constexpr std::size_t kCuboidParamCount = 13;

struct CuboidParams {
  double u = 0.5;
  double v = 0.5;
  double z_v = 1.0;
  double wbar = 0.0;
  double hbar = 0.0;
  double lbar = 0.0;
  std::array<double, 6> p{1, 0, 0, 0, 1, 0};
  double mu = 0.0;

  std::array<double, kCuboidParamCount> to_array() const {
    return {u, v, z_v, wbar, hbar, lbar, p[0], p[1], p[2], p[3], p[4], p[5], mu};
  }
  static CuboidParams from_array(const std::array<double, kCuboidParamCount>& a) {
    CuboidParams c;
    c.u = a[0];
    c.v = a[1];
    c.z_v = a[2];
    c.wbar = a[3];
    c.hbar = a[4];
    c.lbar = a[5];
    for (std::size_t i = 0; i < 6; ++i) c.p[i] = a[6 + i];
    c.mu = a[12];
    return c;
  }

  void validate() const {
    for (double e : to_array())
      if (!std::isfinite(e)) throw InvalidArgument("cuboid parameters must be finite");
    if (!(z_v > 0.0)) throw InvalidArgument("virtual depth must be positive");
  }
};

struct Box3D {
  Vec3d center = Vec3d::zero();
  Vec3d dims{1.0, 1.0, 1.0};  // (w, h, l) along the box's local x, y, z
  Mat3d R = Mat3d::identity();

  void validate(double tol = 1e-9) const {
    for (std::size_t i = 0; i < 3; ++i)
      if (!(dims[i] > 0.0) || !std::isfinite(dims[i]))
        throw InvalidArgument("box dimensions must be positive");
    RigidTransform{R, center}.validate(tol);
  }

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

struct VirtualDepthConfig {
  double f_virtual = 512.0;
  bool enabled = true;
};

struct DecodeConfig {
  VirtualDepthConfig depth;
  /// Interpret the 6D rotation relative to the viewing ray of the box center.
  bool allocentric = true;
};

/// Corner sign pattern of the unit cube, in the fixed serialization order.
inline constexpr std::array<std::array<int, 3>, 8> kCornerSigns = {{{-1, -1, -1},
                                                                   {+1, -1, -1},
                                                                   {+1, +1, -1},
                                                                   {-1, +1, -1},
                                                                   {-1, -1, +1},
                                                                   {+1, -1, +1},
                                                                   {+1, +1, +1},
                                                                   {-1, +1, +1}}};

template <typename T>
using Corners = std::array<Vec3<T>, 8>;

namespace detail {

inline constexpr double kRotationEps = 1e-12;

template <typename T>
Mat3<T> rot6d(const std::array<T, 6>& p) {
  using std::sqrt;
  const Vec3<T> a1(p[0], p[1], p[2]);
  const Vec3<T> a2(p[3], p[4], p[5]);
  const T n1 = sqrt(squared_norm(a1));
  if (!(value_of(n1) >= kRotationEps)) throw DegenerateRotation("first 6D column has zero norm");
  const Vec3<T> b1 = a1 / n1;
  const Vec3<T> r2 = a2 - b1 * dot(a2, b1);
  const T n2 = sqrt(squared_norm(r2));
  if (!(value_of(n2) >= kRotationEps))
    throw DegenerateRotation("second 6D column is parallel to the first");
  const Vec3<T> b2 = r2 / n2;
  return Mat3<T>::from_columns(b1, b2, cross(b1, b2));
}

/// Minimal rotation taking the camera z-axis onto the direction of `center`.
template <typename T>
Mat3<T> view_rotation(const Vec3<T>& center) {
  using std::sqrt;
  const Vec3<T> r = center / sqrt(squared_norm(center));
  // w = z x r, c = z . r
  const Vec3<T> w(-r[1], r[0], T(0.0));
  const T c = r[2];
  Mat3<T> W;
  W.m = {T(0.0), -w[2], w[1], w[2], T(0.0), -w[0], -w[1], w[0], T(0.0)};
  return Mat3<T>::identity() + W + (W * W) * (T(1.0) / (T(1.0) + c));
}

template <typename T>
T metric_depth(const T& z_v, const CameraIntrinsics& K, const VirtualDepthConfig& cfg) {
  if (!cfg.enabled) return z_v;
  return z_v * T(K.fy / cfg.f_virtual);
}

template <typename T>
Vec3<T> cuboid_center(const T& u, const T& v, const T& z, const Roi2D& roi,
                      const CameraIntrinsics& K) {
  const T u_px = T(roi.rx) + u * T(roi.rw);
  const T v_px = T(roi.ry) + v * T(roi.rh);
  return Vec3<T>(z * T(1.0 / K.fx) * (u_px - T(K.px)), z * T(1.0 / K.fy) * (v_px - T(K.py)), z);
}

template <typename T>
Corners<T> compose_corners(const Vec3<T>& center, const Vec3<T>& dims, const Mat3<T>& R) {
  Corners<T> out;
  for (std::size_t k = 0; k < 8; ++k) {
    const Vec3<T> local(dims[0] * T(0.5 * kCornerSigns[k][0]), dims[1] * T(0.5 * kCornerSigns[k][1]),
                        dims[2] * T(0.5 * kCornerSigns[k][2]));
    out[k] = R * local + center;
  }
  return out;
}

/// Rotation of the decoded box given the 6D vector and the box center.
template <typename T>
Mat3<T> egocentric_rotation(const std::array<T, 6>& p, const Vec3<T>& center,
                            const DecodeConfig& cfg) {
  const Mat3<T> R = rot6d(p);
  return cfg.allocentric ? view_rotation(center) * R : R;
}

/// Decoder on an arbitrary scalar: (u, v, z_v, wbar, hbar, lbar, p0..p5).
template <typename T>
Corners<T> decode_corners(const std::array<T, 12>& q, const Roi2D& roi, const CameraIntrinsics& K,
                          const DecodeConfig& cfg) {
  using std::exp;
  const T z = metric_depth(q[2], K, cfg.depth);
  const Vec3<T> center = cuboid_center(q[0], q[1], z, roi, K);
  const Vec3<T> dims(exp(q[3]), exp(q[4]), exp(q[5]));
  const std::array<T, 6> p{q[6], q[7], q[8], q[9], q[10], q[11]};
  return compose_corners(center, dims, egocentric_rotation(p, center, cfg));
}

}  // namespace detail

/// Gram-Schmidt on the two 3-vectors of a 6D rotation; columns [b1 b2 b1xb2].
inline Mat3d rot6d_to_matrix(const std::array<double, 6>& p) { return detail::rot6d(p); }

inline double virtual_to_metric_depth(double z_v, const CameraIntrinsics& K,
                                      const VirtualDepthConfig& cfg = {}) {
  if (!(z_v > 0.0)) throw InvalidArgument("virtual depth must be positive");
  return detail::metric_depth(z_v, K, cfg);
}

inline Box3D decode_cuboid(const CuboidParams& params, const Roi2D& roi, const CameraIntrinsics& K,
                           const DecodeConfig& cfg = {}) {
  params.validate();
  roi.validate();
  K.validate();
  Box3D box;
  const double z = detail::metric_depth(params.z_v, K, cfg.depth);
  box.center = detail::cuboid_center(params.u, params.v, z, roi, K);
  box.dims = {std::exp(params.wbar), std::exp(params.hbar), std::exp(params.lbar)};
  box.R = detail::egocentric_rotation(params.p, box.center, cfg);
  return box;
}

inline Corners<double> box_corners(const Box3D& b) {
  return detail::compose_corners(b.center, b.dims, b.R);
}

inline Box3D transform_box(const Box3D& b, const RigidTransform& T) {
  return {T.R * b.center + T.t, b.dims, T.R * b.R};
}

/// Parameters that decode exactly (up to rounding) to `box`; mu is set to 0.
inline CuboidParams encode_cuboid(const Box3D& box, const Roi2D& roi, const CameraIntrinsics& K,
                                  const DecodeConfig& cfg = {}) {
  roi.validate();
  const Pixel c = project(K, box.center);
  CuboidParams out;
  out.u = (c.u - roi.rx) / roi.rw;
  out.v = (c.v - roi.ry) / roi.rh;
  out.z_v = cfg.depth.enabled ? box.center[2] * cfg.depth.f_virtual / K.fy : box.center[2];
  out.wbar = std::log(box.dims[0]);
  out.hbar = std::log(box.dims[1]);
  out.lbar = std::log(box.dims[2]);
  const Mat3d R = cfg.allocentric ? detail::view_rotation(box.center).transpose() * box.R : box.R;
  out.p = {R(0, 0), R(1, 0), R(2, 0), R(0, 1), R(1, 1), R(2, 1)};
  out.mu = 0.0;
  return out;
}

/// Tight 2D box around the projected corners; used to pair ground truth
/// with a RoI in synthetic fixtures.
inline Roi2D project_roi(const Box3D& box, const CameraIntrinsics& K) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& c : box_corners(box)) {
    const Pixel p = project(K, c);
    x0 = std::min(x0, p.u);
    y0 = std::min(y0, p.v);
    x1 = std::max(x1, p.u);
    y1 = std::max(y1, p.v);
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

}  // namespace geodet
