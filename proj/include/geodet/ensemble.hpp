#pragma once

// Virtual-view ensembling: pure-rotation pseudo camera poses and fusion of
// per-view predictions back in the base camera frame.
//
// A view pose maps base-camera coordinates to view-camera coordinates, so a
// base-frame box b is observed in view i as transform_box(b, pose_i).

#include <string>
#include <utility>
#include <vector>

#include "geodet/cuboid.hpp"
#include "geodet/eval3d.hpp"
#include "geodet/geometry.hpp"

namespace geodet {

enum class Axis { X = 0, Y = 1, Z = 2 };

struct VirtualViewSet {
  std::vector<RigidTransform> poses;
  bool includes_identity = false;

  /// Number of poses that are not the base view.
  std::size_t virtual_count() const { return poses.size() - (includes_identity ? 1 : 0); }
};

/// Identity first (when requested), then +angle and -angle about each axis.
inline VirtualViewSet virtual_poses(double angle_deg = 15.0,
                                    const std::vector<Axis>& axes = {Axis::X, Axis::Y, Axis::Z},
                                    bool include_identity = true) {
  if (!(angle_deg > 0.0 && angle_deg < 90.0))
    throw InvalidArgument("virtual view angle must lie in (0, 90) degrees");
  VirtualViewSet out;
  out.includes_identity = include_identity;
  if (include_identity) out.poses.push_back(RigidTransform::identity());
  const double rad = deg_to_rad(angle_deg);
  for (Axis a : axes) {
    out.poses.push_back(RigidTransform::rotation(axis_rotation(static_cast<int>(a), rad)));
    out.poses.push_back(RigidTransform::rotation(axis_rotation(static_cast<int>(a), -rad)));
  }
  return out;
}

struct ViewPredictions {
  RigidTransform pose;
  std::vector<Detection> detections;  // in that view's camera frame
};

/// Maps every view's detections back to the base frame and applies 3D NMS.
/// Scores are carried over unchanged.
inline std::vector<Detection> fuse_views(std::span<const ViewPredictions> views,
                                         double tau = kDefaultNmsThreshold) {
  std::vector<Detection> all;
  for (const auto& view : views) {
    const RigidTransform back = invert(view.pose);
    for (Detection d : view.detections) {
      d.box = transform_box(d.box, back);
      all.push_back(std::move(d));
    }
  }
  return nms3d(all, tau);
}

}  // namespace geodet
