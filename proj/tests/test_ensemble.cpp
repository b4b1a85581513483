#include <gtest/gtest.h>

#include "geodet/ensemble.hpp"
#include "test_util.hpp"

namespace geodet {
namespace {

using testing::random_box;

TEST(VirtualPoses, SingleAxisWithoutIdentity) {
  const VirtualViewSet s = virtual_poses(15.0, {Axis::X}, false);
  ASSERT_EQ(s.poses.size(), 2u);
  EXPECT_FALSE(s.includes_identity);
  EXPECT_EQ(s.virtual_count(), 2u);
  EXPECT_LE(max_abs_diff(s.poses[0].R, axis_rotation(0, deg_to_rad(15))), 1e-15);
  EXPECT_LE(max_abs_diff(s.poses[1].R, axis_rotation(0, deg_to_rad(-15))), 1e-15);
}

TEST(VirtualPoses, DefaultSetHasSixVirtualViews) {
  const VirtualViewSet s = virtual_poses();
  ASSERT_EQ(s.poses.size(), 7u);
  EXPECT_EQ(s.virtual_count(), 6u);
  EXPECT_EQ(s.poses[0], RigidTransform::identity());
  for (const auto& p : s.poses) {
    EXPECT_EQ(p.t, Vec3d::zero());
    EXPECT_NO_THROW(p.validate());
    const RigidTransform c = compose(p, invert(p));
    EXPECT_LE(max_abs_diff(c.R, Mat3d::identity()), 1e-9);
  }
}

TEST(VirtualPoses, AngleRange) {
  EXPECT_THROW(virtual_poses(0.0), InvalidArgument);
  EXPECT_THROW(virtual_poses(90.0), InvalidArgument);
  EXPECT_NO_THROW(virtual_poses(89.0));
}

std::vector<Detection> random_dets(Rng& rng, int n) {
  std::vector<Detection> out;
  for (int i = 0; i < n; ++i)
    out.push_back({random_box(rng, 1.0), i % 2 ? "a" : "b", rng.uniform(), 0});
  return out;
}

TEST(FuseViews, SingleIdentityViewEqualsNms) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto dets = random_dets(rng, 12);
    const std::vector<ViewPredictions> views{{RigidTransform::identity(), dets}};
    const auto fused = fuse_views(views, 0.3);
    const auto ref = nms3d(dets, 0.3);
    ASSERT_EQ(fused.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_EQ(fused[i].box, ref[i].box);
      EXPECT_EQ(fused[i].score, ref[i].score);
    }
  }
}

TEST(FuseViews, SameBoxInAllViewsCollapses) {
  Rng rng(2);
  const VirtualViewSet set = virtual_poses();
  for (int trial = 0; trial < 20; ++trial) {
    Box3D b = random_box(rng, 0.5);
    b.center = b.center + Vec3d(0, 0, 5);
    std::vector<ViewPredictions> views;
    for (std::size_t i = 0; i < set.poses.size(); ++i)
      views.push_back({set.poses[i], {{transform_box(b, set.poses[i]), "chair", 0.5 + 0.05 * i, 0}}});
    const auto fused = fuse_views(views);
    ASSERT_EQ(fused.size(), 1u);
    const auto got = box_corners(fused[0].box);
    const auto want = box_corners(b);
    for (int k = 0; k < 8; ++k) EXPECT_LE(norm(got[k] - want[k]), 1e-9);
    EXPECT_DOUBLE_EQ(fused[0].score, 0.8);
  }
}

TEST(FuseViews, DisjointObjectsAcrossViewsSurvive) {
  const VirtualViewSet set = virtual_poses(15.0, {Axis::Y}, false);
  const Box3D a{{-2, 0, 5}, {1, 1, 1}, Mat3d::identity()};
  const Box3D b{{2, 0, 5}, {1, 1, 1}, Mat3d::identity()};
  const std::vector<ViewPredictions> views{
      {set.poses[0], {{transform_box(a, set.poses[0]), "chair", 0.9, 0}}},
      {set.poses[1], {{transform_box(b, set.poses[1]), "chair", 0.8, 0}}}};
  const auto fused = fuse_views(views);
  ASSERT_EQ(fused.size(), 2u);
  EXPECT_LE(norm(fused[0].box.center - a.center), 1e-12);
  EXPECT_LE(norm(fused[1].box.center - b.center), 1e-12);
}

TEST(FuseViews, OutputNeverLarger) {
  Rng rng(3);
  const VirtualViewSet set = virtual_poses();
  std::vector<ViewPredictions> views;
  std::size_t total = 0;
  for (const auto& p : set.poses) {
    views.push_back({p, random_dets(rng, 5)});
    total += 5;
  }
  EXPECT_LE(fuse_views(views).size(), total);
}

}  // namespace
}  // namespace geodet
