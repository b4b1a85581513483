#include <gtest/gtest.h>

#include "geodet/datasets.hpp"
#include "geodet/toynet.hpp"
#include "test_util.hpp"

namespace geodet {
namespace {

FeatureGrid random_grid(Rng& rng, int H, int W, int C, double sigma = 1.0) {
  FeatureGrid g(H, W, C);
  for (auto& v : g.data()) v = rng.normal(0.0, sigma);
  return g;
}

double max_abs_diff(const FeatureGrid& a, const FeatureGrid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// --- noise schedule ----------------------------------------------------------

TEST(Schedule, NoNoiseLimit) {
  const NoiseSchedule s = make_schedule(1, 1e-12, 1e-12);
  EXPECT_NEAR(s.alpha_bar_at(1), 1.0, 1e-11);
}

TEST(Schedule, StrictlyDecreasingAndRecomputable) {
  for (auto [T, b0, b1] : {std::tuple{1000, 1e-4, 2e-2}, {50, 0.1, 0.1}, {7, 1e-3, 0.9}}) {
    const NoiseSchedule s = make_schedule(T, b0, b1);
    ASSERT_EQ(s.alpha_bar.size(), static_cast<std::size_t>(T));
    EXPECT_NEAR(s.alpha[0], 1.0 - b0, 1e-15);
    EXPECT_NEAR(s.alpha.back(), 1.0 - b1, 1e-15);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
      prod *= s.alpha[t - 1];
      EXPECT_NEAR(s.alpha_bar_at(t), prod, 1e-12);
      if (t > 1) {
        EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
        EXPECT_NEAR(s.alpha_bar_at(t), s.alpha_bar_at(t - 1) * s.alpha[t - 1], 1e-12);
      }
    }
  }
}

TEST(Schedule, RejectsInvalidRanges) {
  EXPECT_THROW(make_schedule(0, 1e-4, 2e-2), InvalidArgument);
  EXPECT_THROW(make_schedule(10, 0.0, 2e-2), InvalidArgument);
  EXPECT_THROW(make_schedule(10, 0.3, 0.2), InvalidArgument);
  EXPECT_THROW(make_schedule(10, 0.1, 1.0), InvalidArgument);
  const NoiseSchedule s = make_schedule(10, 1e-3, 1e-2);
  EXPECT_THROW(s.alpha_bar_at(0), InvalidArgument);
  EXPECT_THROW(s.alpha_bar_at(11), InvalidArgument);
}

TEST(AddNoise, Endpoints) {
  Rng rng(1);
  const FeatureGrid x = random_grid(rng, 4, 5, 3), eps = random_grid(rng, 4, 5, 3);
  EXPECT_EQ(add_noise(x, 1.0, eps).data(), x.data());
  EXPECT_EQ(add_noise(x, 0.0, eps).data(), eps.data());
}

TEST(AddNoise, FormulaAndShapes) {
  Rng rng(2);
  const NoiseSchedule s = make_schedule(100, 1e-3, 2e-2);
  const FeatureGrid x = random_grid(rng, 3, 3, 2), eps = random_grid(rng, 3, 3, 2);
  const FeatureGrid y = add_noise(x, 40, eps, s);
  const double ab = s.alpha_bar_at(40);
  for (std::size_t i = 0; i < y.size(); ++i)
    EXPECT_NEAR(y.data()[i], std::sqrt(ab) * x.data()[i] + std::sqrt(1 - ab) * eps.data()[i], 1e-15);
  EXPECT_THROW(add_noise(x, 40, FeatureGrid(3, 3, 1), s), ShapeMismatch);
  EXPECT_THROW(add_noise(x, 101, eps, s), InvalidArgument);
}

TEST(AddNoise, PreservesUnitVariance) {
  Rng rng(3);
  const FeatureGrid x = random_grid(rng, 100, 100, 10), eps = random_grid(rng, 100, 100, 10);
  const NoiseSchedule s = make_schedule(1000, 1e-4, 2e-2);
  for (int t : {1, 200, 600, 1000}) {
    const FeatureGrid y = add_noise(x, t, eps, s);
    double sum = 0, sq = 0;
    for (double v : y.data()) {
      sum += v;
      sq += v * v;
    }
    const double n = static_cast<double>(y.size());
    const double var = sq / n - (sum / n) * (sum / n);
    EXPECT_NEAR(var, 1.0, 0.02) << "t=" << t;
  }
}

// --- convolutions and blocks -------------------------------------------------------

TEST(Conv2DLayer, MatchesDirectSum) {
  Rng rng(4);
  const Conv2D conv = Conv2D::random(3, 2, 3, rng);
  const FeatureGrid x = random_grid(rng, 5, 6, 2);
  const FeatureGrid y = conv.apply(x);
  EXPECT_EQ(y.channels(), 3);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c)
      for (int o = 0; o < 3; ++o) {
        double want = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (r + dy < 0 || r + dy >= 5 || c + dx < 0 || c + dx >= 6) continue;
            for (int i = 0; i < 2; ++i) want += conv.w(dy + 1, dx + 1, i, o) * x.at(r + dy, c + dx, i);
          }
        EXPECT_NEAR(y.at(r, c, o), want, 1e-14);
      }
  EXPECT_THROW(conv.apply(FeatureGrid(3, 3, 5)), ShapeMismatch);
}

TEST(Blocks, ZeroConvsStartAtZero) {
  Rng rng(5);
  const BlockWeights w = BlockWeights::init(8, rng);
  EXPECT_TRUE(w.zin.all_zero());
  EXPECT_TRUE(w.zout.all_zero());
  EXPECT_FALSE(w.base.all_zero());
  EXPECT_EQ(w.copy.weight, w.base.weight);
}

TEST(Blocks, ControlNetAtInitEqualsBase) {
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const BlockWeights w = BlockWeights::init(8, rng);
    const FeatureGrid x = random_grid(rng, 8, 8, 8), c = random_grid(rng, 8, 8, 8, 5.0);
    const FeatureGrid y = controlnet_block_forward(x, c, w);
    EXPECT_EQ(y.height(), 8);
    EXPECT_EQ(y.channels(), 8);
    EXPECT_LE(max_abs_diff(y, block_forward(x, w.base)), 1e-12);
  }
}

TEST(Blocks, ZoutPerturbationChangesOutput) {
  Rng rng(7);
  BlockWeights w = BlockWeights::init(4, rng);
  const FeatureGrid x = random_grid(rng, 6, 6, 4), c = random_grid(rng, 6, 6, 4);
  const FeatureGrid before = controlnet_block_forward(x, c, w);
  w.zout.w(0, 0, 1, 2) += 1e-3;
  EXPECT_GT(max_abs_diff(before, controlnet_block_forward(x, c, w)), 0.0);
}

TEST(Blocks, ShapeMismatchesRejected) {
  Rng rng(8);
  const BlockWeights w = BlockWeights::init(4, rng);
  EXPECT_THROW(controlnet_block_forward(FeatureGrid(4, 4, 4), FeatureGrid(5, 4, 4), w), ShapeMismatch);
  EXPECT_THROW(controlnet_block_forward(FeatureGrid(4, 4, 3), FeatureGrid(4, 4, 4), w), ShapeMismatch);
}

BlockWeights trained_block(Rng& rng, int ch, bool warp) {
  BlockWeights w = BlockWeights::init(ch, rng, warp);
  w.zin = Conv2D::random(1, ch, ch, rng);
  w.zout = Conv2D::random(1, ch, ch, rng);
  for (auto& v : w.copy.weight) v += rng.normal(0, 0.1);
  return w;
}

const CameraIntrinsics kK{20, 20, 7.5, 7.5, 16, 16};

TEST(GeometricBlock, IdentityPoseEqualsControlNet) {
  Rng rng(9);
  for (int i = 0; i < 10; ++i) {
    const BlockWeights w = trained_block(rng, 4, true);
    const FeatureGrid x = random_grid(rng, 16, 16, 4), c = random_grid(rng, 16, 16, 4);
    const FeatureGrid a = geometric_block_forward(x, c, RigidTransform::identity(), kK, w);
    EXPECT_LE(max_abs_diff(a, controlnet_block_forward(x, c, w)), 1e-12);
  }
}

TEST(GeometricBlock, ZeroZoutEqualsBaseForAnyPose) {
  Rng rng(10);
  for (int i = 0; i < 10; ++i) {
    BlockWeights w = trained_block(rng, 4, true);
    w.zout = Conv2D::zeros(1, 4, 4);
    const FeatureGrid x = random_grid(rng, 16, 16, 4), c = random_grid(rng, 16, 16, 4);
    const FeatureGrid a = geometric_block_forward(x, c, testing::random_pose(rng), kK, w);
    EXPECT_LE(max_abs_diff(a, block_forward(x, w.base)), 1e-12);
  }
}

TEST(GeometricBlock, WarpFlagGatesTheWarp) {
  Rng rng(11);
  BlockWeights w = trained_block(rng, 4, false);
  const FeatureGrid x = random_grid(rng, 16, 16, 4), c = random_grid(rng, 16, 16, 4);
  const RigidTransform T{axis_rotation(1, 0.1), {0.3, 0, 0}};
  EXPECT_EQ(geometric_block_forward(x, c, T, kK, w).data(), controlnet_block_forward(x, c, w).data());
  w.warp_enabled = true;
  EXPECT_GT(max_abs_diff(geometric_block_forward(x, c, T, kK, w), controlnet_block_forward(x, c, w)),
            1e-6);
}

TEST(GeometricBlock, RotationDisplacementFollowsHomography) {
  // With a 1x1 identity zout and a pure rotation, the block's residual over
  // the base branch is the control branch resampled through the homography.
  Rng rng(12);
  BlockWeights w = trained_block(rng, 3, true);
  w.zout = Conv2D::zeros(1, 3, 3);
  for (int k = 0; k < 3; ++k) w.zout.w(0, 0, k, k) = 1.0;
  const FeatureGrid x = random_grid(rng, 16, 16, 3), c = random_grid(rng, 16, 16, 3);
  const Mat3d R = axis_rotation(1, deg_to_rad(5));
  const FeatureGrid y = geometric_block_forward(x, c, RigidTransform::rotation(R), kK, w);
  const FeatureGrid base = block_forward(x, w.base);
  const FeatureGrid branch = block_forward(detail::add(x, w.zin.apply(c)), w.copy);
  const Mat3d H = rotation_homography(kK, kK, R);
  for (int r = 0; r < 16; ++r)
    for (int col = 0; col < 16; ++col) {
      const Pixel p = apply_homography(H, {double(col), double(r)});
      const Feature want = bilinear_sample(branch, p.u, p.v);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(y.at(r, col, k) - base.at(r, col, k), want[k], 1e-12);
    }
}

TEST(FuseBranches, SumAndOrder) {
  Rng rng(13);
  const FeatureGrid a = random_grid(rng, 4, 4, 2), b = random_grid(rng, 4, 4, 2),
                    c = random_grid(rng, 4, 4, 2);
  const FeatureGrid zero(4, 4, 2);
  EXPECT_EQ(fuse_branches(a, zero, zero).data(), a.data());
  const FeatureGrid s = fuse_branches(a, b, c);
  for (std::size_t i = 0; i < s.size(); ++i)
    EXPECT_NEAR(s.data()[i], a.data()[i] + b.data()[i] + c.data()[i], 1e-12);
  EXPECT_EQ(fuse_branches(a, a, b).data(), fuse_branches(a, a, b).data());
  EXPECT_THROW(fuse_branches(a, FeatureGrid(4, 4, 3), c), ShapeMismatch);
}

TEST(ToyNetModel, DefaultConfig) {
  const ToyNet net = ToyNet::init({}, 1);
  ASSERT_EQ(net.blocks.size(), 2u);
  EXPECT_EQ(net.blocks[0].channels(), 8);
  EXPECT_TRUE(net.blocks[0].warp_enabled);
  EXPECT_TRUE(net.blocks[1].warp_enabled);
  const ToyNet four = ToyNet::init({4, 8, 2}, 1);
  EXPECT_FALSE(four.blocks[0].warp_enabled);
  EXPECT_FALSE(four.blocks[1].warp_enabled);
  EXPECT_TRUE(four.blocks[2].warp_enabled);
  EXPECT_TRUE(four.blocks[3].warp_enabled);
}

TEST(ToyNetModel, ForwardAtInitEqualsBase) {
  Rng rng(14);
  const ToyNet net = ToyNet::init({}, 2);
  const FeatureGrid x = random_grid(rng, 16, 16, 8), c = random_grid(rng, 16, 16, 8);
  const FeatureGrid a = net.forward(x, c, testing::random_pose(rng), kK);
  EXPECT_LE(max_abs_diff(a, net.base_forward(x)), 1e-12);
}

TEST(Pipeline, TimestepAndExtraction) {
  const FeaturePipeline p = FeaturePipeline::init({}, 3);
  EXPECT_EQ(p.timestep, 200);
  Rng rng(15);
  const FeatureGrid img = random_grid(rng, 16, 16, 8), eps = random_grid(rng, 16, 16, 8);
  const FeatureGrid f = p.extract(img, eps, kK);
  // At initialization every branch equals the frozen net, so the sum is 3x.
  const FeatureGrid base = p.geometric.base_forward(add_noise(img, p.timestep, eps, p.schedule));
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(f.data()[i], 3 * base.data()[i], 1e-12);
}

TEST(Weights, RoundTrip) {
  testing::TempDir dir("weights");
  const ToyNet net = ToyNet::init({3, 4, 1}, 9);
  const std::string path = dir.file("net.bin");
  write_weights(path, net);
  const ToyNet back = read_weights(path);
  ASSERT_EQ(back.blocks.size(), 3u);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(back.blocks[s].warp_enabled, net.blocks[s].warp_enabled);
    EXPECT_TRUE(back.blocks[s].zin.all_zero());
    EXPECT_TRUE(back.blocks[s].zout.all_zero());
    ASSERT_EQ(back.blocks[s].base.weight.size(), net.blocks[s].base.weight.size());
    for (std::size_t i = 0; i < net.blocks[s].base.weight.size(); ++i)
      EXPECT_EQ(back.blocks[s].base.weight[i], static_cast<float>(net.blocks[s].base.weight[i]));
  }
  EXPECT_THROW(read_weights(dir.file("missing.bin")), ParseError);
}

// --- loss and gradient -------------------------------------------------------------

struct Fixture {
  CameraIntrinsics K{230, 230, 128, 128, 256, 256};
  Box3D gt{{0.4, -0.2, 4.0}, {0.8, 1.1, 0.6}, axis_angle_rotation(Vec3d(1, 2, 3) / norm(Vec3d(1, 2, 3)), 0.6)};
  Roi2D roi = project_roi(gt, K);
};

TEST(Loss, ZeroAtGroundTruth) {
  const Fixture f;
  const CuboidParams p = encode_cuboid(f.gt, f.roi, f.K);
  const LossBreakdown l = detection_loss(p, f.gt, f.roi, f.K);
  EXPECT_NEAR(l.l_3d, 0.0, 1e-12);
  EXPECT_NEAR(l.total, 0.0, 1e-12);
}

TEST(Loss, DecompositionInvariant) {
  Rng rng(16);
  const Fixture f;
  for (int i = 0; i < 50; ++i) {
    auto a = encode_cuboid(f.gt, f.roi, f.K).to_array();
    for (auto& e : a) e += rng.normal(0, 0.1);
    const double l_rpn = rng.uniform(0, 2), l_2d = rng.uniform(0, 2);
    const LossBreakdown l = detection_loss(CuboidParams::from_array(a), f.gt, f.roi, f.K, l_rpn, l_2d);
    EXPECT_NEAR(l.total, l_rpn + l_2d + std::sqrt(2.0) * std::exp(-l.mu) * l.l_3d + l.mu, 1e-12);
    EXPECT_EQ(l.mu, a[12]);
  }
  EXPECT_THROW(detection_loss(CuboidParams{}, f.gt, f.roi, f.K, -1.0, 0.0), InvalidArgument);
}

TEST(Loss, CornerL1MatchesDirectSum) {
  Rng rng(17);
  const Fixture f;
  auto a = encode_cuboid(f.gt, f.roi, f.K).to_array();
  for (auto& e : a) e += rng.normal(0, 0.1);
  const CuboidParams p = CuboidParams::from_array(a);
  const auto pc = box_corners(decode_cuboid(p, f.roi, f.K));
  const auto gc = box_corners(f.gt);
  double want = 0;
  for (int k = 0; k < 8; ++k)
    for (int i = 0; i < 3; ++i) want += std::abs(pc[k][i] - gc[k][i]);
  EXPECT_NEAR(detection_loss(p, f.gt, f.roi, f.K).l_3d, want, 1e-12);
}

TEST(Loss, DoublingCornerErrorsDoublesL3d) {
  // A pure center shift moves all corners by the same vector.
  const Fixture f;
  const CuboidParams p = encode_cuboid(f.gt, f.roi, f.K);
  Box3D g1 = f.gt, g2 = f.gt;
  g1.center = g1.center + Vec3d(0.1, -0.05, 0.2);
  g2.center = g2.center + Vec3d(0.2, -0.1, 0.4);
  const double l1 = detection_loss(p, g1, f.roi, f.K).l_3d;
  const double l2 = detection_loss(p, g2, f.roi, f.K).l_3d;
  EXPECT_NEAR(l2, 2 * l1, 1e-12);
  EXPECT_NEAR(l1, 8 * 0.35, 1e-12);
}

TEST(Loss, MuMinimizer) {
  for (double l3d : {0.05, 0.7, 3.0}) {
    // 1-D gradient descent on sqrt(2) exp(-mu) L + mu.
    double mu = 0.0;
    for (int i = 0; i < 500; ++i) mu -= 0.5 * (1.0 - std::sqrt(2.0) * std::exp(-mu) * l3d);
    EXPECT_NEAR(mu, std::log(std::sqrt(2.0) * l3d), 1e-6);
  }
}

TEST(Loss, DisentangledModeZeroAtGroundTruth) {
  const Fixture f;
  LossConfig cfg;
  cfg.mode = L3DMode::Disentangled;
  const CuboidParams p = encode_cuboid(f.gt, f.roi, f.K);
  EXPECT_NEAR(detection_loss(p, f.gt, f.roi, f.K, 0, 0, cfg).l_3d, 0.0, 1e-11);
  // Perturbing only dims leaves the location/depth/rotation terms at zero.
  CuboidParams q = p;
  q.wbar += 0.1;
  const double dis = detection_loss(q, f.gt, f.roi, f.K, 0, 0, cfg).l_3d;
  const double full = detection_loss(q, f.gt, f.roi, f.K).l_3d;
  EXPECT_NEAR(dis, full, 1e-12);
}

TEST(Gradient, MuComponent) {
  Rng rng(18);
  const GradCheckCase c = random_gradcheck_case(rng);
  const auto g = loss_gradient(c.pred, c.gt, c.roi, c.K);
  const double l3d = detection_loss(c.pred, c.gt, c.roi, c.K).l_3d;
  EXPECT_NEAR(g[12], 1.0 - std::sqrt(2.0) * std::exp(-c.pred.mu) * l3d, 1e-12);
  CuboidParams at_opt = c.pred;
  at_opt.mu = std::log(std::sqrt(2.0) * l3d);
  EXPECT_NEAR(loss_gradient(at_opt, c.gt, c.roi, c.K)[12], 0.0, 1e-9);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (auto mode : {L3DMode::FullyPredicted, L3DMode::Disentangled})
    for (bool allo : {true, false}) {
      LossConfig cfg;
      cfg.mode = mode;
      cfg.decode.allocentric = allo;
      const GradCheckReport r = gradient_check(21, 30, 1e-5, false, cfg);
      EXPECT_EQ(r.cases, 30);
      EXPECT_LE(r.max_relative_error, 1e-4);
    }
}

TEST(Gradient, CorruptionIsDetected) {
  EXPECT_GT(gradient_check(21, 5, 1e-5, true).max_relative_error, 1e-4);
}

TEST(Gradient, DimensionSignConsistency) {
  const Fixture f;
  const CuboidParams p0 = encode_cuboid(f.gt, f.roi, f.K);
  for (int i = 3; i < 6; ++i)
    for (double delta : {0.05, -0.05}) {
      auto a = p0.to_array();
      a[i] += delta;
      const auto g = loss_gradient(CuboidParams::from_array(a), f.gt, f.roi, f.K);
      EXPECT_GT(g[i] * delta, 0.0) << "parameter " << i;
    }
}

TEST(Gradient, KinkIsReported) {
  const Fixture f;
  EXPECT_THROW(loss_gradient(encode_cuboid(f.gt, f.roi, f.K), f.gt, f.roi, f.K), NonDifferentiablePoint);
}

TEST(Gradient, ConstantZeroResidualsAreNotKinks) {
  // The (u, v) term keeps the true depth, so its z residuals are exactly zero
  // for every parameter value.
  const Fixture f;
  LossConfig cfg;
  cfg.mode = L3DMode::Disentangled;
  auto a = encode_cuboid(f.gt, f.roi, f.K).to_array();
  const double steps[12] = {0.03, -0.02, 0.05, 0.1, -0.1, 0.07, 0.2, -0.1, 0.1, 0.05, 0.15, -0.2};
  for (std::size_t i = 0; i < 12; ++i) a[i] += steps[i];
  const CuboidParams p = CuboidParams::from_array(a);
  std::array<double, kCuboidParamCount> g{};
  ASSERT_NO_THROW(g = loss_gradient(p, f.gt, f.roi, f.K, cfg));
  const auto fd = finite_difference_gradient(p, f.gt, f.roi, f.K, 1e-5, cfg);
  EXPECT_LE(gradient_relative_error(g, fd), 1e-4);
}

TEST(Fit, GroundTruthIsFixedPoint) {
  // Exact fixed point: identity rotation on the optical axis decodes exactly.
  const CameraIntrinsics K{512, 512, 128, 128, 256, 256};
  const Box3D gt{{0, 0, 3}, {1, 1, 1}, Mat3d::identity()};
  const Roi2D roi{78, 78, 100, 100};
  const CuboidParams init = encode_cuboid(gt, roi, K);
  ASSERT_EQ(detection_loss(init, gt, roi, K).l_3d, 0.0);
  const FitResult r = fit_cuboid(gt, roi, K, init, 100, 1e-2);
  EXPECT_EQ(r.steps_run, 100);
  EXPECT_EQ(r.final_loss.l_3d, 0.0);
  const auto a = init.to_array(), b = r.params.to_array();
  for (int i = 0; i < 12; ++i) EXPECT_EQ(a[i], b[i]);
  // The uncertainty keeps descending with unit slope while L3D is zero.
  EXPECT_NEAR(r.params.mu, -100 * 1e-2, 1e-12);
}

TEST(Fit, DecreasesLossAndIsDeterministic) {
  Rng rng(19);
  const Fixture f;
  auto a = encode_cuboid(f.gt, f.roi, f.K).to_array();
  for (auto& e : a) e *= 1.0 + rng.uniform(-0.05, 0.05);
  const CuboidParams init = CuboidParams::from_array(a);
  const double start = detection_loss(init, f.gt, f.roi, f.K).l_3d;
  const FitResult r1 = fit_cuboid(f.gt, f.roi, f.K, init, 2000, 1e-3);
  const FitResult r2 = fit_cuboid(f.gt, f.roi, f.K, init, 2000, 1e-3);
  EXPECT_LT(r1.final_loss.l_3d, start);
  EXPECT_FALSE(r1.diverged);
  EXPECT_EQ(r1.params.to_array(), r2.params.to_array());
  EXPECT_EQ(r1.l3d_history.size(), 2000u);
}

}  // namespace
}  // namespace geodet
