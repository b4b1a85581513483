#pragma once

// Toy-scale diffusion-feature pipeline: forward noising, ControlNet-style
// blocks with zero-initialized 1x1 convolutions, the geometric block that
// warps the copied branch into the target view, three-branch feature fusion,
// and the cube-head detection loss with exact gradients.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geodet/cuboid.hpp"
#include "geodet/dual.hpp"
#include "geodet/errors.hpp"
#include "geodet/featgrid.hpp"
#include "geodet/geometry.hpp"
#include "geodet/io.hpp"
#include "geodet/rng.hpp"

namespace geodet {

// ---------------------------------------------------------------------------
// Noise schedule

struct NoiseSchedule {
  int steps = 0;
  std::vector<double> alpha;      // alpha[k-1] = alpha_k
  std::vector<double> alpha_bar;  // alpha_bar[t-1] = prod_{k<=t} alpha_k

  double alpha_bar_at(int t) const {
    if (t < 1 || t > steps) throw InvalidArgument("timestep out of range");
    return alpha_bar[static_cast<std::size_t>(t - 1)];
  }
};

/// Linear beta schedule; alpha_k = 1 - beta_k.
inline NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw InvalidArgument("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw InvalidArgument("betas must satisfy 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.steps = steps;
  double prod = 1.0;
  for (int k = 0; k < steps; ++k) {
    const double beta =
        steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * k / (steps - 1);
    s.alpha.push_back(1.0 - beta);
    prod *= 1.0 - beta;
    s.alpha_bar.push_back(prod);
  }
  return s;
}

inline FeatureGrid add_noise(const FeatureGrid& x, double alpha_bar, const FeatureGrid& eps) {
  if (!x.same_shape(eps)) throw ShapeMismatch("add_noise: x and eps differ in shape");
  const double a = std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);
  FeatureGrid out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a * x.data()[i] + b * eps.data()[i];
  return out;
}

inline FeatureGrid add_noise(const FeatureGrid& x, int t, const FeatureGrid& eps,
                             const NoiseSchedule& sched) {
  return add_noise(x, sched.alpha_bar_at(t), eps);
}

// ---------------------------------------------------------------------------
// Convolutions and blocks

/// k x k convolution with zero padding; weights laid out [ky][kx][in][out].
struct Conv2D {
  int kernel = 1;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  static Conv2D zeros(int kernel, int in_ch, int out_ch) {
    Conv2D c{kernel, in_ch, out_ch, {}, {}};
    c.weight.assign(static_cast<std::size_t>(kernel * kernel * in_ch * out_ch), 0.0);
    c.bias.assign(static_cast<std::size_t>(out_ch), 0.0);
    return c;
  }

  /// He-style scaled normal weights, zero bias.
  static Conv2D random(int kernel, int in_ch, int out_ch, Rng& rng) {
    Conv2D c = zeros(kernel, in_ch, out_ch);
    const double scale = std::sqrt(1.0 / (kernel * kernel * in_ch));
    for (auto& w : c.weight) w = rng.normal(0.0, scale);
    return c;
  }

  double& w(int ky, int kx, int i, int o) {
    return weight[static_cast<std::size_t>(((ky * kernel + kx) * in_channels + i) * out_channels + o)];
  }
  double w(int ky, int kx, int i, int o) const {
    return weight[static_cast<std::size_t>(((ky * kernel + kx) * in_channels + i) * out_channels + o)];
  }

  bool all_zero() const {
    for (double v : weight)
      if (v != 0.0) return false;
    for (double v : bias)
      if (v != 0.0) return false;
    return true;
  }

  FeatureGrid apply(const FeatureGrid& x) const {
    if (x.channels() != in_channels) throw ShapeMismatch("conv: input channel mismatch");
    const int H = x.height(), W = x.width(), r = kernel / 2;
    FeatureGrid out(H, W, out_channels);
    for (int row = 0; row < H; ++row)
      for (int col = 0; col < W; ++col) {
        auto dst = out.texel(row, col);
        for (int o = 0; o < out_channels; ++o) dst[o] = bias[static_cast<std::size_t>(o)];
        for (int ky = 0; ky < kernel; ++ky) {
          const int yy = row + ky - r;
          if (yy < 0 || yy >= H) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int xx = col + kx - r;
            if (xx < 0 || xx >= W) continue;
            const auto src = x.texel(yy, xx);
            for (int i = 0; i < in_channels; ++i)
              for (int o = 0; o < out_channels; ++o) dst[o] += w(ky, kx, i, o) * src[i];
          }
        }
      }
    return out;
  }
};

/// Parameters of one conditioned block: the frozen block, its trainable copy
/// and the two zero convolutions around the copy.
struct BlockWeights {
  Conv2D base;
  Conv2D copy;
  Conv2D zin;
  Conv2D zout;
  bool warp_enabled = false;

  /// Fresh block: random frozen weights, copy initialized from them, zero
  /// convolutions identically zero.
  static BlockWeights init(int channels, Rng& rng, bool warp_enabled = false) {
    BlockWeights b;
    b.base = Conv2D::random(3, channels, channels, rng);
    b.copy = b.base;
    b.zin = Conv2D::zeros(1, channels, channels);
    b.zout = Conv2D::zeros(1, channels, channels);
    b.warp_enabled = warp_enabled;
    return b;
  }

  int channels() const { return base.out_channels; }
};

/// The toy frozen block: 3x3 convolution followed by tanh.
inline FeatureGrid block_forward(const FeatureGrid& x, const Conv2D& conv) {
  FeatureGrid y = conv.apply(x);
  for (auto& v : y.data()) v = std::tanh(v);
  return y;
}

namespace detail {

inline void check_block_inputs(const FeatureGrid& x, const FeatureGrid& c, const BlockWeights& w) {
  if (x.height() != c.height() || x.width() != c.width())
    throw ShapeMismatch("block: x and condition differ in spatial size");
  if (x.channels() != w.base.in_channels || c.channels() != w.zin.in_channels)
    throw ShapeMismatch("block: channel configuration mismatch");
}

inline FeatureGrid add(FeatureGrid a, const FeatureGrid& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("elementwise add: shapes differ");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
  return a;
}

/// copy(x + zin(c)): the trainable branch before the output zero conv.
inline FeatureGrid control_branch(const FeatureGrid& x, const FeatureGrid& c,
                                  const BlockWeights& w) {
  return block_forward(add(x, w.zin.apply(c)), w.copy);
}

}  // namespace detail

/// y = F(x) + zout(F'(x + zin(c)))
inline FeatureGrid controlnet_block_forward(const FeatureGrid& x, const FeatureGrid& c,
                                            const BlockWeights& w) {
  detail::check_block_inputs(x, c, w);
  return detail::add(block_forward(x, w.base), w.zout.apply(detail::control_branch(x, c, w)));
}

/// y = F(x) + zout(G(F'(x + zin(c)), T)) when the block warps; otherwise the
/// plain ControlNet block.
inline FeatureGrid geometric_block_forward(const FeatureGrid& x, const FeatureGrid& c,
                                           const RigidTransform& T, const CameraIntrinsics& K,
                                           const BlockWeights& w, const WarpConfig& cfg = {}) {
  detail::check_block_inputs(x, c, w);
  FeatureGrid branch = detail::control_branch(x, c, w);
  if (w.warp_enabled) branch = epipolar_warp(branch, K, K, T, cfg);
  return detail::add(block_forward(x, w.base), w.zout.apply(branch));
}

/// Elementwise (f_base + f_geo) + f_sem.
inline FeatureGrid fuse_branches(const FeatureGrid& f_base, const FeatureGrid& f_geo,
                                 const FeatureGrid& f_sem) {
  if (!f_base.same_shape(f_geo) || !f_base.same_shape(f_sem))
    throw ShapeMismatch("fuse_branches: shapes differ");
  FeatureGrid out = f_base;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = (f_base.data()[i] + f_geo.data()[i]) + f_sem.data()[i];
  return out;
}

// ---------------------------------------------------------------------------
// Multi-stage toy network

struct ToyNetConfig {
  int stages = 2;
  int channels = 8;
  /// Warp only in the last `warp_last_n` stages.
  int warp_last_n = 2;
};

struct ToyNet {
  std::vector<BlockWeights> blocks;

  static ToyNet init(const ToyNetConfig& cfg, std::uint64_t seed) {
    if (cfg.stages < 1 || cfg.channels < 1) throw InvalidArgument("toy net needs stages and channels");
    Rng rng(seed);
    ToyNet net;
    for (int s = 0; s < cfg.stages; ++s)
      net.blocks.push_back(BlockWeights::init(cfg.channels, rng, s >= cfg.stages - cfg.warp_last_n));
    return net;
  }

  /// Frozen path only.
  FeatureGrid base_forward(FeatureGrid x) const {
    for (const auto& b : blocks) x = block_forward(x, b.base);
    return x;
  }

  /// Conditioned path; every stage receives the same condition features.
  FeatureGrid forward(FeatureGrid x, const FeatureGrid& c, const RigidTransform& T,
                      const CameraIntrinsics& K, const WarpConfig& cfg = {}) const {
    for (const auto& b : blocks) x = geometric_block_forward(x, c, T, K, b, cfg);
    return x;
  }
};

/// Single-step feature extraction for detection: the noised input goes
/// through the frozen net, the geometric net at identity pose and the
/// semantic net, and the three outputs are summed.
struct FeaturePipeline {
  ToyNet geometric;
  ToyNet semantic;
  NoiseSchedule schedule = make_schedule(1000, 1e-4, 2e-2);
  int timestep = 200;

  static FeaturePipeline init(const ToyNetConfig& cfg, std::uint64_t seed) {
    FeaturePipeline p;
    p.geometric = ToyNet::init(cfg, seed);
    // The semantic branch shares the frozen weights and never warps.
    p.semantic = p.geometric;
    for (auto& b : p.semantic.blocks) b.warp_enabled = false;
    p.timestep = std::max(1, p.schedule.steps / 5);
    return p;
  }

  FeatureGrid extract(const FeatureGrid& image, const FeatureGrid& eps,
                      const CameraIntrinsics& K) const {
    const FeatureGrid x_t = add_noise(image, timestep, eps, schedule);
    const RigidTransform id = RigidTransform::identity();
    return fuse_branches(geometric.base_forward(x_t), geometric.forward(x_t, x_t, id, K),
                         semantic.forward(x_t, x_t, id, K));
  }
};

// Weight files: the tensors are stored back to back in the FeatureGrid binary
// convention (H = rows, W = columns, C = 1) and described by a JSON manifest
// written next to them at `<path>.json`.

namespace detail {

inline FeatureGrid tensor_grid(const std::vector<double>& v, int rows, int cols) {
  return FeatureGrid(rows, cols, 1, v);
}

}  // namespace detail

inline void write_weights(const std::string& path, const ToyNet& net) {
  std::ostringstream bin;
  nlohmann::ordered_json manifest;
  manifest["format_version"] = 1;
  manifest["stages"] = net.blocks.size();
  manifest["channels"] = net.blocks.empty() ? 0 : net.blocks.front().channels();
  auto& tensors = manifest["tensors"] = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < net.blocks.size(); ++s) {
    const auto& b = net.blocks[s];
    const std::pair<const char*, const Conv2D*> convs[] = {
        {"base", &b.base}, {"copy", &b.copy}, {"zin", &b.zin}, {"zout", &b.zout}};
    for (const auto& [name, conv] : convs) {
      const int rows = conv->kernel * conv->kernel * conv->in_channels;
      write_grid(bin, detail::tensor_grid(conv->weight, rows, conv->out_channels));
      write_grid(bin, detail::tensor_grid(conv->bias, 1, conv->out_channels));
      tensors.push_back({{"name", "stage" + std::to_string(s) + "." + name},
                         {"kernel", conv->kernel},
                         {"in_channels", conv->in_channels},
                         {"out_channels", conv->out_channels}});
    }
    tensors.back()["warp_enabled"] = b.warp_enabled;
  }
  write_file_atomic(path, bin.str());
  write_file_atomic(path + ".json", manifest.dump(2) + "\n");
}

inline ToyNet read_weights(const std::string& path) {
  const std::string manifest_path = path + ".json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path, e.what());
  }
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw ParseError(path, "cannot open weights");
  const auto it = manifest.find("tensors");
  if (it == manifest.end() || !it->is_array()) throw ParseError(manifest_path, "missing tensors array");
  const auto& tensors = *it;
  if (tensors.size() % 4 != 0) throw ParseError(manifest_path, "tensor count is not a multiple of 4");
  ToyNet net;
  for (std::size_t i = 0; i < tensors.size(); i += 4) {
    BlockWeights b;
    Conv2D* convs[] = {&b.base, &b.copy, &b.zin, &b.zout};
    for (std::size_t j = 0; j < 4; ++j) {
      const auto& t = tensors[i + j];
      Conv2D& c = *convs[j];
      try {
        c.kernel = t.at("kernel").get<int>();
        c.in_channels = t.at("in_channels").get<int>();
        c.out_channels = t.at("out_channels").get<int>();
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest_path + ": tensors[" + std::to_string(i + j) + "]", e.what());
      }
      c.weight = read_grid(bin, path).data();
      c.bias = read_grid(bin, path).data();
      if (c.weight.size() != static_cast<std::size_t>(c.kernel * c.kernel * c.in_channels * c.out_channels) ||
          c.bias.size() != static_cast<std::size_t>(c.out_channels))
        throw ParseError(path, "tensor size disagrees with manifest");
    }
    b.warp_enabled = tensors[i + 3].value("warp_enabled", false);
    net.blocks.push_back(std::move(b));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Detection loss

struct LossBreakdown {
  double l_rpn = 0.0;
  double l_2d = 0.0;
  double l_3d = 0.0;
  double mu = 0.0;
  double total = 0.0;

  static LossBreakdown make(double l_rpn, double l_2d, double l_3d, double mu) {
    return {l_rpn, l_2d, l_3d, mu, l_rpn + l_2d + std::sqrt(2.0) * std::exp(-mu) * l_3d + mu};
  }
};

enum class L3DMode {
  /// Every corner comes from the fully decoded prediction.
  FullyPredicted,
  /// Sum of per-group terms; each substitutes ground truth for all but one
  /// group among (u, v), depth, dimensions and rotation.
  Disentangled,
};

struct LossConfig {
  DecodeConfig decode;
  L3DMode mode = L3DMode::FullyPredicted;
};

namespace detail {

inline constexpr double kKinkTolerance = 1e-12;

template <typename T>
struct L1Accumulator {
  T sum = T(0.0);
  double min_abs = 1e300;

  void add(const Corners<T>& pred, const Corners<double>& gt) {
    for (std::size_t k = 0; k < 8; ++k)
      for (std::size_t i = 0; i < 3; ++i) {
        const T d = pred[k][i] - T(gt[k][i]);
        const double a = value_of(d);
        // Residuals that do not depend on the parameters are not kinks.
        if (!is_constant(d)) min_abs = std::min(min_abs, std::abs(a));
        if (a > 0.0)
          sum = sum + d;
        else if (a < 0.0)
          sum = sum - d;
        // a == 0 contributes the zero subgradient.
      }
  }
};

/// Corner L1 on any scalar, for the 12 geometric parameters q.
template <typename T>
L1Accumulator<T> corner_l1(const std::array<T, 12>& q, const Box3D& gt, const Roi2D& roi,
                           const CameraIntrinsics& K, const LossConfig& cfg) {
  using std::exp;
  const Corners<double> gt_corners = box_corners(gt);
  L1Accumulator<T> acc;
  if (cfg.mode == L3DMode::FullyPredicted) {
    acc.add(decode_corners(q, roi, K, cfg.decode), gt_corners);
    return acc;
  }
  const Pixel c_gt = project(K, gt.center);
  const T u_gt = T((c_gt.u - roi.rx) / roi.rw);
  const T v_gt = T((c_gt.v - roi.ry) / roi.rh);
  const T z_gt = T(gt.center[2]);
  const Vec3<T> center_gt = gt.center.cast<T>();
  const Vec3<T> dims_gt = gt.dims.cast<T>();
  const Mat3<T> R_gt = gt.R.cast<T>();
  const T z_pred = metric_depth(q[2], K, cfg.decode.depth);
  const std::array<T, 6> p{q[6], q[7], q[8], q[9], q[10], q[11]};

  acc.add(compose_corners(cuboid_center(q[0], q[1], z_gt, roi, K), dims_gt, R_gt), gt_corners);
  acc.add(compose_corners(cuboid_center(u_gt, v_gt, z_pred, roi, K), dims_gt, R_gt), gt_corners);
  acc.add(compose_corners(center_gt, Vec3<T>(exp(q[3]), exp(q[4]), exp(q[5])), R_gt), gt_corners);
  acc.add(compose_corners(center_gt, dims_gt, egocentric_rotation(p, center_gt, cfg.decode)),
          gt_corners);
  return acc;
}

using Grad12 = Dual<12>;

inline L1Accumulator<Grad12> corner_l1_with_gradient(const CuboidParams& pred, const Box3D& gt,
                                                     const Roi2D& roi, const CameraIntrinsics& K,
                                                     const LossConfig& cfg) {
  const auto a = pred.to_array();
  std::array<Grad12, 12> q;
  for (std::size_t i = 0; i < 12; ++i) q[i] = Grad12::variable(a[i], i);
  return corner_l1(q, gt, roi, K, cfg);
}

/// Gradient of the total loss with the zero subgradient at L1 kinks.
inline std::array<double, kCuboidParamCount> loss_subgradient(const CuboidParams& pred,
                                                              const Box3D& gt, const Roi2D& roi,
                                                              const CameraIntrinsics& K,
                                                              const LossConfig& cfg,
                                                              double* min_abs_residual = nullptr) {
  const auto acc = corner_l1_with_gradient(pred, gt, roi, K, cfg);
  const double weight = std::sqrt(2.0) * std::exp(-pred.mu);
  std::array<double, kCuboidParamCount> g{};
  for (std::size_t i = 0; i < 12; ++i) g[i] = weight * acc.sum.v[i];
  g[12] = 1.0 - weight * acc.sum.a;
  if (min_abs_residual) *min_abs_residual = acc.min_abs;
  return g;
}

}  // namespace detail

/// L = L_RPN + L_2D + sqrt(2) exp(-mu) L_3D + mu, with L_3D the L1 distance
/// between predicted and ground-truth corners.
inline LossBreakdown detection_loss(const CuboidParams& pred, const Box3D& gt_box, const Roi2D& roi,
                                    const CameraIntrinsics& K, double l_rpn = 0.0,
                                    double l_2d = 0.0, const LossConfig& cfg = {}) {
  pred.validate();
  roi.validate();
  K.validate();
  if (!(l_rpn >= 0.0) || !(l_2d >= 0.0))
    throw InvalidArgument("external loss terms must be non-negative");
  const auto a = pred.to_array();
  std::array<double, 12> q;
  std::copy_n(a.begin(), 12, q.begin());
  const double l3d = detail::corner_l1(q, gt_box, roi, K, cfg).sum;
  return LossBreakdown::make(l_rpn, l_2d, l3d, pred.mu);
}

/// Exact gradient of the total loss with respect to the 13 parameters.
/// Throws NonDifferentiablePoint when a corner residual sits on the L1 kink.
inline std::array<double, kCuboidParamCount> loss_gradient(const CuboidParams& pred,
                                                           const Box3D& gt_box, const Roi2D& roi,
                                                           const CameraIntrinsics& K,
                                                           const LossConfig& cfg = {}) {
  pred.validate();
  roi.validate();
  K.validate();
  double min_abs = 0.0;
  const auto g = detail::loss_subgradient(pred, gt_box, roi, K, cfg, &min_abs);
  if (min_abs < detail::kKinkTolerance)
    throw NonDifferentiablePoint("a corner residual is on the L1 kink");
  return g;
}

struct FitResult {
  CuboidParams params;
  LossBreakdown final_loss;
  int steps_run = 0;
  bool diverged = false;
  std::vector<double> l3d_history;
  std::vector<double> mu_history;
};

/// Plain gradient descent on the detection loss (zero subgradient at kinks).
/// Stops early, flagging divergence, if the parameters leave the valid domain.
inline FitResult fit_cuboid(const Box3D& gt_box, const Roi2D& roi, const CameraIntrinsics& K,
                            const CuboidParams& init, int steps, double lr,
                            const LossConfig& cfg = {}) {
  init.validate();
  FitResult r;
  r.params = init;
  for (int s = 0; s < steps; ++s) {
    const auto g = detail::loss_subgradient(r.params, gt_box, roi, K, cfg);
    auto a = r.params.to_array();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= lr * g[i];
    const CuboidParams next = CuboidParams::from_array(a);
    try {
      next.validate();
      (void)decode_cuboid(next, roi, K, cfg.decode);
    } catch (const Error&) {
      r.diverged = true;
      break;
    }
    r.params = next;
    r.steps_run = s + 1;
    const auto loss = detection_loss(r.params, gt_box, roi, K, 0.0, 0.0, cfg);
    r.l3d_history.push_back(loss.l_3d);
    r.mu_history.push_back(loss.mu);
  }
  r.final_loss = detection_loss(r.params, gt_box, roi, K, 0.0, 0.0, cfg);
  return r;
}

// ---------------------------------------------------------------------------
// Gradient check against central finite differences

struct GradCheckCase {
  Box3D gt;
  Roi2D roi;
  CameraIntrinsics K;
  CuboidParams pred;
};

/// Random detection-loss evaluation point whose corner residuals all stay at
/// least `kink_margin` away from the L1 kink.
inline GradCheckCase random_gradcheck_case(Rng& rng, double kink_margin = 1e-3,
                                           const LossConfig& cfg = {}) {
  for (;;) {
    GradCheckCase c;
    const double f = rng.uniform(150.0, 400.0);
    c.K = {f, f * rng.uniform(0.9, 1.1), rng.uniform(100.0, 156.0), rng.uniform(100.0, 156.0), 256, 256};
    const Pixel p{rng.uniform(30.0, 226.0), rng.uniform(30.0, 226.0)};
    c.gt.center = backproject(c.K, p, rng.uniform(1.5, 8.0));
    c.gt.dims = {rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5)};
    std::array<double, 6> r6;
    for (auto& e : r6) e = rng.normal();
    try {
      c.gt.R = rot6d_to_matrix(r6);
    } catch (const DegenerateRotation&) {
      continue;
    }
    c.roi = {p.u - rng.uniform(20.0, 60.0), p.v - rng.uniform(20.0, 60.0), rng.uniform(40.0, 120.0),
             rng.uniform(40.0, 120.0)};
    auto a = encode_cuboid(c.gt, c.roi, c.K, cfg.decode).to_array();
    a[0] += rng.normal(0.0, 0.05);
    a[1] += rng.normal(0.0, 0.05);
    a[2] *= std::exp(rng.normal(0.0, 0.1));
    for (std::size_t i = 3; i < 12; ++i) a[i] += rng.normal(0.0, 0.1);
    a[12] = rng.normal(0.0, 1.0);
    c.pred = CuboidParams::from_array(a);
    try {
      double min_abs = 0.0;
      (void)detail::loss_subgradient(c.pred, c.gt, c.roi, c.K, cfg, &min_abs);
      if (min_abs < kink_margin) continue;
    } catch (const Error&) {
      continue;
    }
    return c;
  }
}

/// Central-difference gradient of the total loss.
inline std::array<double, kCuboidParamCount> finite_difference_gradient(
    const CuboidParams& pred, const Box3D& gt, const Roi2D& roi, const CameraIntrinsics& K,
    double h = 1e-5, const LossConfig& cfg = {}) {
  std::array<double, kCuboidParamCount> g{};
  const auto base = pred.to_array();
  for (std::size_t i = 0; i < kCuboidParamCount; ++i) {
    auto plus = base, minus = base;
    plus[i] += h;
    minus[i] -= h;
    const double lp = detection_loss(CuboidParams::from_array(plus), gt, roi, K, 0, 0, cfg).total;
    const double lm = detection_loss(CuboidParams::from_array(minus), gt, roi, K, 0, 0, cfg).total;
    g[i] = (lp - lm) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(max_i |a_i|, max_i |b_i|)
inline double gradient_relative_error(const std::array<double, kCuboidParamCount>& a,
                                      const std::array<double, kCuboidParamCount>& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return scale > 0.0 ? diff / scale : diff;
}

struct GradCheckReport {
  int cases = 0;
  double max_relative_error = 0.0;
  int worst_case = -1;
};

/// Compares loss_gradient to central differences on `n_cases` random points.
/// `corrupt` perturbs the analytic gradient, as a negative control.
inline GradCheckReport gradient_check(std::uint64_t seed, int n_cases, double h = 1e-5,
                                      bool corrupt = false, const LossConfig& cfg = {}) {
  if (n_cases < 1) throw InvalidArgument("gradient check needs at least one case");
  Rng rng(seed);
  GradCheckReport rep;
  for (int i = 0; i < n_cases; ++i) {
    const GradCheckCase c = random_gradcheck_case(rng, 1e-3, cfg);
    auto analytic = loss_gradient(c.pred, c.gt, c.roi, c.K, cfg);
    if (corrupt) analytic[2] += 0.01 * (1.0 + std::abs(analytic[2]));
    const auto numeric = finite_difference_gradient(c.pred, c.gt, c.roi, c.K, h, cfg);
    const double err = gradient_relative_error(analytic, numeric);
    if (err > rep.max_relative_error || rep.worst_case < 0) {
      rep.max_relative_error = std::max(rep.max_relative_error, err);
      rep.worst_case = i;
    }
    rep.cases = i + 1;
  }
  return rep;
}

}  // namespace geodet
