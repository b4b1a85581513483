#pragma once

// Synthetic posed scenes, controlled prediction degradation, view-pair
// selection, the scene file format, and a planar-scene warp fixture.
//
// Scene file (UTF-8 JSON, one scene per file):
//   { "format_version": 1, "scene_id": str,
//     "camera": {"fx","fy","px","py","width","height"},
//     "pose": {"R": [9 row-major], "t": [3]},           world-to-camera
//     "objects": [{"category", "center": [3], "dims": [3], "R": [9]}],
//     "detections": [{... same as objects ..., "score"}]  optional
//     "feature_grids": [str]                               optional }
// Boxes are expressed in the camera frame.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "geodet/cuboid.hpp"
#include "geodet/errors.hpp"
#include "geodet/eval3d.hpp"
#include "geodet/featgrid.hpp"
#include "geodet/geometry.hpp"
#include "geodet/io.hpp"
#include "geodet/rng.hpp"

namespace geodet {

inline constexpr int kSceneFormatVersion = 1;

struct SceneObject {
  std::string category;
  Box3D box;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct SceneRecord {
  std::string scene_id;
  CameraIntrinsics camera;
  RigidTransform pose;  // world-to-camera
  std::vector<SceneObject> objects;
  std::optional<std::vector<Detection>> detections;
  std::vector<std::string> feature_grids;
};

inline std::vector<GroundTruth> ground_truth(const SceneRecord& s, int image_id = 0) {
  std::vector<GroundTruth> out;
  for (const auto& o : s.objects) out.push_back({o.box, o.category, image_id});
  return out;
}

inline bool visible(const CameraIntrinsics& K, const Vec3d& X_cam) {
  if (!(X_cam[2] > 0.0)) return false;
  const Pixel p = project(K, X_cam);
  return p.u >= 0.0 && p.v >= 0.0 && p.u < K.width && p.v < K.height;
}

inline const std::vector<std::string>& default_vocabulary() {
  static const std::vector<std::string> vocab = {"chair", "table", "cabinet", "bed", "sofa"};
  return vocab;
}

inline CameraIntrinsics default_camera() { return {230.0, 230.0, 128.0, 128.0, 256, 256}; }

/// Random rotation from a Gaussian 6D vector.
inline Mat3d random_rotation(Rng& rng) {
  for (;;) {
    std::array<double, 6> p;
    for (auto& e : p) e = rng.normal();
    try {
      return rot6d_to_matrix(p);
    } catch (const DegenerateRotation&) {
    }
  }
}

struct SceneGenConfig {
  CameraIntrinsics camera = default_camera();
  double min_depth = 1.0;
  double max_depth = 8.0;
  double min_separation = 0.2;
  double min_dim = 0.3;
  double max_dim = 1.5;
  int max_attempts = 10000;
};

/// Objects with centers inside the image at depths [min_depth, max_depth],
/// no two centers closer than min_separation. Pure function of the inputs.
inline SceneRecord gen_scene(std::uint64_t seed, int n_objects,
                             const std::vector<std::string>& vocab = default_vocabulary(),
                             const SceneGenConfig& cfg = {}) {
  if (n_objects < 0) throw InvalidArgument("n_objects must be non-negative");
  if (n_objects > 0 && vocab.empty()) throw InvalidArgument("category vocabulary is empty");
  Rng rng(seed);
  SceneRecord s;
  s.scene_id = "synth-" + std::to_string(seed);
  s.camera = cfg.camera;
  s.pose = {random_rotation(rng), rng.normal3()};
  const auto& K = cfg.camera;
  for (int i = 0; i < n_objects; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      const Pixel p{rng.uniform(0.0, K.width), rng.uniform(0.0, K.height)};
      const double z = rng.uniform(cfg.min_depth, cfg.max_depth);
      const Vec3d c = backproject(K, p, z);
      const bool crowded = std::any_of(s.objects.begin(), s.objects.end(), [&](const SceneObject& o) {
        return norm(o.box.center - c) < cfg.min_separation;
      });
      if (crowded) continue;
      SceneObject obj;
      obj.category = vocab[rng.index(vocab.size())];
      const double lo = std::log(cfg.min_dim), hi = std::log(cfg.max_dim);
      obj.box = {c, {std::exp(rng.uniform(lo, hi)), std::exp(rng.uniform(lo, hi)), std::exp(rng.uniform(lo, hi))},
                 random_rotation(rng)};
      s.objects.push_back(std::move(obj));
      placed = true;
    }
    if (!placed)
      throw PlacementFailure("could not place object " + std::to_string(i) + " after " +
                             std::to_string(cfg.max_attempts) + " attempts");
  }
  return s;
}

struct PerturbConfig {
  double sigma_center = 0.0;   // meters
  double sigma_dims = 0.0;     // log units
  double sigma_rot_deg = 0.0;  // degrees
  double drop_rate = 0.0;      // fraction removed per category
};

/// Gaussian-perturbed copies of the ground truth. Each detection scores
/// exp(-(|dc| / mean_dim + |dlog_dims| + |dangle_rad|)). Within each category
/// round(drop_rate * n) objects are removed. The random stream per object is
/// independent of the sigmas, so different noise levels share draws.
inline std::vector<Detection> perturb_predictions(const SceneRecord& scene, const PerturbConfig& cfg,
                                                  std::uint64_t seed, int image_id = 0) {
  if (cfg.sigma_center < 0.0 || cfg.sigma_dims < 0.0 || cfg.sigma_rot_deg < 0.0)
    throw InvalidArgument("perturbation sigmas must be non-negative");
  if (!(cfg.drop_rate >= 0.0 && cfg.drop_rate < 1.0))
    throw InvalidArgument("drop_rate must lie in [0, 1)");

  std::vector<bool> dropped(scene.objects.size(), false);
  {
    Rng drop_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::map<std::string, std::vector<std::size_t>> by_cat;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) by_cat[scene.objects[i].category].push_back(i);
    for (auto& [cat, idx] : by_cat) {
      // Fisher-Yates with the portable generator.
      for (std::size_t k = idx.size(); k > 1; --k) std::swap(idx[k - 1], idx[drop_rng.index(k)]);
      const auto n_drop = static_cast<std::size_t>(std::llround(cfg.drop_rate * idx.size()));
      for (std::size_t k = 0; k < n_drop; ++k) dropped[idx[k]] = true;
    }
  }

  Rng rng(seed);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& obj = scene.objects[i];
    const Vec3d dc = rng.normal3() * cfg.sigma_center;
    const Vec3d dl = rng.normal3() * cfg.sigma_dims;
    const Vec3d axis = rng.unit_vector();
    const double angle = deg_to_rad(cfg.sigma_rot_deg * rng.normal());
    if (dropped[i]) continue;
    Detection d;
    d.category = obj.category;
    d.image_id = image_id;
    d.box.center = obj.box.center + dc;
    for (std::size_t k = 0; k < 3; ++k) d.box.dims[k] = obj.box.dims[k] * std::exp(dl[k]);
    d.box.R = angle == 0.0 ? obj.box.R : axis_angle_rotation(axis, angle) * obj.box.R;
    const double mean_dim = (obj.box.dims[0] + obj.box.dims[1] + obj.box.dims[2]) / 3.0;
    d.score = std::exp(-(norm(dc) / mean_dim + norm(dl) + std::abs(angle)));
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// View pairs

enum class OverlapCriterion { LessThan, AtLeast };

struct PairSelection {
  double overlap_fraction = 0.3;
  OverlapCriterion criterion = OverlapCriterion::AtLeast;
};

/// Fraction of the object centers visible in view `a` that are also visible
/// in view `b`. Both views share a world frame through their poses.
inline double directed_overlap(const SceneRecord& a, const SceneRecord& b) {
  const RigidTransform a_to_b = compose(b.pose, invert(a.pose));
  std::size_t seen = 0, shared = 0;
  for (const auto& o : a.objects) {
    if (!visible(a.camera, o.box.center)) continue;
    ++seen;
    shared += visible(b.camera, a_to_b.apply(o.box.center));
  }
  return seen == 0 ? 0.0 : static_cast<double>(shared) / static_cast<double>(seen);
}

/// Symmetric pair overlap: the smaller of the two directed overlaps.
inline double pair_overlap(const SceneRecord& a, const SceneRecord& b) {
  return std::min(directed_overlap(a, b), directed_overlap(b, a));
}

inline std::vector<std::pair<std::string, std::string>> select_pairs(
    std::span<const SceneRecord> views, const PairSelection& rule = {}) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < views.size(); ++i)
    for (std::size_t j = i + 1; j < views.size(); ++j) {
      const double o = pair_overlap(views[i], views[j]);
      const bool keep = rule.criterion == OverlapCriterion::LessThan ? o < rule.overlap_fraction
                                                                     : o >= rule.overlap_fraction;
      if (keep) out.emplace_back(views[i].scene_id, views[j].scene_id);
    }
  return out;
}

/// World-to-camera pose of a camera at `position` looking at `target`, with
/// world +y as the image-down direction.
inline RigidTransform look_at(const Vec3d& position, const Vec3d& target) {
  const Vec3d z = (target - position) / norm(target - position);
  Vec3d x = cross(Vec3d(0, 1, 0), z);
  x = x / norm(x);
  const Vec3d y = cross(z, x);
  const Mat3d R = Mat3d::from_rows({x[0], x[1], x[2], y[0], y[1], y[2], z[0], z[1], z[2]});
  return {R, -(R * position)};
}

/// Views of one shared world: cameras on a ring of radius 6 m around the
/// origin looking inward. Each view keeps the objects in front of it.
inline std::vector<SceneRecord> gen_views(std::uint64_t seed, int n_views, int n_objects,
                                          const std::vector<std::string>& vocab = default_vocabulary()) {
  if (n_views < 0 || n_objects < 0) throw InvalidArgument("counts must be non-negative");
  Rng rng(seed);
  std::vector<SceneObject> world;
  for (int i = 0; i < n_objects; ++i) {
    SceneObject o;
    o.category = vocab[rng.index(vocab.size())];
    o.box = {{rng.uniform(-4, 4), rng.uniform(-1, 1), rng.uniform(-4, 4)},
             {rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5)},
             random_rotation(rng)};
    world.push_back(std::move(o));
  }
  std::vector<SceneRecord> views;
  for (int v = 0; v < n_views; ++v) {
    const double angle = rng.uniform(0.0, 2.0 * kPi);
    const Vec3d pos(6.0 * std::cos(angle), rng.uniform(-0.5, 0.5), 6.0 * std::sin(angle));
    const Vec3d target(rng.uniform(-1, 1), 0.0, rng.uniform(-1, 1));
    SceneRecord s;
    s.scene_id = "view-" + std::to_string(seed) + "-" + std::to_string(v);
    s.camera = default_camera();
    s.pose = look_at(pos, target);
    for (const auto& o : world) {
      const Box3D b = transform_box(o.box, s.pose);
      if (b.center[2] > 0.0) s.objects.push_back({o.category, b});
    }
    views.push_back(std::move(s));
  }
  return views;
}

// ---------------------------------------------------------------------------
// Scene file I/O

namespace detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(path.empty() ? key : path + "." + key, "missing field");
  return *it;
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  return j.get<double>();
}

template <std::size_t N>
std::array<double, N> numbers(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != N)
    throw ParseError(path, "expected an array of " + std::to_string(N) + " numbers");
  std::array<double, N> out;
  for (std::size_t i = 0; i < N; ++i) out[i] = number(j[i], path + "[" + std::to_string(i) + "]");
  return out;
}

inline std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw ParseError(path, "expected a string");
  return j.get<std::string>();
}

inline Mat3d rotation_from(const json& j, const std::string& path) {
  const auto r = numbers<9>(j, path);
  Mat3d R = Mat3d::from_rows(r);
  try {
    RigidTransform{R, Vec3d::zero()}.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError(path, e.what());
  }
  return R;
}

inline Box3D box_from(const json& j, const std::string& path) {
  Box3D b;
  const auto c = numbers<3>(field(j, "center", path), join(path, "center"));
  const auto d = numbers<3>(field(j, "dims", path), join(path, "dims"));
  b.center = {c[0], c[1], c[2]};
  b.dims = {d[0], d[1], d[2]};
  for (double e : d)
    if (!(e > 0.0)) throw SchemaError(join(path, "dims"), "dimensions must be positive");
  b.R = rotation_from(field(j, "R", path), join(path, "R"));
  return b;
}

inline ordered_json box_to_json(const std::string& category, const Box3D& b) {
  ordered_json j;
  j["category"] = category;
  j["center"] = b.center.v;
  j["dims"] = b.dims.v;
  j["R"] = b.R.m;
  return j;
}

inline std::string line_of(const std::string& text, std::size_t byte) {
  const auto n = std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(std::min(byte, text.size())), '\n');
  return "line " + std::to_string(n + 1);
}

}  // namespace detail

inline std::string scene_to_string(const SceneRecord& s) {
  detail::ordered_json j;
  j["format_version"] = kSceneFormatVersion;
  j["scene_id"] = s.scene_id;
  j["camera"] = {{"fx", s.camera.fx},       {"fy", s.camera.fy},         {"px", s.camera.px},
                 {"py", s.camera.py},       {"width", s.camera.width}, {"height", s.camera.height}};
  j["pose"] = {{"R", s.pose.R.m}, {"t", s.pose.t.v}};
  auto& objs = j["objects"] = detail::ordered_json::array();
  for (const auto& o : s.objects) objs.push_back(detail::box_to_json(o.category, o.box));
  if (s.detections) {
    auto& dets = j["detections"] = detail::ordered_json::array();
    for (const auto& d : *s.detections) {
      auto e = detail::box_to_json(d.category, d.box);
      e["score"] = d.score;
      dets.push_back(std::move(e));
    }
  }
  if (!s.feature_grids.empty()) j["feature_grids"] = s.feature_grids;
  return j.dump(2) + "\n";
}

inline SceneRecord scene_from_string(const std::string& text, const std::string& name = "scene") {
  detail::json j;
  try {
    j = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw ParseError(name + ": " + detail::line_of(text, e.byte == 0 ? 0 : e.byte - 1), e.what());
  }
  if (!j.is_object()) throw ParseError(name, "expected a JSON object");
  const auto version = detail::field(j, "format_version", "");
  if (!version.is_number_integer()) throw ParseError("format_version", "expected an integer");
  if (version.get<int>() != kSceneFormatVersion)
    throw VersionMismatch("unsupported format_version " + version.dump() + " (expected " +
                          std::to_string(kSceneFormatVersion) + ")");

  SceneRecord s;
  s.scene_id = detail::text(detail::field(j, "scene_id", ""), "scene_id");
  const auto& cam = detail::field(j, "camera", "");
  s.camera.fx = detail::number(detail::field(cam, "fx", "camera"), "camera.fx");
  s.camera.fy = detail::number(detail::field(cam, "fy", "camera"), "camera.fy");
  s.camera.px = detail::number(detail::field(cam, "px", "camera"), "camera.px");
  s.camera.py = detail::number(detail::field(cam, "py", "camera"), "camera.py");
  const auto& w = detail::field(cam, "width", "camera");
  const auto& h = detail::field(cam, "height", "camera");
  if (!w.is_number_integer()) throw ParseError("camera.width", "expected an integer");
  if (!h.is_number_integer()) throw ParseError("camera.height", "expected an integer");
  s.camera.width = w.get<int>();
  s.camera.height = h.get<int>();
  try {
    s.camera.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError("camera", e.what());
  }

  const auto& pose = detail::field(j, "pose", "");
  s.pose.R = detail::rotation_from(detail::field(pose, "R", "pose"), "pose.R");
  const auto t = detail::numbers<3>(detail::field(pose, "t", "pose"), "pose.t");
  s.pose.t = {t[0], t[1], t[2]};

  const auto& objs = detail::field(j, "objects", "");
  if (!objs.is_array()) throw ParseError("objects", "expected an array");
  for (std::size_t i = 0; i < objs.size(); ++i) {
    const std::string path = "objects[" + std::to_string(i) + "]";
    SceneObject o;
    o.category = detail::text(detail::field(objs[i], "category", path), path + ".category");
    o.box = detail::box_from(objs[i], path);
    if (!(o.box.center[2] > 0.0)) throw SchemaError(path + ".center", "object depth must be positive");
    s.objects.push_back(std::move(o));
  }

  if (const auto it = j.find("detections"); it != j.end()) {
    if (!it->is_array()) throw ParseError("detections", "expected an array");
    std::vector<Detection> dets;
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string path = "detections[" + std::to_string(i) + "]";
      const auto& e = (*it)[i];
      Detection d;
      d.category = detail::text(detail::field(e, "category", path), path + ".category");
      d.box = detail::box_from(e, path);
      d.score = detail::number(detail::field(e, "score", path), path + ".score");
      if (!(d.score >= 0.0 && d.score <= 1.0))
        throw SchemaError(path + ".score", "score must lie in [0, 1]");
      dets.push_back(std::move(d));
    }
    s.detections = std::move(dets);
  }
  if (const auto it = j.find("feature_grids"); it != j.end()) {
    if (!it->is_array()) throw ParseError("feature_grids", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i)
      s.feature_grids.push_back(detail::text((*it)[i], "feature_grids[" + std::to_string(i) + "]"));
  }
  return s;
}

inline void write_scene(const SceneRecord& s, const std::string& path) {
  write_file_atomic(path, scene_to_string(s));
}

inline SceneRecord read_scene(const std::string& path) {
  return scene_from_string(read_file(path), path);
}

// Pose list file: {"format_version": 1, "poses": [{"R": [9], "t": [3]}, ...]}

inline std::string poses_to_string(std::span<const RigidTransform> poses) {
  detail::ordered_json j;
  j["format_version"] = kSceneFormatVersion;
  auto& arr = j["poses"] = detail::ordered_json::array();
  for (const auto& p : poses) arr.push_back({{"R", p.R.m}, {"t", p.t.v}});
  return j.dump(2) + "\n";
}

inline std::vector<RigidTransform> poses_from_string(const std::string& text,
                                                     const std::string& name = "poses") {
  detail::json j;
  try {
    j = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw ParseError(name, e.what());
  }
  const auto version = detail::field(j, "format_version", "");
  if (!version.is_number_integer() || version.get<int>() != kSceneFormatVersion)
    throw VersionMismatch("unsupported pose file format_version " + version.dump());
  const auto& arr = detail::field(j, "poses", "");
  if (!arr.is_array()) throw ParseError("poses", "expected an array");
  std::vector<RigidTransform> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = "poses[" + std::to_string(i) + "]";
    RigidTransform T;
    T.R = detail::rotation_from(detail::field(arr[i], "R", path), path + ".R");
    const auto t = detail::numbers<3>(detail::field(arr[i], "t", path), path + ".t");
    T.t = {t[0], t[1], t[2]};
    out.push_back(T);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Planar-scene warp fixture

/// Source and target feature grids of a textured plane seen from two poses.
///
/// The plane texture is a function of the source-image epipolar line through
/// each point, so every source feature on one epipolar line is identical and
/// an exact epipolar warp with either aggregator reproduces the target view.
/// Target features are rendered analytically by ray-plane intersection.
struct PlanarWarpFixture {
  CameraIntrinsics K;
  RigidTransform T;  // source-to-target
  FeatureGrid source;
  FeatureGrid target;
  std::vector<bool> valid;  // row-major H x W; target pixel sees the plane inside the source grid
};

namespace detail {

inline Feature planar_texture(const Vec3d& epipole_h, const Pixel& p, int channels) {
  // Direction of the line through p and the epipole (handles an epipole at infinity).
  double dx = p.u * epipole_h[2] - epipole_h[0];
  double dy = p.v * epipole_h[2] - epipole_h[1];
  const double n = std::hypot(dx, dy);
  dx /= n;
  dy /= n;
  const double c2 = dx * dx - dy * dy;  // cos(2 phi)
  const double s2 = 2.0 * dx * dy;      // sin(2 phi)
  Feature f(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    const double phase = 0.7 * c;
    f[static_cast<std::size_t>(c)] = std::cos(phase) * c2 + std::sin(phase) * s2 + 0.1 * c;
  }
  return f;
}

}  // namespace detail

inline PlanarWarpFixture make_planar_warp_fixture(int size = 64, int channels = 8) {
  if (size < 2 || channels < 1) throw InvalidArgument("fixture needs size >= 2 and channels >= 1");
  PlanarWarpFixture fx;
  fx.K = {0.9 * size, 0.9 * size, 0.5 * (size - 1), 0.5 * (size - 1), size, size};
  fx.T = {axis_rotation(1, deg_to_rad(4.0)) * axis_rotation(0, deg_to_rad(-2.0)),
          Vec3d(-0.8, -0.25, -0.1)};
  // Plane n . X = d in the source frame.
  const Vec3d n = Vec3d(0.08, -0.05, 1.0) / norm(Vec3d(0.08, -0.05, 1.0));
  const double d = 5.0;

  const Vec3d target_center_in_src = invert(fx.T).t;
  const Vec3d epipole = fx.K.matrix() * target_center_in_src;

  fx.source = FeatureGrid(size, size, channels);
  for (int row = 0; row < size; ++row)
    for (int col = 0; col < size; ++col) {
      const Feature f = detail::planar_texture(epipole, {double(col), double(row)}, channels);
      std::copy(f.begin(), f.end(), fx.source.texel(row, col).begin());
    }

  fx.target = FeatureGrid(size, size, channels);
  fx.valid.assign(static_cast<std::size_t>(size) * size, false);
  const RigidTransform to_src = invert(fx.T);
  for (int row = 0; row < size; ++row)
    for (int col = 0; col < size; ++col) {
      const Vec3d ray_tgt = fx.K.inverse_matrix() * Vec3d(col, row, 1.0);
      const Vec3d origin = to_src.t;         // target camera center, source frame
      const Vec3d dir = to_src.R * ray_tgt;  // ray direction, source frame
      const double denom = dot(n, dir);
      if (std::abs(denom) < 1e-12) continue;
      const double lambda = (d - dot(n, origin)) / denom;
      if (!(lambda > 0.0)) continue;
      const Vec3d X = origin + dir * lambda;
      if (!(X[2] > 0.0)) continue;
      const Pixel p = project(fx.K, X);
      if (p.u < 0.0 || p.v < 0.0 || p.u > size - 1 || p.v > size - 1) continue;
      const Feature f = detail::planar_texture(epipole, p, channels);
      std::copy(f.begin(), f.end(), fx.target.texel(row, col).begin());
      fx.valid[static_cast<std::size_t>(row) * size + col] = true;
    }
  return fx;
}

/// Mean over valid pixels of the per-texel L2 distance between two grids.
inline double mean_feature_error(const FeatureGrid& a, const FeatureGrid& b,
                                 const std::vector<bool>& valid) {
  if (!a.same_shape(b)) throw ShapeMismatch("mean_feature_error: shapes differ");
  double sum = 0.0;
  std::size_t count = 0;
  for (int row = 0; row < a.height(); ++row)
    for (int col = 0; col < a.width(); ++col) {
      if (!valid[static_cast<std::size_t>(row) * a.width() + col]) continue;
      double e = 0.0;
      const auto x = a.texel(row, col);
      const auto y = b.texel(row, col);
      for (std::size_t c = 0; c < x.size(); ++c) e += (x[c] - y[c]) * (x[c] - y[c]);
      sum += std::sqrt(e);
      ++count;
    }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace geodet
