#pragma once

// Oriented 3D IoU, greedy matching, COCO-style AP3D over an IoU sweep, and
// 3D non-maximum suppression.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geodet/cuboid.hpp"
#include "geodet/errors.hpp"
#include "geodet/rng.hpp"

namespace geodet {

struct Detection {
  Box3D box;
  std::string category;
  double score = 1.0;
  int image_id = 0;
};

struct GroundTruth {
  Box3D box;
  std::string category;
  int image_id = 0;
};

inline double box_volume(const Box3D& b) { return b.dims[0] * b.dims[1] * b.dims[2]; }

namespace detail {

using Polygon = std::vector<Vec3d>;

struct Polyhedron {
  std::vector<Polygon> faces;
  bool empty() const { return faces.empty(); }
};

struct HalfSpace {
  Vec3d normal;   // unit outward normal
  double offset;  // inside: normal . x <= offset
};

inline Polyhedron box_polyhedron(const Box3D& b) {
  const auto c = box_corners(b);
  static constexpr int kFaces[6][4] = {{0, 3, 7, 4}, {1, 2, 6, 5}, {0, 1, 5, 4},
                                       {3, 2, 6, 7}, {0, 1, 2, 3}, {4, 5, 6, 7}};
  Polyhedron p;
  for (const auto& f : kFaces) p.faces.push_back({c[f[0]], c[f[1]], c[f[2]], c[f[3]]});
  return p;
}

inline std::array<HalfSpace, 6> box_half_spaces(const Box3D& b) {
  std::array<HalfSpace, 6> out;
  for (std::size_t i = 0; i < 3; ++i) {
    const Vec3d n = b.R.col(i);
    const double c = dot(n, b.center);
    out[2 * i] = {n, c + 0.5 * b.dims[i]};
    out[2 * i + 1] = {-n, -c + 0.5 * b.dims[i]};
  }
  return out;
}

/// Orders coplanar points counter-clockwise around their centroid.
inline Polygon order_cap(std::vector<Vec3d> pts, const Vec3d& normal, double merge_tol) {
  Polygon unique;
  for (const auto& p : pts) {
    bool dup = false;
    for (const auto& q : unique)
      if (norm(p - q) <= merge_tol) {
        dup = true;
        break;
      }
    if (!dup) unique.push_back(p);
  }
  if (unique.size() < 3) return {};
  Vec3d centroid = Vec3d::zero();
  for (const auto& p : unique) centroid += p;
  centroid = centroid / static_cast<double>(unique.size());
  const Vec3d helper = std::abs(normal[0]) < 0.9 ? Vec3d(1, 0, 0) : Vec3d(0, 1, 0);
  const Vec3d e1 = cross(normal, helper) / norm(cross(normal, helper));
  const Vec3d e2 = cross(normal, e1);
  std::vector<std::pair<double, Vec3d>> keyed;
  keyed.reserve(unique.size());
  for (const auto& p : unique) {
    const Vec3d d = p - centroid;
    keyed.emplace_back(std::atan2(dot(d, e2), dot(d, e1)), p);
  }
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Polygon out;
  for (const auto& [angle, p] : keyed) out.push_back(p);
  return out;
}

/// Clips a convex polyhedron against a half-space, closing the cut with a cap.
inline Polyhedron clip(const Polyhedron& poly, const HalfSpace& h, double tol) {
  const auto signed_dist = [&](const Vec3d& x) {
    const double d = dot(h.normal, x) - h.offset;
    return std::abs(d) <= tol ? 0.0 : d;
  };
  bool any_outside = false;
  bool any_inside = false;
  for (const auto& f : poly.faces)
    for (const auto& v : f) {
      const double d = signed_dist(v);
      any_outside |= d > 0.0;
      any_inside |= d < 0.0;
    }
  if (!any_outside) return poly;
  if (!any_inside) return {};

  Polyhedron out;
  std::vector<Vec3d> cap;
  for (const auto& face : poly.faces) {
    Polygon kept;
    const std::size_t n = face.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3d& cur = face[i];
      const Vec3d& nxt = face[(i + 1) % n];
      const double dc = signed_dist(cur);
      const double dn = signed_dist(nxt);
      if (dc <= 0.0) {
        kept.push_back(cur);
        if (dc == 0.0) cap.push_back(cur);
      }
      if ((dc < 0.0 && dn > 0.0) || (dc > 0.0 && dn < 0.0)) {
        const Vec3d x = cur + (nxt - cur) * (dc / (dc - dn));
        kept.push_back(x);
        cap.push_back(x);
      }
    }
    if (kept.size() >= 3) out.faces.push_back(std::move(kept));
  }
  Polygon cap_face = order_cap(std::move(cap), h.normal, tol);
  if (!cap_face.empty()) out.faces.push_back(std::move(cap_face));
  if (out.faces.size() < 4) return {};
  return out;
}

inline double polyhedron_volume(const Polyhedron& poly) {
  Vec3d interior = Vec3d::zero();
  std::size_t count = 0;
  for (const auto& f : poly.faces)
    for (const auto& v : f) {
      interior += v;
      ++count;
    }
  if (count == 0) return 0.0;
  interior = interior / static_cast<double>(count);
  double vol = 0.0;
  for (const auto& f : poly.faces) {
    Vec3d area = Vec3d::zero();
    for (std::size_t i = 1; i + 1 < f.size(); ++i) area += cross(f[i] - f[0], f[i + 1] - f[0]);
    vol += std::abs(dot(area, f[0] - interior)) / 6.0;
  }
  return vol;
}

inline double half_diagonal(const Box3D& b) { return 0.5 * norm(b.dims); }

}  // namespace detail

/// Exact IoU of two oriented boxes by clipping one box against the other's
/// six face planes and measuring the resulting convex polytope.
inline double iou3d_exact(const Box3D& a, const Box3D& b) {
  if (a == b) return 1.0;
  if (norm(a.center - b.center) > detail::half_diagonal(a) + detail::half_diagonal(b)) return 0.0;
  const double va = box_volume(a);
  const double vb = box_volume(b);
  const double scale = std::max({a.dims[0], a.dims[1], a.dims[2], b.dims[0], b.dims[1], b.dims[2],
                                 norm(a.center), norm(b.center)});
  const double tol = 1e-12 * scale;

  detail::Polyhedron p = detail::box_polyhedron(a);
  for (const auto& h : detail::box_half_spaces(b)) {
    p = detail::clip(p, h, tol);
    if (p.empty()) return 0.0;
  }
  const double inter = std::clamp(detail::polyhedron_volume(p), 0.0, std::min(va, vb));
  const double uni = va + vb - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

inline bool box_contains(const Box3D& b, const Vec3d& x) {
  const Vec3d d = x - b.center;
  for (std::size_t i = 0; i < 3; ++i)
    if (std::abs(dot(b.R.col(i), d)) > 0.5 * b.dims[i]) return false;
  return true;
}

/// Monte-Carlo IoU estimate over the axis-aligned bounds of both boxes.
inline double iou3d_mc(const Box3D& a, const Box3D& b, std::int64_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw InvalidArgument("n_samples must be positive");
  Vec3d lo(1e300, 1e300, 1e300), hi(-1e300, -1e300, -1e300);
  for (const auto* box : {&a, &b})
    for (const auto& c : box_corners(*box))
      for (std::size_t i = 0; i < 3; ++i) {
        lo[i] = std::min(lo[i], c[i]);
        hi[i] = std::max(hi[i], c[i]);
      }
  // Rows of R^T for the containment test, hoisted out of the loop.
  const std::array<Vec3d, 3> axes_a{a.R.col(0), a.R.col(1), a.R.col(2)};
  const std::array<Vec3d, 3> axes_b{b.R.col(0), b.R.col(1), b.R.col(2)};
  const auto inside = [](const std::array<Vec3d, 3>& axes, const Box3D& box, const Vec3d& x) {
    const Vec3d d = x - box.center;
    for (std::size_t i = 0; i < 3; ++i)
      if (std::abs(dot(axes[i], d)) > 0.5 * box.dims[i]) return false;
    return true;
  };

  Rng rng(seed);
  std::int64_t both = 0, either = 0;
  for (std::int64_t s = 0; s < n_samples; ++s) {
    const double x = rng.uniform(lo[0], hi[0]);
    const double y = rng.uniform(lo[1], hi[1]);
    const double z = rng.uniform(lo[2], hi[2]);
    const Vec3d p(x, y, z);
    const bool in_a = inside(axes_a, a, p);
    const bool in_b = inside(axes_b, b, p);
    both += in_a && in_b;
    either += in_a || in_b;
  }
  if (either == 0) throw DegenerateUnion("no sample landed in either box");
  return static_cast<double>(both) / static_cast<double>(either);
}

/// The default sweep 0.05, 0.10, ..., 0.50.
inline std::vector<double> default_iou_thresholds() {
  std::vector<double> t;
  for (int k = 1; k <= 10; ++k) t.push_back(k / 20.0);
  return t;
}

struct ThresholdAP {
  double mean = 0.0;
  std::map<std::string, double> per_category;
};

struct EvalResult {
  std::vector<double> thresholds;
  /// Mean over thresholds of the per-threshold category means.
  double ap3d_mean = 0.0;
  /// Mean over categories of the per-category threshold means.
  double ap3d_mean_category_first = 0.0;
  std::map<double, double> ap_per_threshold;
  std::map<std::string, double> per_category;

  /// AP at a threshold of the sweep, if it is part of it.
  std::optional<double> at(double threshold) const {
    for (const auto& [t, ap] : ap_per_threshold)
      if (std::abs(t - threshold) < 1e-9) return ap;
    return std::nullopt;
  }
};

namespace detail {

/// Per-category matching problem with IoUs computed once for all thresholds.
struct CategoryProblem {
  std::vector<std::size_t> det_order;  // indices into dets, sorted by score
  std::size_t n_gt = 0;
  std::vector<int> gt_image;
  std::vector<int> det_image;
  // iou[d][g] over the category-local det/gt lists (0 across images)
  std::vector<std::vector<double>> iou;
};

inline std::map<std::string, CategoryProblem> build_problems(std::span<const Detection> dets,
                                                             std::span<const GroundTruth> gts) {
  std::map<std::string, std::vector<std::size_t>> gt_by_cat;
  for (std::size_t i = 0; i < gts.size(); ++i) gt_by_cat[gts[i].category].push_back(i);

  std::map<std::string, CategoryProblem> problems;
  for (const auto& [cat, gidx] : gt_by_cat) {
    CategoryProblem p;
    p.n_gt = gidx.size();
    for (auto g : gidx) p.gt_image.push_back(gts[g].image_id);
    std::vector<std::size_t> didx;
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (dets[i].category == cat) didx.push_back(i);
    std::stable_sort(didx.begin(), didx.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    for (auto d : didx) {
      p.det_image.push_back(dets[d].image_id);
      std::vector<double> row(gidx.size(), 0.0);
      for (std::size_t g = 0; g < gidx.size(); ++g)
        if (gts[gidx[g]].image_id == dets[d].image_id)
          row[g] = iou3d_exact(dets[d].box, gts[gidx[g]].box);
      p.iou.push_back(std::move(row));
    }
    p.det_order = std::move(didx);
    problems.emplace(cat, std::move(p));
  }
  return problems;
}

/// All-point interpolated AP of a score-ordered true/false positive sequence.
inline double average_precision(const std::vector<bool>& is_tp, std::size_t n_gt) {
  if (n_gt == 0 || is_tp.empty()) return 0.0;
  const std::size_t n = is_tp.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += is_tp[k];
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  for (std::size_t k = n - 1; k-- > 0;) precision[k] = std::max(precision[k], precision[k + 1]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

inline double category_ap(const CategoryProblem& p, double threshold) {
  std::vector<bool> matched(p.n_gt, false);
  std::vector<bool> is_tp;
  is_tp.reserve(p.iou.size());
  for (const auto& row : p.iou) {
    std::optional<std::size_t> best;
    double best_iou = threshold;
    for (std::size_t g = 0; g < row.size(); ++g) {
      if (matched[g] || row[g] < threshold) continue;
      if (!best || row[g] > best_iou) {
        best = g;
        best_iou = row[g];
      }
    }
    if (best) matched[*best] = true;
    is_tp.push_back(best.has_value());
  }
  return average_precision(is_tp, p.n_gt);
}

inline ThresholdAP threshold_ap(const std::map<std::string, CategoryProblem>& problems,
                                double threshold) {
  ThresholdAP out;
  for (const auto& [cat, p] : problems) out.per_category[cat] = category_ap(p, threshold);
  if (!out.per_category.empty()) {
    double sum = 0.0;
    for (const auto& [cat, ap] : out.per_category) sum += ap;
    out.mean = sum / static_cast<double>(out.per_category.size());
  }
  return out;
}

}  // namespace detail

/// AP at a single IoU threshold, averaged with equal weight over the
/// categories present in the ground truth.
inline ThresholdAP match_and_ap(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                double iou_threshold) {
  for (const auto& d : dets)
    if (!std::isfinite(d.score)) throw InvalidArgument("detection scores must be finite");
  return detail::threshold_ap(detail::build_problems(dets, gts), iou_threshold);
}

inline EvalResult ap3d(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                       std::vector<double> thresholds = default_iou_thresholds()) {
  if (thresholds.empty()) throw InvalidArgument("threshold sweep is empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] <= 1.0))
      throw InvalidArgument("IoU thresholds must lie in (0, 1]");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
      throw InvalidArgument("IoU thresholds must be strictly increasing");
  }
  for (const auto& d : dets)
    if (!std::isfinite(d.score)) throw InvalidArgument("detection scores must be finite");

  const auto problems = detail::build_problems(dets, gts);
  EvalResult r;
  r.thresholds = thresholds;
  std::map<std::string, double> cat_sum;
  double sum = 0.0;
  for (double t : thresholds) {
    const ThresholdAP tap = detail::threshold_ap(problems, t);
    r.ap_per_threshold[t] = tap.mean;
    sum += tap.mean;
    for (const auto& [cat, ap] : tap.per_category) cat_sum[cat] += ap;
  }
  r.ap3d_mean = sum / static_cast<double>(thresholds.size());
  double cat_total = 0.0;
  for (const auto& [cat, s] : cat_sum) {
    r.per_category[cat] = s / static_cast<double>(thresholds.size());
    cat_total += r.per_category[cat];
  }
  r.ap3d_mean_category_first =
      r.per_category.empty() ? 0.0 : cat_total / static_cast<double>(r.per_category.size());
  return r;
}

inline constexpr double kDefaultNmsThreshold = 0.25;

/// Greedy per-category NMS: a detection survives iff its IoU with every
/// already kept detection of the same category and image is below `tau`.
/// Survivors are returned by descending score (stable).
inline std::vector<Detection> nms3d(std::span<const Detection> dets,
                                    double tau = kDefaultNmsThreshold) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("NMS threshold must lie in (0, 1)");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<Detection> kept;
  for (auto i : order) {
    const Detection& d = dets[i];
    bool keep = true;
    for (const auto& k : kept) {
      if (k.category != d.category || k.image_id != d.image_id) continue;
      if (iou3d_exact(k.box, d.box) >= tau) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(d);
  }
  return kept;
}

}  // namespace geodet
