#pragma once

// H x W x C feature maps, bilinear lookup, and the epipolar warp operator that
// resamples source-view features into a target view by aggregating samples
// along each target pixel's epipolar line.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geodet/errors.hpp"
#include "geodet/geometry.hpp"

namespace geodet {

template <typename Scalar>
class BasicFeatureGrid {
 public:
  using value_type = Scalar;

  BasicFeatureGrid() = default;
  BasicFeatureGrid(int height, int width, int channels, Scalar fill = Scalar(0))
      : height_(height), width_(width), channels_(channels) {
    if (height <= 0 || width <= 0 || channels <= 0)
      throw InvalidArgument("feature grid dimensions must be positive");
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }
  BasicFeatureGrid(int height, int width, int channels, std::vector<Scalar> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (height <= 0 || width <= 0 || channels <= 0)
      throw InvalidArgument("feature grid dimensions must be positive");
    if (data_.size() != static_cast<std::size_t>(height) * width * channels)
      throw ShapeMismatch("feature grid data length does not match H*W*C");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }

  Scalar& at(int row, int col, int ch) { return data_[index(row, col, ch)]; }
  const Scalar& at(int row, int col, int ch) const { return data_[index(row, col, ch)]; }

  std::span<Scalar> texel(int row, int col) {
    return {data_.data() + index(row, col, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<const Scalar> texel(int row, int col) const {
    return {data_.data() + index(row, col, 0), static_cast<std::size_t>(channels_)};
  }

  std::vector<Scalar>& data() { return data_; }
  const std::vector<Scalar>& data() const { return data_; }

  bool same_shape(const BasicFeatureGrid& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
  }

  friend bool operator==(const BasicFeatureGrid&, const BasicFeatureGrid&) = default;

 private:
  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<Scalar> data_;
};

using FeatureGrid = BasicFeatureGrid<double>;
using Feature = std::vector<double>;

enum class AggregatorMode { Mean, Max };
enum class OutOfViewPolicy { Zero, Nearest };

struct WarpConfig {
  int n_samples = 64;
  AggregatorMode mode = AggregatorMode::Mean;
  OutOfViewPolicy out_of_view_policy = OutOfViewPolicy::Zero;
  double eps_t = kDegenerateTranslation;

  void validate() const {
    if (n_samples < 2) throw InvalidArgument("n_samples must be at least 2");
  }
};

/// Bilinear lookup at continuous (x = column, y = row) coordinates.
/// Outside [0, W-1] x [0, H-1]: zeros under Zero, edge-clamped under Nearest.
template <typename Scalar>
Feature bilinear_sample(const BasicFeatureGrid<Scalar>& grid, double x, double y,
                        OutOfViewPolicy policy = OutOfViewPolicy::Zero) {
  const int W = grid.width();
  const int H = grid.height();
  Feature out(static_cast<std::size_t>(grid.channels()), 0.0);
  const bool inside = x >= 0.0 && y >= 0.0 && x <= W - 1 && y <= H - 1;
  if (!inside) {
    if (policy == OutOfViewPolicy::Zero || !std::isfinite(x) || !std::isfinite(y)) return out;
    x = std::clamp(x, 0.0, static_cast<double>(W - 1));
    y = std::clamp(y, 0.0, static_cast<double>(H - 1));
  }
  const int x0 = std::min(static_cast<int>(std::floor(x)), W - 1);
  const int y0 = std::min(static_cast<int>(std::floor(y)), H - 1);
  const int x1 = std::min(x0 + 1, W - 1);
  const int y1 = std::min(y0 + 1, H - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const double w00 = (1.0 - ax) * (1.0 - ay);
  const double w01 = ax * (1.0 - ay);
  const double w10 = (1.0 - ax) * ay;
  const double w11 = ax * ay;
  const auto t00 = grid.texel(y0, x0);
  const auto t01 = grid.texel(y0, x1);
  const auto t10 = grid.texel(y1, x0);
  const auto t11 = grid.texel(y1, x1);
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = w00 * t00[c] + w01 * t01[c] + w10 * t10[c] + w11 * t11[c];
  return out;
}

struct LineSegment {
  Pixel a;
  Pixel b;
};

/// Intersection of a (unit-normal) line with the rectangle [0, W-1] x [0, H-1].
inline std::optional<LineSegment> clip_line_to_grid(const EpipolarLine& line, int W, int H) {
  if (line.degenerate) return std::nullopt;
  const double a = line.l[0], b = line.l[1], c = line.l[2];
  // Foot of the perpendicular from the origin, and the line direction.
  const double ox = -c * a, oy = -c * b;
  const double dx = -b, dy = a;

  double s_lo = -std::numeric_limits<double>::infinity();
  double s_hi = std::numeric_limits<double>::infinity();
  const auto clip = [&](double origin, double dir, double lo, double hi) {
    if (dir == 0.0) {
      if (origin < lo || origin > hi) s_lo = std::numeric_limits<double>::infinity();
      return;
    }
    double s0 = (lo - origin) / dir;
    double s1 = (hi - origin) / dir;
    if (s0 > s1) std::swap(s0, s1);
    s_lo = std::max(s_lo, s0);
    s_hi = std::min(s_hi, s1);
  };
  clip(ox, dx, 0.0, W - 1.0);
  clip(oy, dy, 0.0, H - 1.0);
  if (!(s_lo <= s_hi)) return std::nullopt;

  const auto point_at = [&](double s) {
    // Snap the tiny overshoot rounding can produce back onto the rectangle.
    return Pixel{std::clamp(ox + s * dx, 0.0, W - 1.0), std::clamp(oy + s * dy, 0.0, H - 1.0)};
  };
  return LineSegment{point_at(s_lo), point_at(s_hi)};
}

/// Channelwise mean or max of equally sized feature vectors.
inline Feature aggregate(std::span<const Feature> features, AggregatorMode mode) {
  if (features.empty()) throw EmptySampleSet("aggregate needs at least one sample");
  const std::size_t C = features.front().size();
  Feature out = features.front();
  for (std::size_t i = 1; i < features.size(); ++i) {
    if (features[i].size() != C) throw ShapeMismatch("aggregate: channel counts differ");
    for (std::size_t c = 0; c < C; ++c) {
      if (mode == AggregatorMode::Mean)
        out[c] += features[i][c];
      else
        out[c] = std::max(out[c], features[i][c]);
    }
  }
  if (mode == AggregatorMode::Mean)
    for (auto& v : out) v /= static_cast<double>(features.size());
  return out;
}

namespace detail {

/// Grid corner closest to a line; used by the Nearest policy when the line
/// misses the grid.
inline Pixel nearest_corner(const EpipolarLine& line, int W, int H) {
  const Pixel corners[4] = {{0, 0}, {W - 1.0, 0}, {0, H - 1.0}, {W - 1.0, H - 1.0}};
  Pixel best = corners[0];
  double best_d = std::abs(line.residual(best));
  for (const auto& p : corners) {
    const double d = std::abs(line.residual(p));
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return best;
}

}  // namespace detail

/// Epipolar warp of source-view features into the target view.
///
/// The intrinsics describe the full-resolution images; they are rescaled to
/// the grid resolution, so a grid may be a strided feature map of the image.
template <typename Scalar>
BasicFeatureGrid<Scalar> epipolar_warp(const BasicFeatureGrid<Scalar>& src,
                                       const CameraIntrinsics& K_src,
                                       const CameraIntrinsics& K_tgt, const RigidTransform& T,
                                       const WarpConfig& cfg = {}) {
  cfg.validate();
  K_src.validate();
  K_tgt.validate();
  const int H = src.height(), W = src.width(), C = src.channels();

  if (T.R == Mat3d::identity() && norm(T.t) < cfg.eps_t && K_src == K_tgt) return src;

  const CameraIntrinsics Ks = K_src.rescaled_to(W, H);
  const CameraIntrinsics Kt = K_tgt.rescaled_to(W, H);
  BasicFeatureGrid<Scalar> out(H, W, C);

  const auto write = [&](int row, int col, const Feature& f) {
    auto dst = out.texel(row, col);
    for (int c = 0; c < C; ++c) dst[c] = static_cast<Scalar>(f[c]);
  };

  if (norm(T.t) < cfg.eps_t) {
    const Mat3d Hm = rotation_homography(Ks, Kt, T.R);
    for (int row = 0; row < H; ++row)
      for (int col = 0; col < W; ++col) {
        const Vec3d q = Hm * Vec3d(col, row, 1.0);
        if (!(q[2] > 0.0)) {
          // Target ray points behind the source camera.
          if (cfg.out_of_view_policy == OutOfViewPolicy::Zero) continue;
        }
        write(row, col,
              bilinear_sample(src, q[0] / q[2], q[1] / q[2], cfg.out_of_view_policy));
      }
    return out;
  }

  std::vector<Feature> samples(static_cast<std::size_t>(cfg.n_samples));
  for (int row = 0; row < H; ++row)
    for (int col = 0; col < W; ++col) {
      const EpipolarLine line = epipolar_line(Ks, Kt, T, Pixel{double(col), double(row)}, cfg.eps_t);
      const auto seg = clip_line_to_grid(line, W, H);
      if (!seg) {
        if (cfg.out_of_view_policy == OutOfViewPolicy::Nearest && !line.degenerate) {
          const Pixel p = detail::nearest_corner(line, W, H);
          write(row, col, bilinear_sample(src, p.u, p.v));
        }
        continue;
      }
      const int n = cfg.n_samples;
      for (int i = 0; i < n; ++i) {
        const double s = static_cast<double>(i) / (n - 1);
        const double x = seg->a.u + s * (seg->b.u - seg->a.u);
        const double y = seg->a.v + s * (seg->b.v - seg->a.v);
        samples[static_cast<std::size_t>(i)] = bilinear_sample(src, x, y, OutOfViewPolicy::Nearest);
      }
      write(row, col, aggregate(samples, cfg.mode));
    }
  return out;
}

struct Correspondence {
  int row = 0;
  int col = 0;
  double similarity = 0.0;
  FeatureGrid similarity_map;  // H x W x 1, cosine similarity per target texel
};

/// Cosine-similarity argmax in `tgt` of the source feature at the texel
/// nearest to `p_src`. Ties resolve to the smallest (row, col).
template <typename Scalar>
Correspondence feature_correspondence(const BasicFeatureGrid<Scalar>& src,
                                      const BasicFeatureGrid<Scalar>& tgt, const Pixel& p_src) {
  if (src.channels() != tgt.channels())
    throw ShapeMismatch("feature_correspondence: channel counts differ");
  const int qc = std::clamp(static_cast<int>(std::lround(p_src.u)), 0, src.width() - 1);
  const int qr = std::clamp(static_cast<int>(std::lround(p_src.v)), 0, src.height() - 1);
  const auto query = src.texel(qr, qc);
  double qn = 0.0;
  for (auto v : query) qn += double(v) * double(v);
  qn = std::sqrt(qn);
  if (!(qn > 0.0)) throw ZeroVector("query feature has zero norm");

  Correspondence out;
  out.similarity_map = FeatureGrid(tgt.height(), tgt.width(), 1);
  out.similarity = -std::numeric_limits<double>::infinity();
  for (int row = 0; row < tgt.height(); ++row)
    for (int col = 0; col < tgt.width(); ++col) {
      const auto f = tgt.texel(row, col);
      double d = 0.0, fn = 0.0;
      for (std::size_t c = 0; c < f.size(); ++c) {
        d += double(query[c]) * double(f[c]);
        fn += double(f[c]) * double(f[c]);
      }
      const double sim = fn > 0.0 ? d / (qn * std::sqrt(fn)) : 0.0;
      out.similarity_map.at(row, col, 0) = sim;
      if (sim > out.similarity) {
        out.similarity = sim;
        out.row = row;
        out.col = col;
      }
    }
  return out;
}

// Binary dump: little-endian u32 H, W, C followed by H*W*C float32, row-major.

namespace detail {

template <typename T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

}  // namespace detail

inline void write_grid(std::ostream& os, const FeatureGrid& g) {
  const std::uint32_t header[3] = {
      detail::to_little_endian(static_cast<std::uint32_t>(g.height())),
      detail::to_little_endian(static_cast<std::uint32_t>(g.width())),
      detail::to_little_endian(static_cast<std::uint32_t>(g.channels()))};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  std::vector<float> payload(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    payload[i] = detail::to_little_endian(static_cast<float>(g.data()[i]));
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

inline FeatureGrid read_grid(std::istream& is, const std::string& name = "grid") {
  std::uint32_t header[3];
  if (!is.read(reinterpret_cast<char*>(header), sizeof(header)))
    throw ParseError(name, "truncated grid header");
  const auto H = detail::to_little_endian(header[0]);
  const auto W = detail::to_little_endian(header[1]);
  const auto C = detail::to_little_endian(header[2]);
  constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;
  if (H == 0 || W == 0 || C == 0 || std::uint64_t{H} * W * C > kMaxElements)
    throw ParseError(name, "invalid grid dimensions");
  std::vector<float> payload(std::size_t{H} * W * C);
  if (!is.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(payload.size() * sizeof(float))))
    throw ParseError(name, "truncated grid payload");
  std::vector<double> data(payload.size());
  for (std::size_t i = 0; i < payload.size(); ++i) {
    data[i] = detail::to_little_endian(payload[i]);
    if (!std::isfinite(data[i])) throw ParseError(name, "non-finite grid value");
  }
  return FeatureGrid(static_cast<int>(H), static_cast<int>(W), static_cast<int>(C),
                     std::move(data));
}

inline void write_grid_file(const std::string& path, const FeatureGrid& g) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_grid(os, g);
  if (!os) throw Error("failed writing " + path);
}

inline FeatureGrid read_grid_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path, "cannot open file");
  return read_grid(is, path);
}

}  // namespace geodet
