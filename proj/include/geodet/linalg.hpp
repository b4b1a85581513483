#pragma once

// Small fixed-size 3D linear algebra, templated on the scalar so the cuboid
// decoder can be evaluated on dual numbers for exact derivatives.

#include <array>
#include <cmath>
#include <cstddef>

namespace geodet {

template <typename T>
struct Vec3 {
  std::array<T, 3> v{};

  constexpr Vec3() = default;
  constexpr Vec3(T x, T y, T z) : v{x, y, z} {}

  constexpr T& operator[](std::size_t i) { return v[i]; }
  constexpr const T& operator[](std::size_t i) const { return v[i]; }

  constexpr T x() const { return v[0]; }
  constexpr T y() const { return v[1]; }
  constexpr T z() const { return v[2]; }

  static constexpr Vec3 zero() { return Vec3(T(0), T(0), T(0)); }

  template <typename U>
  Vec3<U> cast() const {
    return Vec3<U>(U(v[0]), U(v[1]), U(v[2]));
  }

  Vec3& operator+=(const Vec3& o) {
    for (std::size_t i = 0; i < 3; ++i) v[i] = v[i] + o.v[i];
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    for (std::size_t i = 0; i < 3; ++i) v[i] = v[i] - o.v[i];
    return *this;
  }
  Vec3& operator*=(const T& s) {
    for (std::size_t i = 0; i < 3; ++i) v[i] = v[i] * s;
    return *this;
  }

  friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend Vec3 operator-(const Vec3& a) { return Vec3(-a.v[0], -a.v[1], -a.v[2]); }
  friend Vec3 operator*(Vec3 a, const T& s) { return a *= s; }
  friend Vec3 operator*(const T& s, Vec3 a) { return a *= s; }
  friend Vec3 operator/(const Vec3& a, const T& s) {
    return Vec3(a.v[0] / s, a.v[1] / s, a.v[2] / s);
  }

  friend bool operator==(const Vec3& a, const Vec3& b) { return a.v == b.v; }
};

template <typename T>
T dot(const Vec3<T>& a, const Vec3<T>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

template <typename T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return Vec3<T>(a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                 a[0] * b[1] - a[1] * b[0]);
}

template <typename T>
T squared_norm(const Vec3<T>& a) {
  return dot(a, a);
}

template <typename T>
T norm(const Vec3<T>& a) {
  using std::sqrt;
  return sqrt(squared_norm(a));
}

template <typename T>
Vec3<T> cwise_product(const Vec3<T>& a, const Vec3<T>& b) {
  return Vec3<T>(a[0] * b[0], a[1] * b[1], a[2] * b[2]);
}

/// Row-major 3x3 matrix.
template <typename T>
struct Mat3 {
  std::array<T, 9> m{};

  constexpr Mat3() = default;

  static constexpr Mat3 identity() {
    Mat3 r;
    r.m = {T(1), T(0), T(0), T(0), T(1), T(0), T(0), T(0), T(1)};
    return r;
  }
  static constexpr Mat3 zero() {
    Mat3 r;
    r.m.fill(T(0));
    return r;
  }
  static Mat3 from_rows(const std::array<T, 9>& rows) {
    Mat3 r;
    r.m = rows;
    return r;
  }
  static Mat3 from_columns(const Vec3<T>& c0, const Vec3<T>& c1, const Vec3<T>& c2) {
    Mat3 r;
    for (std::size_t i = 0; i < 3; ++i) {
      r(i, 0) = c0[i];
      r(i, 1) = c1[i];
      r(i, 2) = c2[i];
    }
    return r;
  }

  constexpr T& operator()(std::size_t r, std::size_t c) { return m[3 * r + c]; }
  constexpr const T& operator()(std::size_t r, std::size_t c) const { return m[3 * r + c]; }

  Vec3<T> col(std::size_t c) const { return Vec3<T>(m[c], m[3 + c], m[6 + c]); }
  Vec3<T> row(std::size_t r) const { return Vec3<T>(m[3 * r], m[3 * r + 1], m[3 * r + 2]); }

  template <typename U>
  Mat3<U> cast() const {
    Mat3<U> r;
    for (std::size_t i = 0; i < 9; ++i) r.m[i] = U(m[i]);
    return r;
  }

  Mat3 transpose() const {
    Mat3 r;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  T determinant() const {
    const auto& a = *this;
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
  }

  /// Adjugate-based inverse; caller guarantees a nonzero determinant.
  Mat3 inverse() const {
    const auto& a = *this;
    const T det = determinant();
    Mat3 r;
    r(0, 0) = (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) / det;
    r(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / det;
    r(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / det;
    r(1, 0) = (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) / det;
    r(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / det;
    r(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / det;
    r(2, 0) = (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) / det;
    r(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) / det;
    r(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / det;
    return r;
  }

  friend Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
    return r;
  }
  friend Vec3<T> operator*(const Mat3& a, const Vec3<T>& x) {
    return Vec3<T>(a(0, 0) * x[0] + a(0, 1) * x[1] + a(0, 2) * x[2],
                   a(1, 0) * x[0] + a(1, 1) * x[1] + a(1, 2) * x[2],
                   a(2, 0) * x[0] + a(2, 1) * x[1] + a(2, 2) * x[2]);
  }
  friend Mat3 operator+(Mat3 a, const Mat3& b) {
    for (std::size_t i = 0; i < 9; ++i) a.m[i] = a.m[i] + b.m[i];
    return a;
  }
  friend Mat3 operator-(Mat3 a, const Mat3& b) {
    for (std::size_t i = 0; i < 9; ++i) a.m[i] = a.m[i] - b.m[i];
    return a;
  }
  friend Mat3 operator*(Mat3 a, const T& s) {
    for (auto& e : a.m) e = e * s;
    return a;
  }
  friend Mat3 operator*(const T& s, Mat3 a) { return a * s; }

  friend bool operator==(const Mat3& a, const Mat3& b) { return a.m == b.m; }
};

/// Largest absolute entry of a - b.
template <typename T>
T max_abs_diff(const Mat3<T>& a, const Mat3<T>& b) {
  T worst = T(0);
  for (std::size_t i = 0; i < 9; ++i) {
    const T d = std::abs(a.m[i] - b.m[i]);
    if (d > worst) worst = d;
  }
  return worst;
}

template <typename T>
T max_abs_diff(const Vec3<T>& a, const Vec3<T>& b) {
  T worst = T(0);
  for (std::size_t i = 0; i < 3; ++i) {
    const T d = std::abs(a[i] - b[i]);
    if (d > worst) worst = d;
  }
  return worst;
}

/// Rotation by `radians` about a coordinate axis (0 = x, 1 = y, 2 = z).
inline Mat3<double> axis_rotation(int axis, double radians) {
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  switch (axis) {
    case 0:
      return Mat3<double>::from_rows({1, 0, 0, 0, c, -s, 0, s, c});
    case 1:
      return Mat3<double>::from_rows({c, 0, s, 0, 1, 0, -s, 0, c});
    default:
      return Mat3<double>::from_rows({c, -s, 0, s, c, 0, 0, 0, 1});
  }
}

/// Rodrigues rotation about a unit axis.
inline Mat3<double> axis_angle_rotation(const Vec3<double>& unit_axis, double radians) {
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  const double C = 1.0 - c;
  const double x = unit_axis[0], y = unit_axis[1], z = unit_axis[2];
  return Mat3<double>::from_rows({c + x * x * C, x * y * C - z * s, x * z * C + y * s,
                                  y * x * C + z * s, c + y * y * C, y * z * C - x * s,
                                  z * x * C - y * s, z * y * C + x * s, c + z * z * C});
}

using Vec3d = Vec3<double>;
using Mat3d = Mat3<double>;

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

}  // namespace geodet
