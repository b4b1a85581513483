#pragma once

// Forward-mode dual numbers carrying an N-dimensional gradient. Used to
// differentiate the cuboid decoder exactly through the chain rule.

#include <array>
#include <cmath>
#include <cstddef>

namespace geodet {

template <std::size_t N>
struct Dual {
  double a = 0.0;            // value
  std::array<double, N> v{};  // partial derivatives

  constexpr Dual() = default;
  constexpr Dual(double value) : a(value) {}  // NOLINT: implicit constant lift

  static Dual variable(double value, std::size_t index) {
    Dual d(value);
    d.v[index] = 1.0;
    return d;
  }

  Dual& operator+=(const Dual& o) {
    a += o.a;
    for (std::size_t i = 0; i < N; ++i) v[i] += o.v[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    a -= o.a;
    for (std::size_t i = 0; i < N; ++i) v[i] -= o.v[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (std::size_t i = 0; i < N; ++i) v[i] = v[i] * o.a + a * o.v[i];
    a *= o.a;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.a;
    for (std::size_t i = 0; i < N; ++i) v[i] = (v[i] - a * inv * o.v[i]) * inv;
    a *= inv;
    return *this;
  }

  friend Dual operator+(Dual x, const Dual& y) { return x += y; }
  friend Dual operator-(Dual x, const Dual& y) { return x -= y; }
  friend Dual operator*(Dual x, const Dual& y) { return x *= y; }
  friend Dual operator/(Dual x, const Dual& y) { return x /= y; }
  friend Dual operator-(Dual x) {
    x.a = -x.a;
    for (auto& e : x.v) e = -e;
    return x;
  }

  friend bool operator<(const Dual& x, const Dual& y) { return x.a < y.a; }
  friend bool operator>(const Dual& x, const Dual& y) { return x.a > y.a; }
  friend bool operator==(const Dual& x, const Dual& y) { return x.a == y.a; }

  friend Dual sqrt(const Dual& x) {
    Dual r(std::sqrt(x.a));
    const double k = 0.5 / r.a;
    for (std::size_t i = 0; i < N; ++i) r.v[i] = k * x.v[i];
    return r;
  }
  friend Dual exp(const Dual& x) {
    Dual r(std::exp(x.a));
    for (std::size_t i = 0; i < N; ++i) r.v[i] = r.a * x.v[i];
    return r;
  }
};

inline double value_of(double x) { return x; }
template <std::size_t N>
double value_of(const Dual<N>& x) {
  return x.a;
}

/// True when the tracked derivative is identically zero. Plain doubles carry
/// no derivative and never count as constant.
inline bool is_constant(double) { return false; }
template <std::size_t N>
bool is_constant(const Dual<N>& x) {
  for (double d : x.v)
    if (d != 0.0) return false;
  return true;
}

}  // namespace geodet
