#pragma once

// Forward-mode dual numbers with a fixed-width tangent vector.
//
// A Dual<N> carries a value and N directional derivatives. Every supported
// primitive propagates all N tangents through the chain rule, so one
// evaluation of a function on Dual<N> inputs seeded with N directions yields
// N directional derivatives at once. Primitives that are not differentiable at
// the evaluation point raise DiffError instead of returning a subgradient.

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kiteopt::diff {

class DiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <int N>
class Dual {
 public:
  static_assert(N > 0);
  static constexpr int kWidth = N;

  constexpr Dual() = default;
  // Implicit so that double constants mix freely with duals in model code.
  constexpr Dual(double value) : value_(value) {}  // NOLINT
  constexpr Dual(double value, int seed) : value_(value) { tangent_[seed] = 1.0; }

  constexpr double value() const { return value_; }
  constexpr double tangent(int i) const { return tangent_[i]; }
  constexpr double& tangent(int i) { return tangent_[i]; }
  constexpr const std::array<double, N>& tangents() const { return tangent_; }
  constexpr std::array<double, N>& tangents() { return tangent_; }

  // Value f(a) with derivative scale f'(a) applied to every tangent.
  constexpr Dual chain(double f, double df) const {
    Dual out(f);
    for (int i = 0; i < N; ++i) out.tangent_[i] = df * tangent_[i];
    return out;
  }

  constexpr Dual& operator+=(const Dual& o) {
    value_ += o.value_;
    for (int i = 0; i < N; ++i) tangent_[i] += o.tangent_[i];
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    value_ -= o.value_;
    for (int i = 0; i < N; ++i) tangent_[i] -= o.tangent_[i];
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) tangent_[i] = tangent_[i] * o.value_ + value_ * o.tangent_[i];
    value_ *= o.value_;
    return *this;
  }
  constexpr Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.value_;
    const double q = value_ * inv;
    for (int i = 0; i < N; ++i) tangent_[i] = (tangent_[i] - q * o.tangent_[i]) * inv;
    value_ = q;
    return *this;
  }

 private:
  double value_ = 0.0;
  std::array<double, N> tangent_{};
};

template <int N>
constexpr Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N>
constexpr Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N>
constexpr Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <int N>
constexpr Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }

template <int N>
constexpr Dual<N> operator+(Dual<N> a, double b) { return a += Dual<N>(b); }
template <int N>
constexpr Dual<N> operator+(double a, Dual<N> b) { return b += Dual<N>(a); }
template <int N>
constexpr Dual<N> operator-(Dual<N> a, double b) { return a -= Dual<N>(b); }
template <int N>
constexpr Dual<N> operator-(double a, const Dual<N>& b) { return Dual<N>(a) -= b; }
template <int N>
constexpr Dual<N> operator*(const Dual<N>& a, double b) { return a.chain(a.value() * b, b); }
template <int N>
constexpr Dual<N> operator*(double a, const Dual<N>& b) { return b.chain(a * b.value(), a); }
template <int N>
constexpr Dual<N> operator/(const Dual<N>& a, double b) { return a.chain(a.value() / b, 1.0 / b); }
template <int N>
constexpr Dual<N> operator/(double a, const Dual<N>& b) { return Dual<N>(a) /= b; }

template <int N>
constexpr Dual<N> operator-(const Dual<N>& a) { return a.chain(-a.value(), -1.0); }
template <int N>
constexpr Dual<N> operator+(const Dual<N>& a) { return a; }

// Comparisons act on values only; callers branching on them must ensure the
// branches agree to first order or stay away from the switch point.
template <int N>
constexpr bool operator<(const Dual<N>& a, const Dual<N>& b) { return a.value() < b.value(); }
template <int N>
constexpr bool operator>(const Dual<N>& a, const Dual<N>& b) { return a.value() > b.value(); }
template <int N>
constexpr bool operator<=(const Dual<N>& a, const Dual<N>& b) { return a.value() <= b.value(); }
template <int N>
constexpr bool operator>=(const Dual<N>& a, const Dual<N>& b) { return a.value() >= b.value(); }
template <int N>
constexpr bool operator<(const Dual<N>& a, double b) { return a.value() < b; }
template <int N>
constexpr bool operator>(const Dual<N>& a, double b) { return a.value() > b; }
template <int N>
constexpr bool operator<=(const Dual<N>& a, double b) { return a.value() <= b; }
template <int N>
constexpr bool operator>=(const Dual<N>& a, double b) { return a.value() >= b; }

template <int N>
Dual<N> sin(const Dual<N>& a) { return a.chain(std::sin(a.value()), std::cos(a.value())); }
template <int N>
Dual<N> cos(const Dual<N>& a) { return a.chain(std::cos(a.value()), -std::sin(a.value())); }
template <int N>
Dual<N> tan(const Dual<N>& a) {
  const double t = std::tan(a.value());
  return a.chain(t, 1.0 + t * t);
}
template <int N>
Dual<N> exp(const Dual<N>& a) {
  const double e = std::exp(a.value());
  return a.chain(e, e);
}
template <int N>
Dual<N> log(const Dual<N>& a) {
  if (!(a.value() > 0.0)) throw DiffError("log: argument must be positive");
  return a.chain(std::log(a.value()), 1.0 / a.value());
}
template <int N>
Dual<N> sqrt(const Dual<N>& a) {
  if (!(a.value() > 0.0)) throw DiffError("sqrt: not differentiable at non-positive argument");
  const double s = std::sqrt(a.value());
  return a.chain(s, 0.5 / s);
}
template <int N>
Dual<N> pow(const Dual<N>& a, double p) {
  if (p == 0.0) return Dual<N>(1.0);
  if (p == 1.0) return a;
  if (!(a.value() > 0.0) && p != std::floor(p)) {
    throw DiffError("pow: non-integer exponent of a non-positive base");
  }
  const double f = std::pow(a.value(), p);
  return a.chain(f, p * std::pow(a.value(), p - 1.0));
}
template <int N>
Dual<N> pow(const Dual<N>& a, const Dual<N>& p) {
  if (!(a.value() > 0.0)) throw DiffError("pow: dual exponent requires a positive base");
  return exp(p * log(a));
}
template <int N>
Dual<N> pow(double a, const Dual<N>& p) {
  if (!(a > 0.0)) throw DiffError("pow: dual exponent requires a positive base");
  const double f = std::pow(a, p.value());
  return p.chain(f, f * std::log(a));
}
template <int N>
Dual<N> atan(const Dual<N>& a) {
  return a.chain(std::atan(a.value()), 1.0 / (1.0 + a.value() * a.value()));
}
template <int N>
Dual<N> tanh(const Dual<N>& a) {
  const double t = std::tanh(a.value());
  return a.chain(t, 1.0 - t * t);
}
template <int N>
Dual<N> abs(const Dual<N>& a) {
  if (a.value() == 0.0) throw DiffError("abs: not differentiable at zero");
  return a.chain(std::fabs(a.value()), a.value() > 0.0 ? 1.0 : -1.0);
}
template <int N>
bool isfinite(const Dual<N>& a) {
  if (!std::isfinite(a.value())) return false;
  for (double t : a.tangents()) {
    if (!std::isfinite(t)) return false;
  }
  return true;
}

// Non-smooth selectors are deliberately absent; use the smoothed forms below.
template <int N>
Dual<N> min(const Dual<N>&, const Dual<N>&) = delete;
template <int N>
Dual<N> max(const Dual<N>&, const Dual<N>&) = delete;
template <int N>
Dual<N> floor(const Dual<N>&) = delete;
template <int N>
Dual<N> ceil(const Dual<N>&) = delete;
template <int N>
Dual<N> round(const Dual<N>&) = delete;

}  // namespace kiteopt::diff

namespace kiteopt {

inline double value_of(double x) { return x; }
template <int N>
double value_of(const diff::Dual<N>& x) { return x.value(); }

// Smooth surrogates: max(a, b) + O(width) everywhere, C-infinity in a and b.
template <class S>
S smooth_max(const S& a, const S& b, double width) {
  using std::sqrt;
  const S d = a - b;
  return 0.5 * (a + b + sqrt(d * d + width * width));
}
template <class S>
S smooth_min(const S& a, const S& b, double width) {
  using std::sqrt;
  const S d = a - b;
  return 0.5 * (a + b - sqrt(d * d + width * width));
}
template <class S>
S smooth_clamp(const S& x, double lo, double hi, double width) {
  return smooth_min(smooth_max(x, S(lo), width), S(hi), width);
}

}  // namespace kiteopt
