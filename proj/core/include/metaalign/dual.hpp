#pragma once

// First-order forward-mode scalar. Running a reverse-mode gradient routine
// on Dual inputs whose tangent is v yields H v in the output tangents, which
// is how the unrolled inner loop gets its Hessian-vector products.

#include <cmath>
#include <ostream>

#include <Eigen/Core>

namespace metaalign {

struct Dual {
  double val = 0.0;
  double tan = 0.0;

  constexpr Dual() = default;
  constexpr Dual(double v) : val(v) {}  // NOLINT: implicit lift of constants
  constexpr Dual(double v, double t) : val(v), tan(t) {}

  Dual& operator+=(const Dual& o) {
    val += o.val;
    tan += o.tan;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    val -= o.val;
    tan -= o.tan;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    tan = tan * o.val + val * o.tan;
    val *= o.val;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.val;
    tan = (tan - val * inv * o.tan) * inv;
    val *= inv;
    return *this;
  }
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }
inline Dual operator-(const Dual& a) { return {-a.val, -a.tan}; }
inline Dual operator+(const Dual& a) { return a; }

inline bool operator<(const Dual& a, const Dual& b) { return a.val < b.val; }
inline bool operator>(const Dual& a, const Dual& b) { return a.val > b.val; }
inline bool operator<=(const Dual& a, const Dual& b) { return a.val <= b.val; }
inline bool operator>=(const Dual& a, const Dual& b) { return a.val >= b.val; }
inline bool operator==(const Dual& a, const Dual& b) { return a.val == b.val; }
inline bool operator!=(const Dual& a, const Dual& b) { return a.val != b.val; }

inline Dual exp(const Dual& a) {
  const double e = std::exp(a.val);
  return {e, e * a.tan};
}
inline Dual log(const Dual& a) { return {std::log(a.val), a.tan / a.val}; }
inline Dual sqrt(const Dual& a) {
  const double s = std::sqrt(a.val);
  return {s, 0.5 * a.tan / s};
}
inline Dual tanh(const Dual& a) {
  const double t = std::tanh(a.val);
  return {t, (1.0 - t * t) * a.tan};
}
inline Dual abs(const Dual& a) { return a.val < 0.0 ? -a : a; }
inline Dual abs2(const Dual& a) { return a * a; }
inline Dual conj(const Dual& a) { return a; }
inline Dual real(const Dual& a) { return a; }
inline Dual imag(const Dual&) { return 0.0; }
inline bool isfinite(const Dual& a) { return std::isfinite(a.val) && std::isfinite(a.tan); }

inline std::ostream& operator<<(std::ostream& os, const Dual& a) { return os << a.val << "+" << a.tan << "e"; }

inline double ValueOf(double x) { return x; }
inline double ValueOf(const Dual& x) { return x.val; }

}  // namespace metaalign

namespace Eigen {

template <>
struct NumTraits<metaalign::Dual> : GenericNumTraits<metaalign::Dual> {
  using Real = metaalign::Dual;
  using NonInteger = metaalign::Dual;
  using Nested = metaalign::Dual;
  using Literal = metaalign::Dual;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2,
    AddCost = 2,
    MulCost = 4,
  };
  static inline Real epsilon() { return NumTraits<double>::epsilon(); }
  static inline Real dummy_precision() { return NumTraits<double>::dummy_precision(); }
  static inline Real highest() { return NumTraits<double>::highest(); }
  static inline Real lowest() { return NumTraits<double>::lowest(); }
  static inline int digits10() { return NumTraits<double>::digits10(); }
};

}  // namespace Eigen
