#pragma once

// Special functions needed by the fading-channel error-rate formulas.
// Everything here is double precision, pure and reentrant.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include "nakaber/quad.hpp"

namespace nakaber {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when an iterative method or quadrature misses its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double achieved_error, int term_index = -1)
      : std::runtime_error(what), achieved_error_(achieved_error), term_index_(term_index) {}

  double achieved_error() const noexcept { return achieved_error_; }
  /// Series term that failed, or -1 when not applicable.
  int term_index() const noexcept { return term_index_; }

 private:
  double achieved_error_;
  int term_index_;
};

struct Accuracy {
  double rel_tol = 1e-12;
  double abs_floor = 1e-300;

  void validate() const {
    if (!(rel_tol > 0.0 && rel_tol <= 1e-3)) {
      throw DomainError("Accuracy: rel_tol must lie in (0, 1e-3]");
    }
    if (!(abs_floor > 0.0 && abs_floor <= 1e-10)) {
      throw DomainError("Accuracy: abs_floor must lie in (0, 1e-10]");
    }
  }
};

namespace detail {

inline constexpr double kEulerGamma = 0.577215664901532860606512090082;

// zeta(k) - 1 for k = 2, 3, ...
inline constexpr std::array<double, 40> kZetaMinusOne = {
    0.644934066848226436472,     0.2020569031595942854,       0.082323233711138191516,
    0.0369277551433699263314,    0.0173430619844491397145,    0.0083492773819228268398,
    0.00407735619794433937869,   0.00200839282608221441785,   0.000994575127818085337146,
    0.000494188604119464558702,  0.000246086553308048298638,  0.000122713347578489146752,
    0.0000612481350587048292585, 0.0000305882363070204935517, 0.0000152822594086518717326,
    0.0000076371976378997622736, 0.00000381729326499983985646, 0.00000190821271655393892566,
    9.53962033872796113152e-7,   4.76932986787806463117e-7,   2.38450502727732990004e-7,
    1.19219925965311073068e-7,   5.96081890512594796124e-8,   2.98035035146522801861e-8,
    1.49015548283650412347e-8,   7.45071178983542949198e-9,   3.72533402478845705482e-9,
    1.8626597235130490064e-9,    9.31327432419668182872e-10,  4.65662906503378407299e-10,
    2.328311833676505492e-10,    1.16415501727005197759e-10,  5.82077208790270088925e-11,
    2.91038504449709968693e-11,  1.4551921891041984236e-11,   7.27595983505748101451e-12,
    3.63797954737865119024e-12,  1.81898965030706594765e-12,  9.09494784026388928288e-13,
    4.54747378304215402704e-13};

// ln Gamma(2 + e) for |e| <= 1/2:  e(1 - gamma) + sum_k (-1)^k (zeta(k)-1) e^k / k.
inline double log_gamma_near_two(double e) {
  double sum = 0.0;
  for (std::size_t i = kZetaMinusOne.size(); i-- > 0;) {
    const double k = static_cast<double>(i + 2);
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    sum = sum * e + sign * kZetaMinusOne[i] / k;
  }
  return e * (1.0 - kEulerGamma) + sum * e * e;
}

// ln Gamma(x) minus its Stirling main part, for x >= 10.
inline double stirling_correction(double x) {
  const double r = 1.0 / x;
  const double r2 = r * r;
  return r * (1.0 / 12.0 +
              r2 * (-1.0 / 360.0 +
                    r2 * (1.0 / 1260.0 +
                          r2 * (-1.0 / 1680.0 +
                                r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360360.0 + r2 * (1.0 / 156.0)))))));
}

inline double log_gamma_stirling(double x) {
  constexpr double half_log_two_pi = 0.918938533204672741780329736406;
  return (x - 0.5) * std::log(x) - x + half_log_two_pi + stirling_correction(x);
}

}  // namespace detail

/// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
  if (!std::isfinite(x) || x <= 0.0) {
    throw DomainError("log_gamma: argument must be finite and positive");
  }
  if (x < 0.5) {
    // Gamma(x + 2) = x (x + 1) Gamma(x)
    return detail::log_gamma_near_two(x) - std::log(x) - std::log1p(x);
  }
  if (x < 1.5) {
    // Gamma(x + 1) = x Gamma(x)
    return detail::log_gamma_near_two(x - 1.0) - std::log(x);
  }
  if (x <= 2.5) return detail::log_gamma_near_two(x - 2.0);
  if (x < 10.0) {
    double shifted = x;
    double product = 1.0;
    while (shifted > 2.5) {
      shifted -= 1.0;
      product *= shifted;
    }
    return std::log(product) + detail::log_gamma_near_two(shifted - 2.0);
  }
  return detail::log_gamma_stirling(x);
}

inline double log_beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw DomainError("beta: arguments must be finite and positive");
  }
  if (a > b) std::swap(a, b);
  if (b < 10.0) return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
  // ln Gamma(b) - ln Gamma(a + b) without cancelling two large logs.
  const double ratio = -a * std::log(b) - (a + b - 0.5) * std::log1p(a / b) + a + detail::stirling_correction(b) -
                       detail::stirling_correction(a + b);
  return log_gamma(a) + ratio;
}

inline double beta(double a, double b) { return std::exp(log_beta(a, b)); }

struct RisingFactorial {
  double value;
  bool overflow;
};

/// x (x+1) ... (x+n-1), with an overflow flag.
inline RisingFactorial pochhammer_checked(double x, unsigned n) {
  double value = 1.0;
  for (unsigned k = 0; k < n; ++k) {
    const double factor = x + static_cast<double>(k);
    if (factor == 0.0) return {0.0, false};
    value *= factor;
  }
  return {value, std::isinf(value)};
}

inline double pochhammer(double x, unsigned n) { return pochhammer_checked(x, n).value; }

/// Gaussian tail probability Q(z) = erfc(z / sqrt 2) / 2.
///
/// The rounding error of z / sqrt 2 is carried as a first-order correction,
/// which keeps the relative error at a few ulp out to the underflow region.
inline double gauss_q(double z) {
  if (std::isnan(z)) throw DomainError("gauss_q: argument is NaN");
  if (std::isinf(z)) return z > 0 ? 0.0 : 1.0;
  constexpr double sqrt2_hi = 1.4142135623730951;
  constexpr double sqrt2_lo = -9.667293313452913e-17;
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double hi = z * inv_sqrt2;
  const double residual = std::fma(-hi, sqrt2_hi, z) - hi * sqrt2_lo;
  const double lo = residual * inv_sqrt2;
  const double base = std::erfc(hi);
  const double slope = std::numbers::inv_sqrtpi * 2.0 * std::exp(-hi * hi);
  return 0.5 * (base - lo * slope);
}

namespace detail {

// Modified Lentz evaluation of the incomplete beta continued fraction.
inline double inc_beta_fraction(double x, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 4e-16;
  constexpr int max_iter = 20000;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const double dm = static_cast<double>(m);
    const double m2 = 2.0 * dm;
    double aa = dm * (b - dm) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + dm) * (qab + dm) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) return h;
  }
  throw ConvergenceError("reg_inc_beta: continued fraction did not converge", std::abs(h));
}

// I_x(a, b) evaluated directly (no reflection), with y = 1 - x supplied.
inline double inc_beta_direct(double x, double y, double a, double b) {
  const double log_front = a * std::log(x) + b * std::log(y) - log_beta(a, b);
  return std::exp(log_front) * inc_beta_fraction(x, a, b) / a;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) with the complement 1 - x given
/// explicitly, so that arguments close to 1 keep full relative precision.
inline double reg_inc_beta(double x, double one_minus_x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw DomainError("reg_inc_beta: shape parameters must be finite and positive");
  }
  if (!(x >= 0.0 && x <= 1.0) || !(one_minus_x >= 0.0 && one_minus_x <= 1.0)) {
    throw DomainError("reg_inc_beta: x must lie in [0, 1]");
  }
  if (x == 0.0) return 0.0;
  if (one_minus_x == 0.0) return 1.0;
  if (x > a / (a + b)) {
    return 1.0 - detail::inc_beta_direct(one_minus_x, x, b, a);
  }
  return detail::inc_beta_direct(x, one_minus_x, a, b);
}

inline double reg_inc_beta(double x, double a, double b) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("reg_inc_beta: x must lie in [0, 1]");
  return reg_inc_beta(x, 1.0 - x, a, b);
}

/// Natural log of the Euler integral behind Appell F1,
///   E = int_0^1 t^(a-1) (1-t)^(c-a-1) (1-xt)^(-b1) (1-yt)^(-b2) dt
///     = B(a, c-a) F1(a; b1, b2; c; x, y),
/// for c > a > 0 and x, y <= 0.
///
/// Under t = sin^2(theta) the (1-t)^(-1/2) endpoint factor of the c - a = 1/2
/// case becomes a constant and the t^(a-1) end softens. The integrand is
/// rescaled by its largest sampled value, so results far outside the double
/// range still come back as finite logarithms. abs_floor is in F1 units.
inline double appell_euler_integral_log(double a, double b1, double b2, double c, double x, double y,
                                        const Accuracy& acc = {}) {
  acc.validate();
  if (!std::isfinite(a) || !std::isfinite(b1) || !std::isfinite(b2) || !std::isfinite(c) ||
      !std::isfinite(x) || !std::isfinite(y)) {
    throw DomainError("appell_f1: arguments must be finite");
  }
  if (!(a > 0.0)) throw DomainError("appell_f1: require a > 0");
  if (!(c > a)) throw DomainError("appell_f1: require c > a");
  if (x > 0.0 || y > 0.0) throw DomainError("appell_f1: require x <= 0 and y <= 0");
  const double log_beta_ac = log_beta(a, c - a);
  if (x == 0.0 && y == 0.0) return log_beta_ac;

  const double sin_power = 2.0 * a - 1.0;
  const double cos_power = 2.0 * (c - a) - 1.0;
  auto log_integrand = [=](double theta) {
    const double s = std::sin(theta);
    const double s2 = s * s;
    double log_v = std::numbers::ln2;
    if (sin_power != 0.0) log_v += sin_power * std::log(s);
    if (cos_power != 0.0) log_v += cos_power * std::log(std::sin(std::numbers::pi / 2.0 - theta));
    if (b1 != 0.0 && x != 0.0) log_v -= b1 * std::log1p(-x * s2);
    if (b2 != 0.0 && y != 0.0) log_v -= b2 * std::log1p(-y * s2);
    return log_v;
  };

  double shift = -std::numeric_limits<double>::infinity();
  for (int k = 1; k < 4; ++k) {
    shift = std::max(shift, log_integrand(std::numbers::pi / 2.0 * k / 4.0));
  }

  QuadratureSpec spec;
  spec.rel_tol = std::max(acc.rel_tol, 1e-14);
  const double floor_scaled = std::exp(std::log(acc.abs_floor) + log_beta_ac - shift);
  spec.abs_tol = std::isfinite(floor_scaled) ? floor_scaled : 0.0;
  spec.max_subdivisions = 4000;
  spec.infinite_map = InfiniteMap::none;

  // Seed a breakpoint where the larger of the (1 - x t), (1 - y t) factors
  // turns over, at t = 1 / (1 + max(|x|, |y|)), when that is well inside.
  const double widest = std::max(-x, -y);
  const double knee = std::asin(std::sqrt(1.0 / (1.0 + widest)));
  std::array<double, 4> points{0.0, knee, std::numbers::pi / 2.0, 0.0};
  std::span<const double> breaks(points.data(), 3);
  if (!(knee > 1e-3 && knee < std::numbers::pi / 6.0)) {
    points[1] = std::numbers::pi / 2.0;
    breaks = breaks.first(2);
  }
  auto r = integrate_finite([&](double theta) { return std::exp(log_integrand(theta) - shift); }, breaks, spec);
  if (!r.converged || !(r.value > 0.0) || !std::isfinite(r.value)) {
    // Slow path for sharply peaked integrands: locate the peak on a log grid,
    // refine it, and split there.
    constexpr int kGrid = 240;
    double peak = std::numbers::pi / 4.0;
    shift = log_integrand(peak);
    for (int k = 0; k <= kGrid; ++k) {
      const double theta = std::numbers::pi / 2.0 * std::pow(10.0, -15.0 * (1.0 - static_cast<double>(k) / kGrid));
      const double v = log_integrand(theta);
      if (v > shift) {
        shift = v;
        peak = theta;
      }
    }
    double lo = peak * std::pow(10.0, -15.0 / kGrid);
    double hi = std::min(peak * std::pow(10.0, 15.0 / kGrid), std::numbers::pi / 2.0);
    for (int it = 0; it < 100; ++it) {
      const double m1 = lo + (hi - lo) / 3.0;
      const double m2 = hi - (hi - lo) / 3.0;
      if (log_integrand(m1) < log_integrand(m2)) {
        lo = m1;
      } else {
        hi = m2;
      }
    }
    peak = 0.5 * (lo + hi);
    shift = std::max(shift, log_integrand(peak));
    points = {0.0, peak, std::numbers::pi / 2.0, 0.0};
    breaks = std::span<const double>(points.data(), peak > 0.0 && peak < std::numbers::pi / 2.0 ? 3 : 2);
    if (breaks.size() == 2) points[1] = std::numbers::pi / 2.0;
    spec.abs_tol = 0.0;
    r = integrate_finite([&](double theta) { return std::exp(log_integrand(theta) - shift); }, breaks, spec);
  }
  const double rel_err = r.error_estimate / std::abs(r.value);
  if (!r.converged || !(r.value > 0.0) || !std::isfinite(r.value)) {
    throw ConvergenceError("appell_f1: quadrature did not converge", rel_err);
  }
  return std::log(r.value) + shift;
}

/// Natural log of Appell F1(a; b1, b2; c; x, y) for c > a > 0 and x, y <= 0.
inline double appell_f1_log(double a, double b1, double b2, double c, double x, double y,
                            const Accuracy& acc = {}) {
  const double log_e = appell_euler_integral_log(a, b1, b2, c, x, y, acc);
  return log_e - log_beta(a, c - a);
}

/// Appell F1(a; b1, b2; c; x, y) for c > a > 0 and x, y <= 0; see appell_f1_log.
inline double appell_f1(double a, double b1, double b2, double c, double x, double y,
                        const Accuracy& acc = {}) {
  return std::exp(appell_f1_log(a, b1, b2, c, x, y, acc));
}

}  // namespace nakaber
