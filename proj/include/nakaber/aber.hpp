#pragma once

// Average BER of square M-QAM over Nakagami-m fading.
//
// Closed form:
//   ABER = 4 c0 E[Q] - 4 c0^2 E[Q^2]
//        = (2 c0 - c0^2) I_{m/(m + c1 g)}(m, 1/2) + 4 c0^2 R2(c1, g, m)
// with E[Q] = I/2 and E[Q^2] = I/4 - R2, where R2 is available both as an
// Appell-F1 series and as a one-dimensional integral.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "nakaber/channel.hpp"
#include "nakaber/quad.hpp"
#include "nakaber/specfun.hpp"

namespace nakaber {

struct TruncationPolicy {
  enum class Mode { fixed_terms, adaptive };

  static constexpr int kMaxTerms = 200;

  Mode mode = Mode::fixed_terms;
  int n_max = 0;
  double term_tol = 1e-12;

  /// Sum terms n = 0..n_max.
  static TruncationPolicy fixed(int n_max) {
    TruncationPolicy p{Mode::fixed_terms, n_max, 1e-12};
    p.validate();
    return p;
  }

  /// Stop once |term| < tol * |partial sum| (twice in a row), at most 200 terms.
  static TruncationPolicy adaptive(double tol) {
    TruncationPolicy p{Mode::adaptive, kMaxTerms, tol};
    p.validate();
    return p;
  }

  void validate() const {
    if (n_max < 0 || n_max > kMaxTerms) throw DomainError("TruncationPolicy: n_max must lie in [0, 200]");
    if (!(term_tol >= 1e-16 && term_tol <= 1e-4)) {
      throw DomainError("TruncationPolicy: term_tol must lie in [1e-16, 1e-4]");
    }
  }
};

/// I_{m/(m + alpha g)}(m, 1/2), with the complement kept exact for g -> 0.
inline double averaged_q_beta(const ChannelParams& ch, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("alpha must be positive");
  const double load = alpha * ch.mean_snr();
  const double denom = ch.m() + load;
  return reg_inc_beta(ch.m() / denom, load / denom, ch.m(), 0.5);
}

/// E[Q(sqrt(2 alpha snr))] = I_{m/(m + alpha g)}(m, 1/2) / 2.
inline double lemma2_avg_q(const ChannelParams& ch, double alpha) {
  return 0.5 * averaged_q_beta(ch, alpha);
}

/// R2 by direct quadrature of its defining integral over p in [0, inf):
///   R2 = b^m / (4 pi) int I_{1/(b+2+p)}(1/2, m) / (sqrt(p) (1+p) (b+1+p)^m) dp,
/// b = m / (alpha g), evaluated under p = u^2 with (b/(b+1+p))^m in log form.
inline QuadratureResult r2_quadrature_result(const ChannelParams& ch, double alpha,
                                             const QuadratureSpec& spec = {}) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("r2_quadrature: alpha must be positive");
  const double m = ch.m();
  const double b = ch.inverse_load(alpha);
  auto integrand = [=](double u) {
    const double p = u * u;
    const double top = b + 1.0 + p;
    const double whole = top + 1.0;
    const double ib = reg_inc_beta(1.0 / whole, top / whole, 0.5, m);
    const double ratio = std::exp(-m * std::log1p((1.0 + p) / b));
    return 2.0 * ib * ratio / (1.0 + p);
  };
  auto r = integrate_semi_infinite(integrand, 0.0, spec);
  const double scale = 1.0 / (4.0 * std::numbers::pi);
  r.value *= scale;
  r.error_estimate *= scale;
  return r;
}

inline double r2_quadrature(const ChannelParams& ch, double alpha, const QuadratureSpec& spec = {}) {
  const auto r = r2_quadrature_result(ch, alpha, spec);
  if (!r.converged) {
    throw ConvergenceError("r2_quadrature: quadrature did not converge",
                           r.error_estimate / std::abs(r.value));
  }
  return r.value;
}

struct SeriesResult {
  double value = 0.0;
  int terms_used = 0;
  /// Adaptive mode only: the series did not settle within 200 terms and the
  /// quadrature form was returned instead.
  bool fell_back = false;
};

/// One term of the R2 series,
///   b^m/(4 pi) (1-m)_n B(n+m+1, 1/2) / (n! (n+1/2) B(1/2, m))
///     * F1(n+m+1; m, n+1/2; m+n+3/2; -b, -(1+b)),
/// given the ratio (1-m)_n / n!, ln B(1/2, m) and the log of the Euler
/// integral B(n+m+1, 1/2) F1. Magnitudes are combined in log space.
inline double r2_series_term_from_log(double m, double b, int n, double poch_over_factorial,
                                      double log_beta_half_m, double log_euler) {
  const double dn = static_cast<double>(n);
  const double log_mag = m * std::log(b) - std::log(4.0 * std::numbers::pi) - log_beta_half_m -
                         std::log(dn + 0.5) + std::log(std::abs(poch_over_factorial)) + log_euler;
  const double sign = poch_over_factorial < 0.0 ? -1.0 : 1.0;
  return sign * std::exp(log_mag);
}

inline double r2_series_term(double m, double b, int n, double poch_over_factorial, double log_beta_half_m,
                             const Accuracy& acc) {
  if (poch_over_factorial == 0.0) return 0.0;
  const double dn = static_cast<double>(n);
  const double a = dn + m + 1.0;
  double log_euler = 0.0;
  try {
    log_euler = appell_euler_integral_log(a, m, dn + 0.5, a + 0.5, -b, -(1.0 + b), acc);
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(std::string("r2_series: ") + e.what(), e.achieved_error(), n);
  }
  return r2_series_term_from_log(m, b, n, poch_over_factorial, log_beta_half_m, log_euler);
}

namespace detail {

/// Logs of the Euler integrals behind terms 0 .. count-1 of the R2 series,
/// from one adaptive pass over shared nodes. Under t = sin^2(theta) term n is
/// the n = 0 integrand times (s^2 / (1 + (1+b) s^2))^n, so one sin, log and
/// two log1p per node serve every term. Empty when the pass fails; callers
/// then fall back to per-term integration.
inline std::vector<double> r2_euler_integrals_log(double m, double b, int count, const Accuracy& acc) {
  acc.validate();
  const auto k = static_cast<std::size_t>(count);
  auto base_and_ratio = [=](double theta, double& base, double& ratio) {
    const double s = std::sin(theta);
    const double s2 = s * s;
    const double log_s = std::log(s);
    const double log_wide = std::log1p((1.0 + b) * s2);
    base = std::numbers::ln2 + (2.0 * m + 1.0) * log_s - m * std::log1p(b * s2) - 0.5 * log_wide;
    ratio = 2.0 * log_s - log_wide;
  };

  std::vector<double> shift(k, -std::numeric_limits<double>::infinity());
  for (int j = 1; j < 4; ++j) {
    double base = 0.0;
    double ratio = 0.0;
    base_and_ratio(std::numbers::pi / 2.0 * j / 4.0, base, ratio);
    for (std::size_t n = 0; n < k; ++n) shift[n] = std::max(shift[n], base + static_cast<double>(n) * ratio);
  }

  QuadratureSpec spec;
  spec.rel_tol = std::max(acc.rel_tol, 1e-14);
  spec.max_subdivisions = 4000;
  spec.infinite_map = InfiniteMap::none;
  std::vector<double> floors(k);
  for (std::size_t n = 0; n < k; ++n) {
    const double a = static_cast<double>(n) + m + 1.0;
    const double f = std::exp(std::log(acc.abs_floor) + log_beta(a, 0.5) - shift[n]);
    floors[n] = std::isfinite(f) ? f : 0.0;
  }

  const double knee = std::asin(std::sqrt(1.0 / (2.0 + b)));
  std::array<double, 3> points{0.0, knee, std::numbers::pi / 2.0};
  std::span<const double> breaks(points);
  if (!(knee > 1e-3 && knee < std::numbers::pi / 6.0)) {
    points[1] = std::numbers::pi / 2.0;
    breaks = breaks.first(2);
  }

  const auto r = integrate_finite_many(
      [&](double theta, double* out) {
        double base = 0.0;
        double ratio = 0.0;
        base_and_ratio(theta, base, ratio);
        for (std::size_t n = 0; n < k; ++n) out[n] = std::exp(base + static_cast<double>(n) * ratio - shift[n]);
      },
      k, breaks, spec, floors);
  if (!r.converged) return {};
  std::vector<double> logs(k);
  for (std::size_t n = 0; n < k; ++n) {
    if (!(r.value[n] > 0.0) || !std::isfinite(r.value[n])) return {};
    logs[n] = std::log(r.value[n]) + shift[n];
  }
  return logs;
}

}  // namespace detail

/// Truncated Appell-F1 series for R2.
///
/// For integer m the coefficient (1-m)_n vanishes from n = m on, so at most
/// m terms are ever summed.
inline SeriesResult r2_series(const ChannelParams& ch, double alpha, const TruncationPolicy& trunc,
                              const Accuracy& acc = {}) {
  trunc.validate();
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("r2_series: alpha must be positive");
  const double m = ch.m();
  const double b = ch.inverse_load(alpha);
  const double log_beta_half_m = log_beta(0.5, m);
  const bool adaptive = trunc.mode == TruncationPolicy::Mode::adaptive;
  const int last = adaptive ? TruncationPolicy::kMaxTerms - 1 : trunc.n_max;

  SeriesResult out;
  if (!adaptive) {
    // Fixed truncation: all term integrals in one pass.
    int count = 0;
    while (count <= last && pochhammer(1.0 - m, static_cast<unsigned>(count)) != 0.0) ++count;
    const auto logs = detail::r2_euler_integrals_log(m, b, count, acc);
    if (!logs.empty()) {
      double ratio = 1.0;  // (1-m)_n / n!
      for (int n = 0; n < count; ++n) {
        if (n > 0) ratio *= (static_cast<double>(n) - m) / static_cast<double>(n);
        out.value += r2_series_term_from_log(m, b, n, ratio, log_beta_half_m, logs[static_cast<std::size_t>(n)]);
        out.terms_used = n + 1;
      }
      return out;
    }
  }

  double ratio = 1.0;  // (1-m)_n / n!
  int small_in_a_row = 0;
  for (int n = 0; n <= last; ++n) {
    if (n > 0) ratio *= (static_cast<double>(n) - m) / static_cast<double>(n);
    if (pochhammer(1.0 - m, static_cast<unsigned>(n)) == 0.0) return out;
    const double term = r2_series_term(m, b, n, ratio, log_beta_half_m, acc);
    out.value += term;
    out.terms_used = n + 1;
    if (adaptive) {
      small_in_a_row = std::abs(term) < trunc.term_tol * std::abs(out.value) ? small_in_a_row + 1 : 0;
      if (small_in_a_row >= 2) return out;
    }
  }
  if (adaptive) {
    out.value = r2_quadrature(ch, alpha);
    out.fell_back = true;
  }
  return out;
}

struct ClosedFormResult {
  double value = 0.0;
  int terms_used = 0;
  bool fell_back = false;
};

/// Closed-form ABER with R2 from the truncated series:
/// (2 c0 - c0^2) I + 4 c0^2 R2.
inline ClosedFormResult aber_closed_detail(const ChannelParams& ch, const Modulation& mod,
                                           const TruncationPolicy& trunc, const Accuracy& acc = {}) {
  const double c0 = mod.c0();
  const double ib = averaged_q_beta(ch, mod.c1());
  const auto r2 = r2_series(ch, mod.c1(), trunc, acc);
  return {(2.0 * c0 - c0 * c0) * ib + 4.0 * c0 * c0 * r2.value, r2.terms_used, r2.fell_back};
}

inline double aber_closed(const ChannelParams& ch, const Modulation& mod, const TruncationPolicy& trunc,
                          const Accuracy& acc = {}) {
  return aber_closed_detail(ch, mod, trunc, acc).value;
}

/// Diagnostic: the coefficient layout c0 I + 4 c0^2 R2. It disagrees with
/// the direct integral whenever c0 != 2 c0 - c0^2 (every M > 4 as g -> 0)
/// and is kept only to demonstrate that.
inline double aber_closed_printed_form(const ChannelParams& ch, const Modulation& mod,
                                       const TruncationPolicy& trunc, const Accuracy& acc = {}) {
  const double c0 = mod.c0();
  const double ib = averaged_q_beta(ch, mod.c1());
  return c0 * ib + 4.0 * c0 * c0 * r2_series(ch, mod.c1(), trunc, acc).value;
}

/// Average of the sum-of-Q approximation:
/// 2 c0 sum_{j=1}^{sqrt(M)/2} I_{m/(m + c1 (2j-1)^2 g)}(m, 1/2).
inline double aber_lu_closed(const ChannelParams& ch, const Modulation& mod) {
  double sum = 0.0;
  for (int j = 1; j <= mod.lu_terms(); ++j) {
    const double k = static_cast<double>(2 * j - 1);
    sum += averaged_q_beta(ch, mod.c1() * k * k);
  }
  return 2.0 * mod.c0() * sum;
}

/// Average of the exponential-Q BER via the MGF:
/// 4 c0 sum_i w_i M(-2 c1 r_i) - 4 c0^2 sum_ij w_i w_j M(-2 c1 (r_i + r_j)).
inline double aber_expq_closed(const ChannelParams& ch, const Modulation& mod, const QApproxVariant& v) {
  if (v.tag == QApproxVariant::Tag::exact || v.terms.empty()) {
    throw DomainError("aber_expq_closed: requires an exponential-sum Q approximation");
  }
  const double c0 = mod.c0();
  const double c1 = mod.c1();
  double linear = 0.0;
  double square = 0.0;
  for (const auto& ti : v.terms) {
    linear += ti.weight * mgf(ch, -2.0 * c1 * ti.rate);
    for (const auto& tj : v.terms) {
      square += ti.weight * tj.weight * mgf(ch, -2.0 * c1 * (ti.rate + tj.rate));
    }
  }
  return 4.0 * c0 * linear - 4.0 * c0 * c0 * square;
}

/// Instantaneous BER expression averaged by the oracle.
struct BerKernel {
  enum class Kind { exact, lu, expq };

  Kind kind = Kind::exact;
  QApproxVariant variant;

  static BerKernel exact() { return {}; }
  static BerKernel lu() { return {Kind::lu, {}}; }
  static BerKernel expq(QApproxVariant v) { return {Kind::expq, std::move(v)}; }

  double operator()(const Modulation& mod, double snr) const {
    switch (kind) {
      case Kind::exact: return ber_exact(mod, snr);
      case Kind::lu: return ber_lu_approx(mod, snr);
      case Kind::expq: return ber_expq(mod, variant, snr);
    }
    return std::numeric_limits<double>::quiet_NaN();
  }
};

/// ABER by adaptive quadrature of int_0^inf BER(snr) pdf(snr) d snr.
/// Non-convergence is reported through the result, never hidden.
inline QuadratureResult aber_oracle(const ChannelParams& ch, const Modulation& mod,
                                    const BerKernel& kernel = BerKernel::exact(),
                                    const QuadratureSpec& spec = {}) {
  return average_over_fading(ch, [&](double snr) { return kernel(mod, snr); }, spec);
}

/// 10 lg |(reference - candidate) / reference|, -inf when they coincide.
inline double discrepancy(double reference, double candidate) {
  if (!(reference > 0.0)) throw DomainError("discrepancy: reference must be positive");
  if (candidate == reference) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(std::abs((reference - candidate) / reference));
}

// Method dispatch ------------------------------------------------------------

struct ClosedMethod {
  TruncationPolicy truncation;
};
struct LuMethod {};
struct OracleMethod {
  QuadratureSpec spec;
};
struct ExpqMethod {
  QApproxVariant variant = QApproxVariant::chiani();
};

using AberMethod = std::variant<ClosedMethod, LuMethod, OracleMethod, ExpqMethod>;

inline std::string method_label(const AberMethod& method) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ClosedMethod>) {
          if (m.truncation.mode == TruncationPolicy::Mode::adaptive) return "closed_adaptive";
          return "closed_N" + std::to_string(m.truncation.n_max);
        } else if constexpr (std::is_same_v<T, LuMethod>) {
          return "lu";
        } else if constexpr (std::is_same_v<T, OracleMethod>) {
          return "oracle";
        } else {
          return "expq_" + m.variant.label();
        }
      },
      method);
}

struct MethodValue {
  double value = 0.0;
  int terms = 0;
  double error_estimate = 0.0;
  bool converged = true;
};

inline MethodValue evaluate(const AberMethod& method, const ChannelParams& ch, const Modulation& mod) {
  return std::visit(
      [&](const auto& m) -> MethodValue {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ClosedMethod>) {
          const auto r = aber_closed_detail(ch, mod, m.truncation);
          return {r.value, r.terms_used, 0.0, true};
        } else if constexpr (std::is_same_v<T, LuMethod>) {
          return {aber_lu_closed(ch, mod), 0, 0.0, true};
        } else if constexpr (std::is_same_v<T, OracleMethod>) {
          const auto r = aber_oracle(ch, mod, BerKernel::exact(), m.spec);
          return {r.value, 0, r.error_estimate, r.converged};
        } else {
          return {aber_expq_closed(ch, mod, m.variant), 0, 0.0, true};
        }
      },
      method);
}

}  // namespace nakaber
