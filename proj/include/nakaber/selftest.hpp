#pragma once

// Built-in invariant checks, grouped so they can be run selectively from the
// command line. Every check compares against an independent quadrature or an
// analytic value and records the worst relative error it saw.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "nakaber/aber.hpp"
#include "nakaber/channel.hpp"
#include "nakaber/quad.hpp"
#include "nakaber/specfun.hpp"

namespace nakaber {

/// Worst-case error over a family of checks against a fixed tolerance.
class Tally {
 public:
  explicit Tally(double tol) : tol_(tol) {}

  void record(double err, const std::string& where) {
    ++checks_;
    if (!(err <= tol_)) ++failures_;  // NaN fails
    const double e = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
    if (checks_ == 1 || e > worst_) {
      worst_ = e;
      worst_at_ = where;
    }
  }

  void require(bool ok, const std::string& where) { record(ok ? 0.0 : std::numeric_limits<double>::infinity(), where); }

  double tol() const { return tol_; }
  int checks() const { return checks_; }
  int failures() const { return failures_; }
  double worst() const { return worst_; }
  const std::string& worst_at() const { return worst_at_; }
  bool passed() const { return failures_ == 0 && checks_ > 0; }

 private:
  double tol_;
  int checks_ = 0;
  int failures_ = 0;
  double worst_ = 0.0;
  std::string worst_at_;
};

inline double relative_error(double value, double reference) {
  if (reference == 0.0) return std::abs(value);
  return std::abs(value - reference) / std::abs(reference);
}

inline std::string describe_point(double m, double snr_db, int order) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "m=%g snr=%g dB M=%d", m, snr_db, order);
  return buf;
}

// Shared grids and oracles ---------------------------------------------------

inline const std::vector<double> kGridM = {0.6, 1.0, 2.5, 4.1};
inline const std::vector<double> kGridSnrDb = {-5.0, 0.0, 10.0, 20.0, 30.0};
inline const std::vector<int> kGridOrders = {4, 16, 256, 4096};

/// Tight settings for reference quadratures.
inline QuadratureSpec reference_quadrature() {
  QuadratureSpec s;
  s.rel_tol = 1e-13;
  s.max_subdivisions = 5000;
  return s;
}

/// Q(z) by Craig's finite-range integral (1/pi) int_0^{pi/2} exp(-z^2 / (2 sin^2 t)) dt.
inline double craig_q(double z) {
  const auto r = integrate_finite(
      [z](double t) {
        const double s = std::sin(t);
        return std::exp(-z * z / (2.0 * s * s));
      },
      0.0, std::numbers::pi / 2.0, reference_quadrature());
  return r.value / std::numbers::pi;
}

/// E[Q(sqrt(2 alpha snr))] by quadrature over the fading density.
inline QuadratureResult quadrature_avg_q(const ChannelParams& ch, double alpha) {
  return average_over_fading(
      ch, [alpha](double snr) { return gauss_q(std::sqrt(2.0 * alpha * snr)); }, reference_quadrature());
}

/// E[Q^2(sqrt(2 alpha snr))] by quadrature over the fading density.
inline QuadratureResult quadrature_avg_q2(const ChannelParams& ch, double alpha) {
  return average_over_fading(
      ch,
      [alpha](double snr) {
        const double q = gauss_q(std::sqrt(2.0 * alpha * snr));
        return q * q;
      },
      reference_quadrature());
}

/// Relative error of the incomplete-beta form of E[Q] at one grid point.
inline double lemma2_error(double m, double snr_db, int order) {
  const ChannelParams ch(m, db_to_linear(snr_db));
  const Modulation mod(order);
  const auto q = quadrature_avg_q(ch, mod.c1());
  if (!q.converged) return std::numeric_limits<double>::infinity();
  return relative_error(lemma2_avg_q(ch, mod.c1()), q.value);
}

/// Relative error of I/4 - R2 against E[Q^2] at one grid point.
inline double lemma3_error(double m, double snr_db, int order) {
  const ChannelParams ch(m, db_to_linear(snr_db));
  const Modulation mod(order);
  const auto q2 = quadrature_avg_q2(ch, mod.c1());
  if (!q2.converged) return std::numeric_limits<double>::infinity();
  const double closed = 0.25 * averaged_q_beta(ch, mod.c1()) - r2_quadrature(ch, mod.c1(), reference_quadrature());
  return relative_error(closed, q2.value);
}

// Groups ---------------------------------------------------------------------

struct GroupReport {
  std::string name;
  bool passed = false;
  int checks = 0;
  int failures = 0;
  double worst = 0.0;
  double tol = 0.0;
  std::string worst_at;
};

struct SelftestGroup {
  std::string name;
  std::string summary;
  std::function<std::vector<Tally>()> run;
};

namespace detail {

inline std::vector<Tally> group_lemma1() {
  Tally t(1e-9);
  for (double z : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    t.record(relative_error(gauss_q(z), craig_q(z)), "z=" + std::to_string(z));
  }
  return {t};
}

inline std::vector<Tally> group_gauss_q() {
  Tally exact(1e-15);
  exact.record(std::abs(gauss_q(0.0) - 0.5), "Q(0)");
  Tally sym(2e-16);
  Tally mono(0.0);
  double prev = 1.0;
  for (int i = -80; i <= 80; ++i) {
    const double z = 0.1 * i;
    sym.record(std::abs(gauss_q(z) + gauss_q(-z) - 1.0), "z=" + std::to_string(z));
    const double q = gauss_q(z);
    mono.require(q <= prev && q >= 0.0 && q <= 1.0, "z=" + std::to_string(z));
    prev = q;
  }
  return {exact, sym, mono};
}

inline std::vector<Tally> group_reflection() {
  Tally t(1e-12);
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> log_shape(std::log(0.05), std::log(50.0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 400; ++i) {
    const double a = std::exp(log_shape(rng));
    const double b = std::exp(log_shape(rng));
    const double x = unit(rng);
    const double sum = reg_inc_beta(x, 1.0 - x, a, b) + reg_inc_beta(1.0 - x, x, b, a);
    char where[96];
    std::snprintf(where, sizeof where, "x=%.6g a=%.6g b=%.6g", x, a, b);
    t.record(std::abs(sum - 1.0), where);
  }
  return {t};
}

inline std::vector<Tally> group_appell() {
  Tally t(1e-10);
  t.record(relative_error(appell_f1(1.0, 1.0, 1.0, 2.0, -1.0, -2.0), std::log(1.5)), "F1(1,1,1;2;-1,-2)");
  // b2 = 0 reduces to 2F1(1,1;2;x) = -ln(1-x)/x.
  for (double x : {-0.5, -1.0, -4.0, -30.0}) {
    t.record(relative_error(appell_f1(1.0, 1.0, 0.0, 2.0, x, -3.0), -std::log1p(-x) / x),
             "F1(1,1,0;2;" + std::to_string(x) + ",-3)");
  }
  // x = y collapses to 2F1(a, b1 + b2; c; x).
  t.record(relative_error(appell_f1(1.0, 0.25, 0.75, 2.0, -2.0, -2.0), std::log(3.0) / 2.0),
           "F1(1,.25,.75;2;-2,-2)");
  return {t};
}

inline std::vector<Tally> group_pdf_mgf() {
  Tally norm(1e-10);
  Tally mean(1e-10);
  Tally mgf_t(1e-10);
  for (double m : kGridM) {
    for (double snr_db : {-5.0, 10.0, 30.0}) {
      const ChannelParams ch(m, db_to_linear(snr_db));
      const auto where = describe_point(m, snr_db, 0);
      const auto spec = reference_quadrature();
      norm.record(std::abs(average_over_fading(ch, [](double) { return 1.0; }, spec).value - 1.0), where);
      mean.record(relative_error(average_over_fading(ch, [](double g) { return g; }, spec).value, ch.mean_snr()),
                  where);
      const double p = -1.7 / ch.mean_snr();
      const double ref = average_over_fading(ch, [p](double g) { return std::exp(p * g); }, spec).value;
      mgf_t.record(relative_error(mgf(ch, p), ref), where);
    }
  }
  return {norm, mean, mgf_t};
}

inline std::vector<Tally> group_lemma2() {
  Tally t(1e-8);
  for (double m : kGridM)
    for (double s : kGridSnrDb)
      for (int order : kGridOrders) t.record(lemma2_error(m, s, order), describe_point(m, s, order));
  return {t};
}

inline std::vector<Tally> group_lemma3() {
  Tally t(1e-7);
  for (double m : kGridM)
    for (double s : kGridSnrDb)
      for (int order : kGridOrders) t.record(lemma3_error(m, s, order), describe_point(m, s, order));
  return {t};
}

inline std::vector<Tally> group_sandwich() {
  Tally t(0.0);
  for (double m : kGridM) {
    for (double s : kGridSnrDb) {
      for (int order : kGridOrders) {
        const ChannelParams ch(m, db_to_linear(s));
        const Modulation mod(order);
        const double eq = quadrature_avg_q(ch, mod.c1()).value;
        const double eq2 = quadrature_avg_q2(ch, mod.c1()).value;
        const double r2 = r2_quadrature(ch, mod.c1());
        const double quarter_i = 0.25 * averaged_q_beta(ch, mod.c1());
        t.require(eq2 > 0.0 && eq2 <= eq && eq <= 0.5 && r2 >= 0.0 && r2 <= quarter_i, describe_point(m, s, order));
      }
    }
  }
  return {t};
}

inline std::vector<Tally> group_termination() {
  Tally terms(0.0);
  Tally value(1e-8);
  for (int mi : {1, 2, 3}) {
    const double m = mi;
    for (double s : kGridSnrDb) {
      const ChannelParams ch(m, db_to_linear(s));
      const Modulation mod(256);
      const auto series = r2_series(ch, mod.c1(), TruncationPolicy::fixed(10));
      const auto where = describe_point(m, s, 256);
      terms.require(series.terms_used == mi, where);
      value.record(relative_error(series.value, r2_quadrature(ch, mod.c1(), reference_quadrature())), where);
    }
  }
  return {terms, value};
}

/// Adding series terms never moves R2 away from the quadrature value, and the
/// adaptive series reaches it.
inline std::vector<Tally> group_truncation() {
  Tally mono(0.0);
  Tally adaptive(1e-8);
  for (double m : {0.6, 4.1}) {
    for (double s : {0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0}) {
      const ChannelParams ch(m, db_to_linear(s));
      const Modulation mod(256);
      const double ref = r2_quadrature(ch, mod.c1(), reference_quadrature());
      double prev = std::numeric_limits<double>::infinity();
      const auto where = describe_point(m, s, 256);
      for (int n : {0, 1, 2, 3, 5}) {
        const double e = std::abs(r2_series(ch, mod.c1(), TruncationPolicy::fixed(n)).value - ref);
        mono.require(e <= prev, where + " N=" + std::to_string(n));
        prev = e;
      }
      adaptive.record(relative_error(r2_series(ch, mod.c1(), TruncationPolicy::adaptive(1e-12)).value, ref), where);
    }
  }
  return {mono, adaptive};
}

inline std::vector<Tally> group_closed_forms() {
  Tally lu(1e-8);
  Tally expq(1e-9);
  for (double m : kGridM) {
    for (double s : kGridSnrDb) {
      for (int order : kGridOrders) {
        const ChannelParams ch(m, db_to_linear(s));
        const Modulation mod(order);
        const auto where = describe_point(m, s, order);
        lu.record(relative_error(aber_lu_closed(ch, mod),
                                 aber_oracle(ch, mod, BerKernel::lu(), reference_quadrature()).value),
                  where);
        const auto v = QApproxVariant::chiani();
        expq.record(relative_error(aber_expq_closed(ch, mod, v),
                                   aber_oracle(ch, mod, BerKernel::expq(v), reference_quadrature()).value),
                    where);
      }
    }
  }
  return {lu, expq};
}

inline std::vector<Tally> group_limits() {
  Tally t(1e-4);
  const ChannelParams ch(1.0, 1e-10);
  const Modulation mod(4);
  t.record(std::abs(aber_closed(ch, mod, TruncationPolicy::fixed(0)) - 0.4375), "closed");
  t.record(std::abs(aber_oracle(ch, mod).value - 0.4375), "oracle");
  t.record(std::abs(aber_lu_closed(ch, mod) - 0.5), "lu");
  return {t};
}

inline std::vector<Tally> group_monotonicity() {
  Tally t(0.0);
  for (double m : kGridM) {
    for (int order : {4, 256}) {
      const Modulation mod(order);
      double prev = 1.0;
      for (double s = -5.0; s <= 30.0; s += 0.5) {
        const double v = aber_closed(ChannelParams(m, db_to_linear(s)), mod, TruncationPolicy::fixed(5));
        t.require(v < prev, describe_point(m, s, order));
        prev = v;
      }
    }
  }
  return {t};
}

}  // namespace detail

inline std::vector<SelftestGroup> selftest_groups() {
  return {
      {"lemma1", "Q(z) against its finite-range integral form", detail::group_lemma1},
      {"gauss-q", "Q(0), symmetry and monotonicity", detail::group_gauss_q},
      {"reflection", "I_x(a,b) + I_{1-x}(b,a) = 1 on a random grid", detail::group_reflection},
      {"appell", "Appell F1 reductions with elementary closed forms", detail::group_appell},
      {"pdf-mgf", "fading density normalization, mean and MGF", detail::group_pdf_mgf},
      {"lemma2", "incomplete-beta form of E[Q] against quadrature", detail::group_lemma2},
      {"lemma3", "I/4 - R2 against quadrature of E[Q^2]", detail::group_lemma3},
      {"sandwich", "0 < E[Q^2] <= E[Q] <= 1/2 and 0 <= R2 <= I/4", detail::group_sandwich},
      {"termination", "integer-m series stops after m terms and is exact", detail::group_termination},
      {"truncation", "series error shrinks with N; adaptive series converges", detail::group_truncation},
      {"closed-forms", "sum-of-Q and exponential-Q closed forms against quadrature", detail::group_closed_forms},
      {"limits", "low-SNR limits of the closed forms and the oracle", detail::group_limits},
      {"monotonicity", "closed-form ABER strictly decreases with SNR", detail::group_monotonicity},
  };
}

inline GroupReport run_group(const SelftestGroup& g) {
  GroupReport r;
  r.name = g.name;
  r.passed = true;
  double worst_ratio = -1.0;
  for (const auto& t : g.run()) {
    r.checks += t.checks();
    r.failures += t.failures();
    r.passed = r.passed && t.passed();
    // Report the tally closest to (or furthest past) its tolerance.
    const double ratio = t.tol() > 0.0 ? t.worst() / t.tol() : (t.failures() > 0 ? 1e300 : 0.0);
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      r.worst = t.worst();
      r.tol = t.tol();
      r.worst_at = t.worst_at();
    }
  }
  return r;
}

}  // namespace nakaber
