#pragma once

// Deterministic adaptive quadrature.
//
// Globally adaptive bisection over 21-point Gauss-Kronrod panels (the
// QUADPACK qk21 pair). The panel with the largest error estimate is always
// split next, ties broken by creation order, so identical inputs give
// bit-identical results. Nodes never touch the panel endpoints, which makes
// the rule usable on integrands with integrable endpoint singularities.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace nakaber {

enum class InfiniteMap {
  none,      // finite intervals only
  rational,  // x = lo + t/(1-t)
  exp,       // x = lo - ln(1-t)
};

struct QuadratureSpec {
  double rel_tol = 1e-10;
  double abs_tol = 0.0;  // purely relative by default; tail probabilities can be tiny
  int max_subdivisions = 2000;
  InfiniteMap infinite_map = InfiniteMap::rational;

  void validate() const {
    if (!(rel_tol >= 1e-14 && rel_tol <= 1e-3)) {
      throw std::invalid_argument("QuadratureSpec: rel_tol must lie in [1e-14, 1e-3]");
    }
    if (!(abs_tol >= 0.0) || !std::isfinite(abs_tol)) {
      throw std::invalid_argument("QuadratureSpec: abs_tol must be finite and >= 0");
    }
    if (max_subdivisions < 10 || max_subdivisions > 10000) {
      throw std::invalid_argument("QuadratureSpec: max_subdivisions must lie in [10, 10000]");
    }
  }
};

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
};

namespace detail {

inline constexpr std::array<double, 11> kKronrodNodes = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};

inline constexpr std::array<double, 11> kKronrodWeights = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208067521044, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};

// Gauss weights for the odd-indexed Kronrod nodes (0.9739..., 0.8650..., ...).
inline constexpr std::array<double, 5> kGaussWeights = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

struct Panel {
  double lo;
  double hi;
  double value;
  double error;
  std::size_t id;
};

struct PanelOrder {
  bool operator()(const Panel& a, const Panel& b) const {
    if (a.error != b.error) return a.error < b.error;
    return a.id > b.id;
  }
};

struct PanelSum {
  double value;
  double error;
};

// GK21 value and QUADPACK error estimate from f at the center and at the
// node pairs center -/+ half * kKronrodNodes[j].
inline PanelSum kronrod21_reduce(double fc, const double* f1, const double* f2, double half) {
  double kronrod = fc * kKronrodWeights[10];
  double gauss = 0.0;
  double abs_sum = std::abs(kronrod);
  for (std::size_t j = 0; j < 10; ++j) {
    const double pair = f1[j] + f2[j];
    kronrod += kKronrodWeights[j] * pair;
    abs_sum += kKronrodWeights[j] * (std::abs(f1[j]) + std::abs(f2[j]));
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * pair;
  }

  const double mean = 0.5 * kronrod;
  double asc = kKronrodWeights[10] * std::abs(fc - mean);
  for (std::size_t j = 0; j < 10; ++j) {
    asc += kKronrodWeights[j] * (std::abs(f1[j] - mean) + std::abs(f2[j] - mean));
  }

  const double result = kronrod * half;
  const double res_abs = abs_sum * std::abs(half);
  const double res_asc = asc * std::abs(half);
  double err = std::abs((kronrod - gauss) * half);
  if (res_asc != 0.0 && err != 0.0) {
    err = res_asc * std::min(1.0, std::pow(200.0 * err / res_asc, 1.5));
  }
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (res_abs > std::numeric_limits<double>::min() / (50.0 * eps)) {
    err = std::max(err, 50.0 * eps * res_abs);
  }
  return {result, err};
}

template <typename F>
Panel kronrod21(F& f, double lo, double hi, std::size_t id, bool& finite) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double fc = f(center);
  std::array<double, 10> f1{};
  std::array<double, 10> f2{};
  for (std::size_t j = 0; j < 10; ++j) {
    const double dx = half * kKronrodNodes[j];
    f1[j] = f(center - dx);
    f2[j] = f(center + dx);
  }
  const auto sum = kronrod21_reduce(fc, f1.data(), f2.data(), half);
  finite = std::isfinite(sum.value) && std::isfinite(sum.error);
  return Panel{lo, hi, sum.value, sum.error, id};
}

// True when a panel is too narrow for its children's nodes to stay off the
// endpoints in floating point.
inline bool at_resolution(double lo, double hi) {
  const double mid = 0.5 * (lo + hi);
  const double scale = std::max(std::abs(lo), std::abs(hi));
  constexpr double kMinWidth = 4096.0 * std::numeric_limits<double>::epsilon();
  return !(hi - lo > kMinWidth * scale) || !(mid > lo && mid < hi);
}

}  // namespace detail

/// Adaptive integration of f over [points.front(), points.back()], starting
/// from one panel per gap between consecutive breakpoints.
///
/// Convergence is declared once the summed panel error estimates fall below
/// max(abs_tol, rel_tol * |value|). Running out of subdivisions or hitting a
/// non-finite integrand value returns the current state with converged=false.
template <typename F>
QuadratureResult integrate_finite(F&& f, std::span<const double> points, const QuadratureSpec& spec = {}) {
  spec.validate();
  if (points.size() < 2) throw std::invalid_argument("integrate_finite: need at least two points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i]) || (i > 0 && !(points[i - 1] < points[i]))) {
      throw std::invalid_argument("integrate_finite: breakpoints must be finite and increasing");
    }
  }

  std::vector<detail::Panel> heap;
  heap.reserve(points.size() + 32);  // most integrals finish within a few splits
  std::size_t next_id = 0;
  std::size_t evaluations = 0;
  bool finite = true;

  double total = 0.0;
  double total_err = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    bool ok = true;
    const auto panel = detail::kronrod21(f, points[i - 1], points[i], next_id++, ok);
    evaluations += 21;
    finite = finite && ok;
    total += panel.value;
    total_err += panel.error;
    heap.push_back(panel);
    std::push_heap(heap.begin(), heap.end(), detail::PanelOrder{});
  }
  auto target = [&] { return std::max(spec.abs_tol, spec.rel_tol * std::abs(total)); };

  int subdivisions = 0;
  while (finite && total_err > target() && subdivisions < spec.max_subdivisions) {
    std::pop_heap(heap.begin(), heap.end(), detail::PanelOrder{});
    const detail::Panel worst = heap.back();
    heap.pop_back();

    const double mid = 0.5 * (worst.lo + worst.hi);
    if (detail::at_resolution(worst.lo, worst.hi)) {
      // Child nodes would round onto the endpoints; nothing left to split.
      heap.push_back(worst);
      std::push_heap(heap.begin(), heap.end(), detail::PanelOrder{});
      break;
    }
    bool left_ok = true;
    bool right_ok = true;
    const auto left = detail::kronrod21(f, worst.lo, mid, next_id++, left_ok);
    const auto right = detail::kronrod21(f, mid, worst.hi, next_id++, right_ok);
    evaluations += 42;
    finite = left_ok && right_ok;

    heap.push_back(left);
    std::push_heap(heap.begin(), heap.end(), detail::PanelOrder{});
    heap.push_back(right);
    std::push_heap(heap.begin(), heap.end(), detail::PanelOrder{});
    ++subdivisions;

    // Re-sum from scratch in a fixed order to keep drift out of the totals.
    total = 0.0;
    total_err = 0.0;
    for (const auto& p : heap) {
      total += p.value;
      total_err += p.error;
    }
  }

  QuadratureResult out;
  out.value = total;
  out.error_estimate = total_err;
  out.evaluations = evaluations;
  out.converged = finite && total_err <= target();
  if (!finite) {
    out.value = std::numeric_limits<double>::quiet_NaN();
    out.error_estimate = std::numeric_limits<double>::infinity();
  }
  return out;
}

struct MultiQuadratureResult {
  std::vector<double> value;
  std::vector<double> error_estimate;
  std::size_t evaluations = 0;
  bool converged = false;
};

/// Adaptive integration of `count` integrands that share their nodes.
///
/// f(x, out) writes the integrand values at x to out[0 .. count). Component k
/// has converged once its summed error is below max(abs_tol[k], rel_tol *
/// |value_k|); abs_tol may be empty for a purely relative target. The panel
/// with the largest error relative to the first-pass targets is split next.
template <typename F>
MultiQuadratureResult integrate_finite_many(F&& f, std::size_t count, std::span<const double> points,
                                            const QuadratureSpec& spec = {},
                                            std::span<const double> abs_tol = {}) {
  spec.validate();
  if (count == 0) throw std::invalid_argument("integrate_finite_many: need at least one integrand");
  if (!abs_tol.empty() && abs_tol.size() != count) {
    throw std::invalid_argument("integrate_finite_many: abs_tol must be empty or have one entry per integrand");
  }
  if (points.size() < 2) throw std::invalid_argument("integrate_finite_many: need at least two points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i]) || (i > 0 && !(points[i - 1] < points[i]))) {
      throw std::invalid_argument("integrate_finite_many: breakpoints must be finite and increasing");
    }
  }

  // Panel k-values and errors live in flat slot-indexed storage.
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<double> values;
  std::vector<double> errors;
  std::vector<double> fx(21 * count);
  std::size_t evaluations = 0;
  bool finite = true;

  auto evaluate = [&](std::size_t slot, double a, double b) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    f(center, fx.data() + 20 * count);
    for (std::size_t j = 0; j < 10; ++j) {
      const double dx = half * detail::kKronrodNodes[j];
      f(center - dx, fx.data() + j * count);
      f(center + dx, fx.data() + (10 + j) * count);
    }
    evaluations += 21;
    std::array<double, 10> f1{};
    std::array<double, 10> f2{};
    for (std::size_t k = 0; k < count; ++k) {
      for (std::size_t j = 0; j < 10; ++j) {
        f1[j] = fx[j * count + k];
        f2[j] = fx[(10 + j) * count + k];
      }
      const auto sum = detail::kronrod21_reduce(fx[20 * count + k], f1.data(), f2.data(), half);
      finite = finite && std::isfinite(sum.value) && std::isfinite(sum.error);
      values[slot * count + k] = sum.value;
      errors[slot * count + k] = sum.error;
    }
    lo[slot] = a;
    hi[slot] = b;
  };
  auto grow = [&] {
    lo.push_back(0.0);
    hi.push_back(0.0);
    values.resize(values.size() + count);
    errors.resize(errors.size() + count);
    return lo.size() - 1;
  };

  std::vector<double> total(count);
  std::vector<double> total_err(count);
  auto resum = [&] {
    std::fill(total.begin(), total.end(), 0.0);
    std::fill(total_err.begin(), total_err.end(), 0.0);
    for (std::size_t slot = 0; slot < lo.size(); ++slot) {
      for (std::size_t k = 0; k < count; ++k) {
        total[k] += values[slot * count + k];
        total_err[k] += errors[slot * count + k];
      }
    }
  };
  auto target = [&](std::size_t k) {
    return std::max(abs_tol.empty() ? 0.0 : abs_tol[k], spec.rel_tol * std::abs(total[k]));
  };
  auto all_met = [&] {
    for (std::size_t k = 0; k < count; ++k) {
      if (total_err[k] > target(k)) return false;
    }
    return true;
  };

  for (std::size_t i = 1; i < points.size(); ++i) evaluate(grow(), points[i - 1], points[i]);
  resum();

  // Fixed normalizers keep the split order a pure function of the inputs.
  std::vector<double> scale(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = target(k);
    scale[k] = t > 0.0 ? 1.0 / t : 1.0 / std::numeric_limits<double>::min();
  }
  auto priority = [&](std::size_t slot) {
    double p = 0.0;
    for (std::size_t k = 0; k < count; ++k) p = std::max(p, errors[slot * count + k] * scale[k]);
    return p;
  };

  int subdivisions = 0;
  while (finite && !all_met() && subdivisions < spec.max_subdivisions) {
    std::size_t worst = 0;
    double worst_p = -1.0;
    for (std::size_t slot = 0; slot < lo.size(); ++slot) {
      const double p = priority(slot);
      if (p > worst_p) {
        worst_p = p;
        worst = slot;
      }
    }
    const double a = lo[worst];
    const double b = hi[worst];
    if (detail::at_resolution(a, b)) break;
    const double mid = 0.5 * (a + b);
    evaluate(worst, a, mid);
    evaluate(grow(), mid, b);
    ++subdivisions;
    resum();
  }

  MultiQuadratureResult out;
  out.value = total;
  out.error_estimate = total_err;
  out.evaluations = evaluations;
  out.converged = finite && all_met();
  if (!finite) {
    std::fill(out.value.begin(), out.value.end(), std::numeric_limits<double>::quiet_NaN());
    std::fill(out.error_estimate.begin(), out.error_estimate.end(), std::numeric_limits<double>::infinity());
  }
  return out;
}

/// Adaptive integration of f over [lo, hi].
template <typename F>
QuadratureResult integrate_finite(F&& f, double lo, double hi, const QuadratureSpec& spec = {}) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw std::invalid_argument("integrate_finite: require finite lo < hi");
  }
  const std::array<double, 2> points{lo, hi};
  return integrate_finite(std::forward<F>(f), std::span<const double>(points), spec);
}

/// Integral of f over [lo, inf) via spec.infinite_map onto [0, 1).
template <typename F>
QuadratureResult integrate_semi_infinite(F&& f, double lo, const QuadratureSpec& spec = {}) {
  if (!std::isfinite(lo)) {
    throw std::invalid_argument("integrate_semi_infinite: lo must be finite");
  }
  switch (spec.infinite_map) {
    case InfiniteMap::rational:
      return integrate_finite(
          [&](double t) {
            const double s = 1.0 - t;
            const double x = lo + t / s;
            const double jac = 1.0 / (s * s);
            if (!std::isfinite(x) || !std::isfinite(jac)) return 0.0;
            const double v = f(x);
            return v == 0.0 ? 0.0 : v * jac;
          },
          0.0, 1.0, spec);
    case InfiniteMap::exp:
      return integrate_finite(
          [&](double t) {
            const double s = 1.0 - t;
            const double x = lo - std::log1p(-t);
            const double jac = 1.0 / s;
            if (!std::isfinite(x) || !std::isfinite(jac)) return 0.0;
            const double v = f(x);
            return v == 0.0 ? 0.0 : v * jac;
          },
          0.0, 1.0, spec);
    case InfiniteMap::none:
      break;
  }
  throw std::invalid_argument("integrate_semi_infinite: infinite_map must not be none");
}

}  // namespace nakaber
