#pragma once

// SNR grid sweeps, discrepancy tables and timing benchmarks, with their CSV
// and plot-script serializations.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "nakaber/aber.hpp"
#include "nakaber/channel.hpp"
#include "nakaber/quad.hpp"
#include "nakaber/specfun.hpp"

namespace nakaber {

/// Inclusive dB grid start, start + step, ..., up to stop.
struct SnrGrid {
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;

  void validate() const {
    if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step)) {
      throw DomainError("SNR grid: bounds and step must be finite");
    }
    if (!(start < stop)) throw DomainError("SNR grid: start must be below stop");
    if (!(step > 0.0)) throw DomainError("SNR grid: step must be positive");
  }

  std::vector<double> points() const {
    validate();
    // Points are start + i * step (no accumulated drift); the small slack
    // keeps stop itself when (stop - start) / step is integral up to rounding.
    const double span = (stop - start) / step;
    const auto count = static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
    if (count > 100000) throw DomainError("SNR grid: more than 100000 points");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = start + static_cast<double>(i) * step;
    return out;
  }
};

struct SweepSpec {
  std::vector<double> snr_db;
  std::vector<AberMethod> methods;
  double m = 1.0;
  int order = 4;
  int jobs = 1;
  bool timing = true;

  void validate() const {
    if (snr_db.empty()) throw DomainError("sweep: empty SNR grid");
    if (methods.empty()) throw DomainError("sweep: at least one method is required");
    if (jobs < 1) throw DomainError("sweep: jobs must be at least 1");
    for (double s : snr_db) {
      if (!std::isfinite(s)) throw DomainError("sweep: SNR values must be finite");
    }
    (void)ChannelParams(m, 1.0);
    (void)Modulation(order);
  }
};

struct SweepRow {
  double snr_db = 0.0;
  std::string method;
  double value = 0.0;
  int terms = 0;
  std::int64_t wall_time_ns = 0;
  bool converged = true;
};

struct SweepResult {
  std::vector<SweepRow> rows;

  bool all_converged() const {
    return std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.converged; });
  }
};

namespace detail {

/// Runs body(i) for i in [0, count) on up to `jobs` threads. Results must be
/// written by index; the first exception (by index) is rethrown after join.
template <typename Body>
void parallel_for(std::size_t count, int jobs, Body&& body) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::int64_t elapsed_ns(std::chrono::steady_clock::time_point from,
                               std::chrono::steady_clock::time_point to) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(to - from).count();
}

}  // namespace detail

inline SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  const Modulation mod(spec.order);
  const std::size_t per_point = spec.methods.size();
  SweepResult out;
  out.rows.resize(spec.snr_db.size() * per_point);

  detail::parallel_for(out.rows.size(), spec.jobs, [&](std::size_t i) {
    const double snr_db = spec.snr_db[i / per_point];
    const auto& method = spec.methods[i % per_point];
    const ChannelParams ch(spec.m, db_to_linear(snr_db));
    const auto t0 = std::chrono::steady_clock::now();
    const auto v = evaluate(method, ch, mod);
    const auto t1 = std::chrono::steady_clock::now();
    out.rows[i] = SweepRow{snr_db, method_label(method), v.value, v.terms,
                           spec.timing ? detail::elapsed_ns(t0, t1) : 0, v.converged};
  });

  std::stable_sort(out.rows.begin(), out.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.snr_db != b.snr_db) return a.snr_db < b.snr_db;
    return a.method < b.method;
  });
  return out;
}

struct DiscrepancyRow {
  double snr_db = 0.0;
  std::string candidate;
  double epsilon_db = 0.0;
};

struct DiscrepancyResult {
  std::vector<DiscrepancyRow> rows;
  bool reference_converged = true;
};

/// epsilon of every candidate against the exact-kernel oracle at each grid point.
inline DiscrepancyResult run_discrepancy(const SweepSpec& spec, const QuadratureSpec& reference = {}) {
  spec.validate();
  const Modulation mod(spec.order);
  const std::size_t per_point = spec.methods.size();
  DiscrepancyResult out;
  out.rows.resize(spec.snr_db.size() * per_point);
  std::vector<char> converged(spec.snr_db.size(), 1);

  detail::parallel_for(spec.snr_db.size(), spec.jobs, [&](std::size_t k) {
    const double snr_db = spec.snr_db[k];
    const ChannelParams ch(spec.m, db_to_linear(snr_db));
    const auto ref = aber_oracle(ch, mod, BerKernel::exact(), reference);
    converged[k] = ref.converged ? 1 : 0;
    for (std::size_t j = 0; j < per_point; ++j) {
      const auto& method = spec.methods[j];
      // An oracle candidate with the reference settings is the reference itself.
      double value = 0.0;
      if (const auto* o = std::get_if<OracleMethod>(&method);
          o != nullptr && o->spec.rel_tol == reference.rel_tol && o->spec.abs_tol == reference.abs_tol &&
          o->spec.max_subdivisions == reference.max_subdivisions &&
          o->spec.infinite_map == reference.infinite_map) {
        value = ref.value;
      } else {
        value = evaluate(method, ch, mod).value;
      }
      out.rows[k * per_point + j] = DiscrepancyRow{snr_db, method_label(method), discrepancy(ref.value, value)};
    }
  });

  out.reference_converged = std::all_of(converged.begin(), converged.end(), [](char c) { return c != 0; });
  std::stable_sort(out.rows.begin(), out.rows.end(), [](const DiscrepancyRow& a, const DiscrepancyRow& b) {
    if (a.snr_db != b.snr_db) return a.snr_db < b.snr_db;
    return a.candidate < b.candidate;
  });
  return out;
}

// Benchmarks ----------------------------------------------------------------

/// True when a and b agree once rounded to `digits` significant digits.
inline bool agree_to_digits(double a, double b, int digits) {
  if (!std::isfinite(a) || !std::isfinite(b)) return false;
  char sa[64];
  char sb[64];
  std::snprintf(sa, sizeof sa, "%.*e", digits - 1, a);
  std::snprintf(sb, sizeof sb, "%.*e", digits - 1, b);
  if (std::string(sa) == sb) return true;
  // Values straddling a rounding boundary: accept a much tighter match.
  return std::abs(a - b) <= 1e-3 * std::pow(10.0, -digits) * std::abs(b);
}

struct TunedOracle {
  QuadratureSpec spec;
  double value = 0.0;
};

/// Tightens the oracle tolerance from 1e-3 by decades until two successive
/// values agree to `digits` significant digits; keeps the tighter setting.
inline TunedOracle tune_oracle(const ChannelParams& ch, const Modulation& mod, int digits = 5) {
  double previous = std::numeric_limits<double>::quiet_NaN();
  QuadratureSpec spec;
  for (double tol = 1e-3; tol >= 1e-13; tol /= 10.0) {
    spec.rel_tol = tol;
    const auto r = aber_oracle(ch, mod, BerKernel::exact(), spec);
    if (!r.converged) {
      previous = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    if (agree_to_digits(previous, r.value, digits)) return {spec, r.value};
    previous = r.value;
  }
  throw ConvergenceError("tune_oracle: no tolerance gave a stable value", std::numeric_limits<double>::quiet_NaN());
}

struct TunedClosed {
  Accuracy accuracy;
  double value = 0.0;
};

/// Same procedure for the Appell-F1 accuracy used by the closed form.
inline TunedClosed tune_closed(const ChannelParams& ch, const Modulation& mod, const TruncationPolicy& trunc,
                               int digits = 5) {
  double previous = std::numeric_limits<double>::quiet_NaN();
  Accuracy acc;
  for (double tol = 1e-3; tol >= 1e-13; tol /= 10.0) {
    acc.rel_tol = tol;
    const double v = aber_closed(ch, mod, trunc, acc);
    if (agree_to_digits(previous, v, digits)) return {acc, v};
    previous = v;
  }
  throw ConvergenceError("tune_closed: no accuracy gave a stable value", std::numeric_limits<double>::quiet_NaN());
}

struct BenchSpec {
  std::vector<double> snr_db;
  std::vector<int> n_terms = {0, 1, 2, 3, 4, 5};
  double m = 0.6;
  int order = 256;
  int repetitions = 51;
  bool timing = true;

  void validate() const {
    if (snr_db.empty()) throw DomainError("bench: empty SNR grid");
    if (n_terms.empty()) throw DomainError("bench: no term counts given");
    if (repetitions < 10) throw DomainError("bench: repetitions must be at least 10");
    for (int n : n_terms) TruncationPolicy::fixed(n);
    (void)ChannelParams(m, 1.0);
    (void)Modulation(order);
  }
};

struct BenchRow {
  double snr_db = 0.0;
  int n_terms = 0;
  std::int64_t t_closed_ns = 0;
  std::int64_t t_oracle_ns = 0;
  /// Speedup of the closed form: t_oracle / t_closed.
  double epsilon_t = 0.0;
};

namespace detail {

inline std::int64_t median(std::vector<std::int64_t> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace detail

/// Median wall times of the closed form and of the oracle, each tuned to
/// 5-significant-digit stability, over `repetitions` interleaved runs.
/// Single-threaded by design.
inline std::vector<BenchRow> run_bench(const BenchSpec& spec) {
  spec.validate();
  const Modulation mod(spec.order);
  std::vector<BenchRow> rows;
  volatile double sink = 0.0;

  for (double snr_db : spec.snr_db) {
    const ChannelParams ch(spec.m, db_to_linear(snr_db));
    const auto oracle = tune_oracle(ch, mod);
    for (int n : spec.n_terms) {
      const auto trunc = TruncationPolicy::fixed(n);
      const auto closed = tune_closed(ch, mod, trunc);
      BenchRow row{snr_db, n, 0, 0, 0.0};
      if (spec.timing) {
        std::vector<std::int64_t> tc;
        std::vector<std::int64_t> to;
        for (int r = 0; r < spec.repetitions; ++r) {
          const auto t0 = std::chrono::steady_clock::now();
          sink = sink + aber_closed(ch, mod, trunc, closed.accuracy);
          const auto t1 = std::chrono::steady_clock::now();
          sink = sink + aber_oracle(ch, mod, BerKernel::exact(), oracle.spec).value;
          const auto t2 = std::chrono::steady_clock::now();
          tc.push_back(detail::elapsed_ns(t0, t1));
          to.push_back(detail::elapsed_ns(t1, t2));
        }
        row.t_closed_ns = std::max<std::int64_t>(1, detail::median(tc));
        row.t_oracle_ns = detail::median(to);
        row.epsilon_t = static_cast<double>(row.t_oracle_ns) / static_cast<double>(row.t_closed_ns);
      }
      rows.push_back(row);
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) {
    if (a.snr_db != b.snr_db) return a.snr_db < b.snr_db;
    return a.n_terms < b.n_terms;
  });
  return rows;
}

// CSV -----------------------------------------------------------------------

/// 17 significant digits; -inf is the only non-finite value written.
inline std::string format_number(double v) {
  if (v == -std::numeric_limits<double>::infinity()) return "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << "snr_db,method,value,terms,wall_time_ns\n";
  for (const auto& row : r.rows) {
    os << format_number(row.snr_db) << ',' << row.method << ',' << format_number(row.value) << ','
       << row.terms << ',' << row.wall_time_ns << '\n';
  }
}

inline void write_discrepancy_csv(std::ostream& os, const DiscrepancyResult& r) {
  os << "snr_db,candidate_method,epsilon_db\n";
  for (const auto& row : r.rows) {
    os << format_number(row.snr_db) << ',' << row.candidate << ',' << format_number(row.epsilon_db) << '\n';
  }
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "snr_db,n_terms,t_closed_ns,t_oracle_ns,epsilon_t\n";
  for (const auto& row : rows) {
    os << format_number(row.snr_db) << ',' << row.n_terms << ',' << row.t_closed_ns << ',' << row.t_oracle_ns
       << ',' << format_number(row.epsilon_t) << '\n';
  }
}

// Plot scripts ----------------------------------------------------------------

namespace detail {

inline std::string py_number(double v) {
  if (v == -std::numeric_limits<double>::infinity()) return "float('-inf')";
  return format_number(v);
}

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

template <typename Row, typename Key, typename X, typename Y>
std::vector<Series> group_series(const std::vector<Row>& rows, Key key, X x, Y y) {
  std::vector<Series> out;
  for (const auto& row : rows) {
    const std::string k = key(row);
    auto it = std::find_if(out.begin(), out.end(), [&](const Series& s) { return s.label == k; });
    if (it == out.end()) {
      out.push_back({k, {}, {}});
      it = out.end() - 1;
    }
    it->x.push_back(x(row));
    it->y.push_back(y(row));
  }
  return out;
}

inline void write_plot_script(std::ostream& os, const std::vector<Series>& series, const std::string& title,
                              const std::string& ylabel, bool log_y) {
  os << "#!/usr/bin/env python3\n"
     << "# Generated plot script; data is inlined. Writes a PNG next to this file.\n"
     << "from pathlib import Path\n\n"
     << "import matplotlib\n\n"
     << "matplotlib.use(\"Agg\")\n"
     << "import matplotlib.pyplot as plt\n\n"
     << "SERIES = {\n";
  for (const auto& s : series) {
    os << "    \"" << s.label << "\": (\n        [";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << (i ? ", " : "") << py_number(s.x[i]);
    os << "],\n        [";
    for (std::size_t i = 0; i < s.y.size(); ++i) os << (i ? ", " : "") << py_number(s.y[i]);
    os << "],\n    ),\n";
  }
  os << "}\n\n"
     << "fig, ax = plt.subplots(figsize=(7, 5))\n"
     << "for label, (x, y) in SERIES.items():\n"
     << "    ax.plot(x, y, marker=\"o\", markersize=3, label=label)\n";
  if (log_y) os << "ax.set_yscale(\"log\")\n";
  os << "ax.set_xlabel(\"mean SNR [dB]\")\n"
     << "ax.set_ylabel(\"" << ylabel << "\")\n"
     << "ax.set_title(\"" << title << "\")\n"
     << "ax.grid(True, which=\"both\", alpha=0.3)\n"
     << "ax.legend()\n"
     << "fig.tight_layout()\n"
     << "fig.savefig(Path(__file__).with_suffix(\".png\"), dpi=150)\n";
}

}  // namespace detail

inline void write_sweep_plot(std::ostream& os, const SweepResult& r, const std::string& title) {
  const auto series = detail::group_series(
      r.rows, [](const SweepRow& row) { return row.method; }, [](const SweepRow& row) { return row.snr_db; },
      [](const SweepRow& row) { return row.value; });
  detail::write_plot_script(os, series, title, "ABER", true);
}

inline void write_discrepancy_plot(std::ostream& os, const DiscrepancyResult& r, const std::string& title) {
  const auto series = detail::group_series(
      r.rows, [](const DiscrepancyRow& row) { return row.candidate; },
      [](const DiscrepancyRow& row) { return row.snr_db; }, [](const DiscrepancyRow& row) { return row.epsilon_db; });
  detail::write_plot_script(os, series, title, "discrepancy [dB]", false);
}

inline void write_bench_plot(std::ostream& os, const std::vector<BenchRow>& rows, const std::string& title) {
  const auto series = detail::group_series(
      rows, [](const BenchRow& row) { return "N=" + std::to_string(row.n_terms); },
      [](const BenchRow& row) { return row.snr_db; }, [](const BenchRow& row) { return row.epsilon_t; });
  detail::write_plot_script(os, series, title, "speedup t_oracle / t_closed", false);
}

}  // namespace nakaber
