#pragma once

// Command-line front end. run_cli() is the whole program minus process
// concerns, so tests can drive it with in-memory streams.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nakaber/aber.hpp"
#include "nakaber/channel.hpp"
#include "nakaber/selftest.hpp"
#include "nakaber/sweep.hpp"

namespace nakaber::cli {

enum ExitCode : int {
  kSuccess = 0,
  kSelftestFailed = 1,
  kUsage = 2,
  kNonConvergence = 3,
  kIoError = 4,
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  double m = 0.0;
  int order = 0;
  std::optional<double> snr_db;
  std::string snr_db_range;
  std::vector<std::string> methods;
  int terms = 5;
  std::optional<double> adaptive_tol;
  double rel_tol = 1e-10;
  std::string out;
  int jobs = 1;
  bool no_timing = false;
  std::string emit_plot;
  std::string expq;
  int repetitions = 51;
  std::vector<std::string> groups;
  bool list = false;
  bool diagnostic = false;
  std::string config;
};

inline double parse_double(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw UsageError("cannot parse " + what + " '" + text + "'");
  }
  if (used != text.size()) throw UsageError("cannot parse " + what + " '" + text + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) parts.push_back(item);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

/// "a:b:step" -> grid.
inline SnrGrid parse_grid(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw UsageError("--snr-db-range expects a:b:step");
  SnrGrid g{parse_double(parts[0], "range start"), parse_double(parts[1], "range stop"),
            parse_double(parts[2], "range step")};
  try {
    g.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  return g;
}

/// "w1:r1,w2:r2,..." -> custom exponential-Q variant.
inline QApproxVariant parse_expq(const std::string& text) {
  std::vector<ExpTerm> terms;
  for (const auto& pair : split(text, ',')) {
    const auto wr = split(pair, ':');
    if (wr.size() != 2) throw UsageError("--expq expects w1:r1,w2:r2,...");
    terms.push_back({parse_double(wr[0], "expq weight"), parse_double(wr[1], "expq rate")});
  }
  try {
    return QApproxVariant::custom(std::move(terms));
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
}

/// closed | closed:N | closed:adaptive | lu | oracle | expq
inline AberMethod parse_method(const std::string& name, const Options& opt) {
  QuadratureSpec oracle;
  oracle.rel_tol = opt.rel_tol;
  if (name == "closed") {
    if (opt.adaptive_tol) return ClosedMethod{TruncationPolicy::adaptive(*opt.adaptive_tol)};
    return ClosedMethod{TruncationPolicy::fixed(opt.terms)};
  }
  if (name.rfind("closed:", 0) == 0) {
    const std::string arg = name.substr(7);
    if (arg == "adaptive") return ClosedMethod{TruncationPolicy::adaptive(opt.adaptive_tol.value_or(1e-12))};
    const double n = parse_double(arg, "term count");
    if (n != std::floor(n)) throw UsageError("term count must be an integer: " + arg);
    return ClosedMethod{TruncationPolicy::fixed(static_cast<int>(n))};
  }
  if (name == "lu") return LuMethod{};
  if (name == "oracle") return OracleMethod{oracle};
  if (name == "expq") {
    return ExpqMethod{opt.expq.empty() ? QApproxVariant::chiani() : parse_expq(opt.expq)};
  }
  throw UsageError("unknown method '" + name + "' (closed, closed:N, closed:adaptive, lu, oracle, expq)");
}

inline std::vector<double> grid_points(const Options& opt) {
  if (opt.snr_db && !opt.snr_db_range.empty()) throw UsageError("give either --snr-db or --snr-db-range");
  if (opt.snr_db) return {*opt.snr_db};
  if (opt.snr_db_range.empty()) throw UsageError("an SNR (--snr-db or --snr-db-range) is required");
  return parse_grid(opt.snr_db_range).points();
}

/// Writes via `emit` to `path`, or to `fallback` when path is empty.
template <typename Emit>
void write_output(const std::string& path, std::ostream& fallback, Emit&& emit) {
  if (path.empty()) {
    emit(fallback);
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  emit(f);
  f.flush();
  if (!f) throw IoError("failed writing '" + path + "'");
}

inline std::string plot_title(const Options& opt) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "m=%g, M=%d", opt.m, opt.order);
  return buf;
}

// Subcommands ---------------------------------------------------------------

inline int cmd_aber(const Options& opt, std::ostream& out) {
  if (opt.snr_db_range.size() > 0) throw UsageError("aber takes a single --snr-db");
  if (!opt.snr_db) throw UsageError("aber requires --snr-db");
  const std::string name = opt.methods.empty() ? "closed" : opt.methods.front();
  if (opt.methods.size() > 1) throw UsageError("aber takes a single --method");
  const auto method = parse_method(name, opt);
  const ChannelParams ch(opt.m, db_to_linear(*opt.snr_db));
  const Modulation mod(opt.order);
  const auto v = evaluate(method, ch, mod);

  out << "method=" << method_label(method) << " value=" << format_number(v.value) << " terms=" << v.terms;
  if (std::holds_alternative<OracleMethod>(method)) {
    out << " error_estimate=" << format_number(v.error_estimate) << " converged=" << (v.converged ? "yes" : "no");
  }
  if (opt.diagnostic) {
    if (const auto* c = std::get_if<ClosedMethod>(&method)) {
      out << " printed_form=" << format_number(aber_closed_printed_form(ch, mod, c->truncation));
    }
  }
  out << '\n';
  return v.converged ? kSuccess : kNonConvergence;
}

inline SweepSpec sweep_spec(const Options& opt, std::vector<std::string> default_methods) {
  SweepSpec spec;
  spec.snr_db = grid_points(opt);
  for (const auto& name : opt.methods.empty() ? default_methods : opt.methods) {
    spec.methods.push_back(parse_method(name, opt));
  }
  spec.m = opt.m;
  spec.order = opt.order;
  spec.jobs = opt.jobs;
  spec.timing = !opt.no_timing;
  return spec;
}

inline int cmd_sweep(const Options& opt, std::ostream& out) {
  const auto result = run_sweep(sweep_spec(opt, {"closed", "lu", "oracle"}));
  write_output(opt.out, out, [&](std::ostream& os) { write_sweep_csv(os, result); });
  if (!opt.emit_plot.empty()) {
    write_output(opt.emit_plot, out, [&](std::ostream& os) { write_sweep_plot(os, result, plot_title(opt)); });
  }
  return result.all_converged() ? kSuccess : kNonConvergence;
}

inline int cmd_discrepancy(const Options& opt, std::ostream& out) {
  const auto spec =
      sweep_spec(opt, {"closed:0", "closed:1", "closed:2", "closed:3", "closed:4", "closed:5", "lu", "expq"});
  QuadratureSpec reference;
  reference.rel_tol = opt.rel_tol;
  const auto result = run_discrepancy(spec, reference);
  write_output(opt.out, out, [&](std::ostream& os) { write_discrepancy_csv(os, result); });
  if (!opt.emit_plot.empty()) {
    write_output(opt.emit_plot, out,
                 [&](std::ostream& os) { write_discrepancy_plot(os, result, plot_title(opt)); });
  }
  return result.reference_converged ? kSuccess : kNonConvergence;
}

inline int cmd_bench(const Options& opt, std::ostream& out) {
  if (opt.repetitions < 10) throw UsageError("--repetitions must be at least 10");
  if (!opt.methods.empty()) throw UsageError("bench always compares the closed form with the oracle");
  BenchSpec spec;
  spec.snr_db = grid_points(opt);
  spec.n_terms.clear();
  for (int n = 0; n <= opt.terms; ++n) spec.n_terms.push_back(n);
  spec.m = opt.m;
  spec.order = opt.order;
  spec.repetitions = opt.repetitions;
  spec.timing = !opt.no_timing;
  const auto rows = run_bench(spec);
  write_output(opt.out, out, [&](std::ostream& os) { write_bench_csv(os, rows); });
  if (!opt.emit_plot.empty()) {
    write_output(opt.emit_plot, out, [&](std::ostream& os) { write_bench_plot(os, rows, plot_title(opt)); });
  }
  return kSuccess;
}

inline int cmd_selftest(const Options& opt, std::ostream& out) {
  const auto groups = selftest_groups();
  if (opt.list) {
    for (const auto& g : groups) out << g.name << "  " << g.summary << '\n';
    return kSuccess;
  }
  for (const auto& name : opt.groups) {
    const bool known = std::any_of(groups.begin(), groups.end(), [&](const SelftestGroup& g) { return g.name == name; });
    if (!known) throw UsageError("unknown selftest group '" + name + "' (see --list)");
  }
  bool all = true;
  for (const auto& g : groups) {
    if (!opt.groups.empty() && std::find(opt.groups.begin(), opt.groups.end(), g.name) == opt.groups.end()) continue;
    const auto r = run_group(g);
    all = all && r.passed;
    char line[512];
    std::snprintf(line, sizeof line, "%s %-13s checks=%d failures=%d worst=%.3g tol=%.3g at %s\n",
                  r.passed ? "PASS" : "FAIL", r.name.c_str(), r.checks, r.failures, r.worst, r.tol,
                  r.worst_at.c_str());
    out << line << std::flush;
  }
  return all ? kSuccess : kSelftestFailed;
}

// Config file ----------------------------------------------------------------

inline const std::vector<std::string>& flag_keys() {
  static const std::vector<std::string> keys = {"no-timing", "list", "diagnostic"};
  return keys;
}

/// Reads `key = value` lines ('#' starts a comment) into argument tokens,
/// skipping any key already given on the command line so that flags win.
inline std::vector<std::string> config_tokens(const std::string& path, const std::vector<std::string>& argv) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config file '" + path + "'");
  auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    return std::any_of(argv.begin(), argv.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };

  std::vector<std::string> tokens;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key.empty() || key == "config" || given(key)) continue;
    const bool is_flag = std::find(flag_keys().begin(), flag_keys().end(), key) != flag_keys().end();
    if (is_flag) {
      if (value == "true" || value == "1" || value == "yes") tokens.push_back("--" + key);
      else if (value != "false" && value != "0" && value != "no") {
        throw UsageError(path + ":" + std::to_string(lineno) + ": '" + key + "' expects true or false");
      }
    } else {
      tokens.push_back("--" + key);
      tokens.push_back(value);
    }
  }
  return tokens;
}

/// Splices config-file tokens in right after the subcommand name.
inline std::vector<std::string> apply_config(std::vector<std::string> argv) {
  std::string path;
  for (std::size_t i = 1; i < argv.size(); ++i) {
    if (argv[i] == "--config" && i + 1 < argv.size()) path = argv[i + 1];
    if (argv[i].rfind("--config=", 0) == 0) path = argv[i].substr(9);
  }
  if (path.empty()) return argv;
  const auto tokens = config_tokens(path, argv);
  static const std::vector<std::string> subcommands = {"aber", "sweep", "discrepancy", "bench", "selftest"};
  auto it = std::find_if(argv.begin() + 1, argv.end(), [](const std::string& a) {
    return std::find(subcommands.begin(), subcommands.end(), a) != subcommands.end();
  });
  if (it == argv.end()) return argv;
  argv.insert(it + 1, tokens.begin(), tokens.end());
  return argv;
}

// Entry point ----------------------------------------------------------------

inline void add_model_options(CLI::App& sub, Options& opt) {
  sub.add_option("--m", opt.m, "Nakagami shape parameter (> 0)")->required();
  sub.add_option("--mod", opt.order, "QAM order: 4, 16, 64, 256, 1024 or 4096")->required();
  sub.add_option("--snr-db", opt.snr_db, "mean SNR in dB");
  sub.add_option("--snr-db-range", opt.snr_db_range, "SNR grid a:b:step in dB (inclusive)");
  sub.add_option("--terms", opt.terms, "series terms N (closed form sums n = 0..N)")->check(CLI::Range(0, 200));
  sub.add_option("--adaptive-tol", opt.adaptive_tol, "adaptive series stop tolerance (replaces --terms)")
      ->check(CLI::Range(1e-16, 1e-4));
  sub.add_option("--rel-tol", opt.rel_tol, "oracle quadrature relative tolerance")->check(CLI::Range(1e-14, 1e-3));
  sub.add_option("--expq", opt.expq, "custom exponential Q approximation w1:r1,w2:r2,...");
  sub.add_option("--out", opt.out, "output path (default: stdout)");
  sub.add_option("--emit-plot", opt.emit_plot, "also write a matplotlib script with the data inlined");
  sub.add_option("--config", opt.config, "key = value file; command-line flags win");
}

inline int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Average BER of square M-QAM over Nakagami-m fading", "nakaber"};
  app.require_subcommand(1);

  auto* aber = app.add_subcommand("aber", "evaluate one ABER value");
  add_model_options(*aber, opt);
  aber->add_option("--method", opt.methods, "closed | lu | oracle | expq (also closed:N, closed:adaptive)");
  aber->add_flag("--diagnostic", opt.diagnostic, "also print the c0 * I coefficient layout of the closed form");

  auto* sweep = app.add_subcommand("sweep", "ABER over an SNR grid as CSV");
  add_model_options(*sweep, opt);
  sweep->add_option("--method", opt.methods, "methods (repeat or comma-separate)")->delimiter(',');
  sweep->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::Range(1, 1024));
  sweep->add_flag("--no-timing", opt.no_timing, "write 0 in the timing column");

  auto* disc = app.add_subcommand("discrepancy", "discrepancy in dB of each method against the oracle");
  add_model_options(*disc, opt);
  disc->add_option("--method", opt.methods, "candidate methods (repeat or comma-separate)")->delimiter(',');
  disc->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::Range(1, 1024));
  disc->add_flag("--no-timing", opt.no_timing, "accepted for symmetry; this table has no timing column");

  auto* bench = app.add_subcommand("bench", "closed form vs oracle wall time at 5-digit precision");
  add_model_options(*bench, opt);
  bench->add_option("--repetitions", opt.repetitions, "timed repetitions per point (>= 10)");
  bench->add_option("--jobs", opt.jobs, "ignored: benchmarks always run on one thread");
  bench->add_flag("--no-timing", opt.no_timing, "skip timing and write 0 in the timing columns");

  auto* selftest = app.add_subcommand("selftest", "run built-in invariant checks");
  selftest->add_option("--group", opt.groups, "run only these groups")->delimiter(',');
  selftest->add_flag("--list", opt.list, "list groups without running them");
  selftest->add_option("--config", opt.config, "key = value file; command-line flags win");

  try {
    const auto args = apply_config(raw_args);
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }

  try {
    // A malformed --expq is an error even when no expq method runs.
    if (!opt.expq.empty()) parse_expq(opt.expq);
    if (aber->parsed()) return cmd_aber(opt, out);
    if (sweep->parsed()) return cmd_sweep(opt, out);
    if (disc->parsed()) return cmd_discrepancy(opt, out);
    if (bench->parsed()) return cmd_bench(opt, out);
    if (selftest->parsed()) return cmd_selftest(opt, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << " (achieved " << e.achieved_error() << ")\n";
    return kNonConvergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kUsage;
}

}  // namespace nakaber::cli
