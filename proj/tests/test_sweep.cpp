#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nakaber/sweep.hpp"

using namespace nakaber;

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

SweepSpec fig_sweep() {
  SweepSpec s;
  s.snr_db = SnrGrid{0.0, 30.0, 1.0}.points();
  s.methods = {ClosedMethod{TruncationPolicy::fixed(0)}, LuMethod{}, OracleMethod{}};
  s.m = 4.1;
  s.order = 256;
  s.timing = false;
  return s;
}

}  // namespace

TEST(SnrGrid, Points) {
  EXPECT_EQ(SnrGrid({0.0, 30.0, 1.0}).points().size(), 31u);
  EXPECT_EQ(SnrGrid({0.0, 15.0, 1.0}).points().size(), 16u);
  const auto p = SnrGrid{0.0, 1.0, 0.1}.points();
  ASSERT_EQ(p.size(), 11u);
  EXPECT_DOUBLE_EQ(p.back(), 1.0);
  EXPECT_EQ(SnrGrid({0.0, 10.0, 3.0}).points().back(), 9.0);
  EXPECT_THROW(SnrGrid({5.0, 5.0, 1.0}).points(), DomainError);
  EXPECT_THROW(SnrGrid({0.0, 5.0, 0.0}).points(), DomainError);
  EXPECT_THROW(SnrGrid({0.0, 5.0, -1.0}).points(), DomainError);
}

TEST(Sweep, RowCountOrderingAndMonotonicity) {
  const auto r = run_sweep(fig_sweep());
  ASSERT_EQ(r.rows.size(), 93u);
  EXPECT_TRUE(r.all_converged());
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const auto& a = r.rows[i - 1];
    const auto& b = r.rows[i];
    EXPECT_TRUE(a.snr_db < b.snr_db || (a.snr_db == b.snr_db && a.method < b.method));
  }
  for (const std::string method : {"closed_N0", "lu", "oracle"}) {
    double prev = 1.0;
    for (const auto& row : r.rows) {
      if (row.method != method) continue;
      EXPECT_LE(row.value, prev) << method << " " << row.snr_db;
      EXPECT_GE(row.value, 0.0);
      prev = row.value;
    }
  }
}

TEST(Sweep, ClosedFormTracksOracleForLargeShape) {
  auto spec = fig_sweep();
  spec.methods = {ClosedMethod{TruncationPolicy::fixed(5)}, OracleMethod{}};
  const auto r = run_sweep(spec);
  for (std::size_t i = 0; i < r.rows.size(); i += 2) {
    ASSERT_EQ(r.rows[i].method, "closed_N5");
    ASSERT_EQ(r.rows[i + 1].method, "oracle");
    EXPECT_LE(std::abs(r.rows[i].value - r.rows[i + 1].value) / r.rows[i + 1].value, 1e-6) << r.rows[i].snr_db;
  }
}

TEST(Sweep, ParallelRunIsByteIdentical) {
  auto spec = fig_sweep();
  std::ostringstream serial;
  write_sweep_csv(serial, run_sweep(spec));
  spec.jobs = 8;
  std::ostringstream parallel;
  write_sweep_csv(parallel, run_sweep(spec));
  EXPECT_EQ(serial.str(), parallel.str());
}

TEST(Sweep, TimingColumnIsFilledUnlessDisabled) {
  auto spec = fig_sweep();
  spec.snr_db = {10.0};
  spec.timing = true;
  for (const auto& row : run_sweep(spec).rows) EXPECT_GT(row.wall_time_ns, 0);
  spec.timing = false;
  for (const auto& row : run_sweep(spec).rows) EXPECT_EQ(row.wall_time_ns, 0);
}

TEST(Sweep, Validation) {
  auto spec = fig_sweep();
  spec.methods.clear();
  EXPECT_THROW(run_sweep(spec), DomainError);
  spec = fig_sweep();
  spec.order = 32;
  EXPECT_THROW(run_sweep(spec), DomainError);
  spec = fig_sweep();
  spec.jobs = 0;
  EXPECT_THROW(run_sweep(spec), DomainError);
}

TEST(SweepCsv, FormatParsesBack) {
  std::ostringstream os;
  write_sweep_csv(os, run_sweep(fig_sweep()));
  const auto rows = parse_csv(os.str());
  ASSERT_EQ(rows.size(), 94u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"snr_db", "method", "value", "terms", "wall_time_ns"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i].size(), 5u);
    for (int c : {0, 2, 3, 4}) {
      std::size_t used = 0;
      const double v = std::stod(rows[i][c], &used);
      EXPECT_EQ(used, rows[i][c].size());
      EXPECT_TRUE(std::isfinite(v));
    }
  }
}

TEST(SweepCsv, SeventeenSignificantDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 2.5e-300, 0.17925677848771351}) {
    EXPECT_EQ(std::stod(format_number(v)), v);
  }
  EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-inf");
  EXPECT_EQ(format_number(3.0), "3");
}

TEST(Discrepancy, ShapeBelowOneFindings) {
  SweepSpec spec;
  spec.snr_db = SnrGrid{0.0, 15.0, 1.0}.points();
  spec.methods = {ClosedMethod{TruncationPolicy::fixed(0)}, ClosedMethod{TruncationPolicy::fixed(5)}, LuMethod{},
                  OracleMethod{}};
  spec.m = 0.6;
  spec.order = 256;
  spec.jobs = 4;
  const auto r = run_discrepancy(spec);
  ASSERT_EQ(r.rows.size(), 64u);
  EXPECT_TRUE(r.reference_converged);
  for (std::size_t i = 0; i < r.rows.size(); i += 4) {
    ASSERT_EQ(r.rows[i].candidate, "closed_N0");
    ASSERT_EQ(r.rows[i + 1].candidate, "closed_N5");
    ASSERT_EQ(r.rows[i + 2].candidate, "lu");
    ASSERT_EQ(r.rows[i + 3].candidate, "oracle");
    EXPECT_LT(r.rows[i].epsilon_db, r.rows[i + 2].epsilon_db);
    EXPECT_LE(r.rows[i + 1].epsilon_db, r.rows[i].epsilon_db);
    EXPECT_EQ(r.rows[i + 3].epsilon_db, -std::numeric_limits<double>::infinity());
  }
  std::ostringstream os;
  write_discrepancy_csv(os, r);
  const auto rows = parse_csv(os.str());
  EXPECT_EQ(rows[0], (std::vector<std::string>{"snr_db", "candidate_method", "epsilon_db"}));
  EXPECT_EQ(rows[4][2], "-inf");
}

TEST(Bench, AgreeToDigits) {
  EXPECT_TRUE(agree_to_digits(0.123454, 0.123451, 5));
  EXPECT_FALSE(agree_to_digits(0.12345, 0.12347, 5));
  EXPECT_FALSE(agree_to_digits(std::nan(""), 0.1, 5));
  // Straddling a rounding boundary with a tiny gap still counts.
  EXPECT_TRUE(agree_to_digits(0.1234549999999, 0.1234550000001, 5));
}

TEST(Bench, TunedValuesAreStable) {
  const ChannelParams ch(0.6, 10.0);
  const Modulation mod(256);
  const auto o = tune_oracle(ch, mod);
  const auto c = tune_closed(ch, mod, TruncationPolicy::fixed(5));
  EXPECT_TRUE(agree_to_digits(o.value, aber_oracle(ch, mod, BerKernel::exact(), {}).value, 5));
  EXPECT_TRUE(agree_to_digits(c.value, o.value, 5));
}

TEST(Bench, NoTimingIsDeterministic) {
  BenchSpec spec;
  spec.snr_db = {0.0, 10.0};
  spec.n_terms = {0, 2};
  spec.timing = false;
  std::ostringstream a;
  std::ostringstream b;
  write_bench_csv(a, run_bench(spec));
  write_bench_csv(b, run_bench(spec));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str(), "snr_db,n_terms,t_closed_ns,t_oracle_ns,epsilon_t\n0,0,0,0,0\n0,2,0,0,0\n10,0,0,0,0\n10,2,0,0,0\n");
}

TEST(Bench, ClosedFormCostGrowsWithTerms) {
  BenchSpec spec;
  spec.snr_db = {10.0};
  spec.n_terms = {0, 5};
  spec.repetitions = 31;
  const auto rows = run_bench(spec);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_LT(rows[0].t_closed_ns, rows[1].t_closed_ns);
  for (const auto& row : rows) {
    EXPECT_GT(row.t_oracle_ns, 0);
    EXPECT_DOUBLE_EQ(row.epsilon_t, static_cast<double>(row.t_oracle_ns) / static_cast<double>(row.t_closed_ns));
  }
}

TEST(Bench, RejectsTooFewRepetitions) {
  BenchSpec spec;
  spec.snr_db = {0.0};
  spec.repetitions = 9;
  EXPECT_THROW(run_bench(spec), DomainError);
}

TEST(PlotScript, InlinesDataAndIsSelfContained) {
  SweepSpec spec = fig_sweep();
  spec.snr_db = {0.0, 10.0};
  std::ostringstream os;
  write_sweep_plot(os, run_sweep(spec), "m=4.1, M=256");
  const std::string s = os.str();
  EXPECT_NE(s.find("import matplotlib"), std::string::npos);
  EXPECT_NE(s.find("\"closed_N0\""), std::string::npos);
  EXPECT_NE(s.find("\"oracle\""), std::string::npos);
  EXPECT_NE(s.find("savefig"), std::string::npos);
  EXPECT_EQ(s.find("read_csv"), std::string::npos);

  DiscrepancyResult d;
  d.rows = {{0.0, "oracle", -std::numeric_limits<double>::infinity()}};
  std::ostringstream ds;
  write_discrepancy_plot(ds, d, "t");
  EXPECT_NE(ds.str().find("float('-inf')"), std::string::npos);
}
