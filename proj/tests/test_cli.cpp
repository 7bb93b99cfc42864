#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"

namespace fs = std::filesystem;
using nakaber::cli::run_cli;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "nakaber");
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("nakaber_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

double value_field(const std::string& line) {
  const auto p = line.find("value=");
  return std::stod(line.substr(p + 6));
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST(CliAber, SumOfQRayleigh) {
  const auto r = run({"aber", "--m", "1", "--mod", "4", "--snr-db", "0", "--method", "lu"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("method=lu"), std::string::npos);
  EXPECT_NEAR(value_field(r.out), 0.5 * (1.0 - std::sqrt(0.5)), 1e-15);
}

TEST(CliAber, ClosedAgreesWithOracle) {
  const auto c = run({"aber", "--m", "0.6", "--mod", "256", "--snr-db", "10", "--method", "closed", "--terms", "5"});
  const auto o = run({"aber", "--m", "0.6", "--mod", "256", "--snr-db", "10", "--method", "oracle"});
  ASSERT_EQ(c.code, 0);
  ASSERT_EQ(o.code, 0);
  EXPECT_NE(c.out.find("terms=6"), std::string::npos);
  EXPECT_NE(o.out.find("error_estimate="), std::string::npos);
  EXPECT_NEAR(value_field(c.out), value_field(o.out), 1e-6 * value_field(o.out));
}

TEST(CliAber, LowSnrLimit) {
  const auto r = run({"aber", "--m", "1", "--mod", "4", "--snr-db", "-100", "--method", "closed", "--terms", "0"});
  ASSERT_EQ(r.code, 0);
  EXPECT_NEAR(value_field(r.out), 0.4375, 1e-4);
}

TEST(CliAber, AdaptiveExpqAndDiagnostic) {
  auto r = run({"aber", "--m", "2.5", "--mod", "16", "--snr-db", "5", "--method", "closed", "--adaptive-tol", "1e-10"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("method=closed_adaptive"), std::string::npos);
  r = run({"aber", "--m", "2.5", "--mod", "16", "--snr-db", "5", "--method", "expq"});
  EXPECT_NE(r.out.find("method=expq_chiani"), std::string::npos);
  r = run({"aber", "--m", "2.5", "--mod", "16", "--snr-db", "5", "--method", "expq", "--expq", "0.5:0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("method=expq_custom"), std::string::npos);
  r = run({"aber", "--m", "0.6", "--mod", "64", "--snr-db", "-60", "--method", "closed", "--diagnostic"});
  EXPECT_NE(r.out.find("printed_form="), std::string::npos);
}

TEST(CliAber, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"aber", "--m", "1", "--mod", "5", "--snr-db", "0"}).code, 2);
  EXPECT_EQ(run({"aber", "--m", "-1", "--mod", "4", "--snr-db", "0"}).code, 2);
  EXPECT_EQ(run({"aber", "--m", "1", "--mod", "4"}).code, 2);
  EXPECT_EQ(run({"aber", "--m", "1", "--mod", "4", "--snr-db", "0", "--method", "magic"}).code, 2);
  EXPECT_EQ(run({"aber", "--m", "1", "--mod", "4", "--snr-db", "0", "--terms", "500"}).code, 2);
  EXPECT_EQ(run({"aber", "--m", "1", "--mod", "4", "--snr-db", "0", "--expq", "1:"}).code, 2);
  EXPECT_EQ(run({"aber", "--m", "1", "--mod", "4", "--snr-db", "0", "--method", "expq", "--expq", "1:x"}).code, 2);
  EXPECT_EQ(run({"aber", "--mod", "4", "--snr-db", "0"}).code, 2);
  EXPECT_EQ(run({"aber", "--m", "1", "--mod", "4", "--snr-db", "0", "--bogus"}).code, 2);
}

TEST(CliAber, NonConvergenceExitCode) {
  const auto r = run({"aber", "--m", "0.6", "--mod", "256", "--snr-db", "10", "--method", "oracle", "--rel-tol", "1e-14"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("converged=no"), std::string::npos);
}

TEST(CliAber, HelpExitsCleanly) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("sweep"), std::string::npos);
}

TEST(CliSweep, RowsAndDeterminism) {
  TempDir dir;
  const std::vector<std::string> base = {"sweep", "--m", "4.1", "--mod", "256", "--snr-db-range", "0:30:1",
                                         "--method", "closed:0,lu,oracle", "--no-timing"};
  auto a = base;
  a.insert(a.end(), {"--out", dir.file("a.csv"), "--jobs", "4"});
  auto b = base;
  b.insert(b.end(), {"--out", dir.file("b.csv")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  const auto text = slurp(dir.file("a.csv"));
  EXPECT_EQ(text, slurp(dir.file("b.csv")));
  EXPECT_EQ(count_lines(text), 94u);
  EXPECT_EQ(text.rfind("snr_db,method,value,terms,wall_time_ns\n", 0), 0u);
}

TEST(CliSweep, DefaultsToStdoutAndRepeatedMethods) {
  const auto r = run({"sweep", "--m", "1", "--mod", "16", "--snr-db-range", "0:2:1", "--method", "lu", "--method",
                      "closed:1", "--no-timing"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 7u);
  EXPECT_NE(r.out.find("0,closed_N1,"), std::string::npos);
}

TEST(CliSweep, EmitsPlotScript) {
  TempDir dir;
  const auto r = run({"sweep", "--m", "0.6", "--mod", "256", "--snr-db-range", "0:10:5", "--out", dir.file("s.csv"),
                      "--emit-plot", dir.file("s.py")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto script = slurp(dir.file("s.py"));
  EXPECT_NE(script.find("matplotlib"), std::string::npos);
  EXPECT_NE(script.find("\"oracle\""), std::string::npos);
}

TEST(CliSweep, GridErrorsAndIoFailure) {
  EXPECT_EQ(run({"sweep", "--m", "1", "--mod", "4", "--snr-db-range", "5:0:1"}).code, 2);
  EXPECT_EQ(run({"sweep", "--m", "1", "--mod", "4", "--snr-db-range", "0:5"}).code, 2);
  EXPECT_EQ(run({"sweep", "--m", "1", "--mod", "4", "--snr-db-range", "0:5:0"}).code, 2);
  EXPECT_EQ(run({"sweep", "--m", "1", "--mod", "4", "--snr-db-range", "0:5:1", "--jobs", "0"}).code, 2);
  EXPECT_EQ(run({"sweep", "--m", "1", "--mod", "4", "--snr-db", "1", "--snr-db-range", "0:5:1"}).code, 2);
  EXPECT_EQ(run({"sweep", "--m", "1", "--mod", "4", "--snr-db-range", "0:5:1", "--out", "/nonexistent/dir/x.csv"}).code,
            4);
}

TEST(CliDiscrepancy, SentinelAndColumns) {
  const auto r = run({"discrepancy", "--m", "0.6", "--mod", "256", "--snr-db-range", "0:15:5", "--method",
                      "closed:0,lu,oracle"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("snr_db,candidate_method,epsilon_db\n", 0), 0u);
  EXPECT_NE(r.out.find("0,oracle,-inf\n"), std::string::npos);
  EXPECT_EQ(count_lines(r.out), 13u);
}

TEST(CliDiscrepancy, DefaultCandidates) {
  const auto r = run({"discrepancy", "--m", "0.6", "--mod", "256", "--snr-db", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 9u);  // header + closed N0..N5, lu, expq
}

TEST(CliBench, ValidatesRepetitionsAndWritesCsv) {
  EXPECT_EQ(run({"bench", "--m", "0.6", "--mod", "256", "--snr-db", "0", "--repetitions", "1"}).code, 2);
  const auto r = run({"bench", "--m", "0.6", "--mod", "256", "--snr-db", "10", "--terms", "2", "--repetitions", "10",
                      "--no-timing"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "snr_db,n_terms,t_closed_ns,t_oracle_ns,epsilon_t\n10,0,0,0,0\n10,1,0,0,0\n10,2,0,0,0\n");
}

TEST(CliSelftest, ListGroupAndUnknown) {
  const auto list = run({"selftest", "--list"});
  EXPECT_EQ(list.code, 0);
  EXPECT_NE(list.out.find("lemma2"), std::string::npos);
  EXPECT_NE(list.out.find("reflection"), std::string::npos);
  EXPECT_EQ(list.out.find("PASS"), std::string::npos);

  const auto one = run({"selftest", "--group", "lemma2"});
  EXPECT_EQ(one.code, 0) << one.out;
  EXPECT_EQ(count_lines(one.out), 1u);
  EXPECT_EQ(one.out.rfind("PASS lemma2", 0), 0u);

  EXPECT_EQ(run({"selftest", "--group", "nonsense"}).code, 2);
}

TEST(CliSelftest, FullRunPasses) {
  const auto r = run({"selftest"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
}

TEST(CliConfig, FileSuppliesFlagsAndCommandLineWins) {
  TempDir dir;
  {
    std::ofstream cfg(dir.file("run.cfg"));
    cfg << "# shared settings\n"
        << "m = 1\n"
        << "mod = 4\n"
        << "snr-db = 0\n"
        << "method = lu\n";
  }
  auto r = run({"aber", "--config", dir.file("run.cfg")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(value_field(r.out), 0.5 * (1.0 - std::sqrt(0.5)), 1e-15);

  r = run({"aber", "--config", dir.file("run.cfg"), "--method", "closed", "--terms", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("method=closed_N0"), std::string::npos);

  {
    std::ofstream cfg(dir.file("flags.cfg"));
    cfg << "no-timing = true\nm=0.6\nmod=16\nsnr-db-range=0:2:1\nmethod=lu\n";
  }
  r = run({"sweep", "--config", dir.file("flags.cfg")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("0,lu,"), std::string::npos);
  EXPECT_NE(r.out.find(",0,0\n"), std::string::npos);

  {
    std::ofstream cfg(dir.file("bad.cfg"));
    cfg << "this line has no separator\n";
  }
  EXPECT_EQ(run({"aber", "--config", dir.file("bad.cfg")}).code, 2);
  EXPECT_EQ(run({"aber", "--config", dir.file("missing.cfg")}).code, 4);
}

#ifdef NAKABER_CLI_PATH
TEST(CliProcess, ExitCodesFromTheBinary) {
  auto status = [](const std::string& args) {
    const std::string cmd = std::string(NAKABER_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WEXITSTATUS(raw);
  };
  EXPECT_EQ(status("aber --m 1 --mod 4 --snr-db 0 --method lu"), 0);
  EXPECT_EQ(status("aber --m 1 --mod 4"), 2);
  EXPECT_EQ(status("bench --m 0.6 --mod 256 --snr-db 0 --repetitions 1"), 2);
  EXPECT_EQ(status("aber --m 0.6 --mod 256 --snr-db 10 --method oracle --rel-tol 1e-14"), 3);
  EXPECT_EQ(status("sweep --m 1 --mod 4 --snr-db-range 0:1:1 --out /nonexistent/dir/x.csv"), 4);
  EXPECT_EQ(status("selftest --group lemma1"), 0);
}
#endif
