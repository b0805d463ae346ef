#include <gtest/gtest.h>

#include "support.hpp"
#include "tapscript/cli.hpp"

namespace ts = tapscript;
using ts::testing::read_text;
using ts::testing::TempDir;
using ts::testing::write_text;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tapscript");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = ts::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string script(const char* name) { return (ts::testing::scripts_dir() / name).string(); }

}  // namespace

TEST(Cli, RunScript2WritesLog) {
  TempDir dir;
  auto r = cli({"run", script("script2.ts"), "--log-dir", dir.path().string(), "--clock", "fixed"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.err, "Dumped a log at " + (dir / "women_simple.csv").string() + "\n");
  EXPECT_EQ(read_text(dir / "women_simple.csv"),
            "step,time,expression,changed\n"
            "1,2019-08-09 11:29:06,\"start_log(women, simple$new())\",FALSE\n"
            "2,2019-08-09 11:29:06,women$height <- women$height * 2.54/100,TRUE\n"
            "3,2019-08-09 11:29:06,women$weight <- women$weight * 0.453592,TRUE\n"
            "4,2019-08-09 11:29:06,women$bmi    <- women$weight/(women$height)^2,TRUE\n");
}

TEST(Cli, RunCountAndEcho) {
  auto r = cli({"run", script("script.ts"), "--count", "--clock", "fixed"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.err, "count: Counted 2 expressions\n");
  EXPECT_EQ(r.out, "");
  auto gated = cli({"run", script("script1.ts"), "--count-gated", "--clock", "fixed"});
  EXPECT_EQ(gated.err, "count-gated: Counted 1 expressions\n");
  EXPECT_EQ(gated.out, "[1] TRUE\n");
}

TEST(Cli, ReportAndPrintEnv) {
  TempDir dir;
  const auto report = (dir / "report.csv").string();
  auto r = cli({"run", script("script.ts"), "--mem", "--time", "--track", "x", "--track", "z", "--report", report,
                "--print-env", "--clock", "fixed:1"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "x:\n[1] 10\ny:\n[1] 20\n");
  EXPECT_EQ(read_text(report),
            "hook,step,metric,value\n"
            "time,1,seconds,1\n"
            "time,2,seconds,1\n"
            "mem,1,cells,1\n"
            "mem,2,cells,2\n"
            "track,2,x,FALSE\n");
  EXPECT_EQ(r.err,
            "time: Timed 2 expressions in 2 seconds\n"
            "mem: Peak 2 cells over 2 expressions\n"
            "track: x changed in 0 of 1 expressions\n"
            "track: z changed in 0 of 0 expressions\n");
}

TEST(Cli, PipeScripts) {
  TempDir dir;
  auto count = cli({"run", script("count_pipe.ts"), "--clock", "fixed"});
  EXPECT_EQ(count.code, 0);
  EXPECT_EQ(count.err, "Counted 2 expressions\n");
  EXPECT_EQ(count.out, "[1] 0.9900591\n");
  auto log = cli({"run", script("women_pipe.ts"), "--log-dir", dir.path().string(), "--clock", "fixed"});
  EXPECT_EQ(log.code, 0) << log.err;
  EXPECT_EQ(log.err, "Dumped a log at " + (dir / "simple.csv").string() + "\n");
}

TEST(Cli, TestPasses) {
  auto r = cli({"test", script("test_script.ts"), "--passes"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out,
            "Running test_script.ts........................ 2 tests OK\n"
            "----- PASSED      : test_script.ts<7--7>\n"
            " call| expect_true(all(BMI >= 10))\n"
            "----- PASSED      : test_script.ts<8--8>\n"
            " call| expect_true(all(BMI <= 30))\n");
  auto quiet = cli({"test", script("test_script.ts")});
  EXPECT_EQ(quiet.out, "Running test_script.ts........................ 2 tests OK\n");
}

TEST(Cli, TestDirectoryRunsOnlyTestFilesInOrder) {
  TempDir dir;
  write_text(dir / "test_b.ts", "expect_true(TRUE)\n");
  write_text(dir / "test_a.ts", "expect_true(FALSE)\n");
  write_text(dir / "helper.ts", "expect_true(FALSE)\n");
  auto r = cli({"test", dir.path().string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.out,
            "Running test_a.ts............................. 1 fails / 1 tests\n"
            "----- FAILED      : test_a.ts<1--1>\n"
            " call| expect_true(FALSE)\n"
            " info| not TRUE\n"
            "Running test_b.ts............................. 1 tests OK\n");
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  auto missing = cli({"run", (dir / "missing.ts").string()});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("missing.ts"), std::string::npos);
  EXPECT_EQ(cli({"test", (dir / "missing.ts").string()}).code, 1);

  auto unknown = cli({"run", script("script.ts"), "--bogus"});
  EXPECT_EQ(unknown.code, 4);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos);
  EXPECT_EQ(cli({}).code, 4);
  EXPECT_EQ(cli({"run", script("script.ts"), "--clock", "sometimes"}).code, 4);

  write_text(dir / "bad.ts", "x <- (1\n");
  auto parse = cli({"run", (dir / "bad.ts").string()});
  EXPECT_EQ(parse.code, 3);
  EXPECT_NE(parse.err.find("bad.ts:2"), std::string::npos) << parse.err;
  write_text(dir / "test_bad.ts", "x <- (1\n");
  EXPECT_EQ(cli({"test", (dir / "test_bad.ts").string()}).code, 3);

  write_text(dir / "boom.ts", "x <- 1\ny <- x + nope\n");
  auto boom = cli({"run", (dir / "boom.ts").string(), "--count"});
  EXPECT_EQ(boom.code, 1);
  EXPECT_NE(boom.err.find("count: Counted 1 expressions"), std::string::npos);
  EXPECT_NE(boom.err.find("Error in " + (dir / "boom.ts").string() + ":2:"), std::string::npos) << boom.err;

  write_text(dir / "test_fail.ts", "expect_equal(1, 2)\n");
  EXPECT_EQ(cli({"test", (dir / "test_fail.ts").string()}).code, 2);
  write_text(dir / "test_err.ts", "expect_true(TRUE)\nnope\n");
  EXPECT_EQ(cli({"test", (dir / "test_err.ts").string()}).code, 2);
}

TEST(Cli, FixedClockRunsAreByteIdentical) {
  TempDir a, b;
  std::vector<CliRun> runs;
  for (const TempDir* d : {&a, &b}) {
    runs.push_back(cli({"run", script("script2.ts"), "--log-dir", d->path().string(), "--clock", "fixed", "--time",
                        "--mem", "--track", "women", "--print-env", "--report", (d->path() / "r.csv").string()}));
  }
  EXPECT_EQ(runs[0].code, 0);
  EXPECT_EQ(runs[0].out, runs[1].out);
  EXPECT_FALSE(runs[0].out.empty());
  for (const char* f : {"women_simple.csv", "r.csv"}) EXPECT_EQ(read_text(a / f), read_text(b / f)) << f;
}
