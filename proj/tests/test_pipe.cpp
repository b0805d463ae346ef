#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

namespace ts = tapscript;
using ts::Value;
using ts::testing::num;
using ts::testing::Session;

TEST(Pipe, CountingSession) {
  Session s;
  Value out = s.eval("3 |> start_counting() |> sin |> cos |> end_counting()");
  EXPECT_EQ(s.err.str(), "Counted 2 expressions\n");
  EXPECT_EQ(ts::format_value(out), "[1] 0.9900591");
  EXPECT_LE(std::abs(num(out) - std::cos(std::sin(3.0))), 1e-7);
  EXPECT_EQ(out.attr(ts::reserved::kCounter), nullptr);
}

TEST(Pipe, BareStageNamesWorkToo) {
  Session s;
  s.eval("3 |> start_counting |> sin |> cos |> end_counting");
  EXPECT_EQ(s.err.str(), "Counted 2 expressions\n");
}

TEST(Pipe, IdentityWithoutReservedAttributes) {
  Session s;
  Value out = s.eval("5 |> identity");
  EXPECT_TRUE(ts::deep_equal(out, ts::number(5)));
  EXPECT_FALSE(out.has_attrs());
  EXPECT_EQ(s.err.str(), "");
}

TEST(Pipe, ClosureStages) {
  Session s;
  EXPECT_EQ(num(s.eval("double <- function(v) v * 2\n4 |> double |> function(v) v + 1")), 9);
  EXPECT_THROW(s.eval("4 |> function(a, b) a"), ts::EvalError);
  EXPECT_THROW(s.eval("4 |> 5"), ts::EvalError);
}

TEST(Pipe, StartCountingValue) {
  Value v = ts::start_counting_value(ts::number(3));
  EXPECT_TRUE(ts::deep_equal(*v.attr(".n"), ts::number(0)));
  v.set_attr(".n", ts::number(7));
  EXPECT_TRUE(ts::deep_equal(*ts::start_counting_value(v).attr(".n"), ts::number(0)));
  EXPECT_EQ(ts::format_value(v), ts::format_value(ts::number(3)));
}

TEST(Pipe, EndCountingValue) {
  Session s;
  Value v = ts::number(1);
  v.set_attr(".n", ts::number(3));
  Value out = ts::end_counting_value(v, s.ctx);
  EXPECT_EQ(s.err.str(), "Counted 2 expressions\n");
  EXPECT_EQ(out.attr(".n"), nullptr);
  EXPECT_THROW(ts::end_counting_value(ts::number(1), s.ctx), ts::EvalError);
  try {
    ts::end_counting_value(ts::number(1), s.ctx);
  } catch (const ts::EvalError& e) {
    EXPECT_STREQ(e.what(), "not counting");
  }
}

TEST(Pipe, EndImmediatelyAfterStart) {
  Session s;
  s.eval("3 |> start_counting() |> end_counting()");
  EXPECT_EQ(s.err.str(), "Counted 0 expressions\n");
}

TEST(PipeProperties, CountEqualsStageCount) {
  std::mt19937 rng(29);
  const std::vector<std::string> stages{"sin", "cos", "abs", "identity", "exp", "(function(v) v * 2)",
                                        "(function(v) v + 0)", "(function(v) c(v))"};
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = rng() % 8;
    std::string chain = "0.5 |> start_counting()";
    std::string plain = "0.5";
    for (std::size_t i = 0; i < m; ++i) {
      const std::string& st = stages[rng() % stages.size()];
      chain += " |> " + st;
      plain += " |> " + st;
    }
    chain += " |> end_counting()";
    Session a, b;
    Value counted = a.eval(chain);
    Value bare = b.eval(plain);
    EXPECT_EQ(a.err.str(), fmt::format("Counted {} expressions\n", m)) << chain;
    // Transparency: the markers do not change the data.
    EXPECT_TRUE(ts::deep_equal(ts::core(counted), ts::core(bare))) << chain;
  }
}

TEST(PipeProperties, DroppingStageDoesNotChangeCount) {
  for (const char* dropper : {"(function(v) v + 0)", "(function(v) c(v))", "(function(v) sum(v))"}) {
    Session s;
    s.eval(fmt::format("c(1, 2) |> start_counting() |> abs |> {} |> sqrt |> end_counting()", dropper));
    EXPECT_EQ(s.err.str(), "Counted 3 expressions\n") << dropper;
  }
}

TEST(Pipe, LoggersRecordEveryStage) {
  ts::testing::TempDir dir;
  Session s;
  s.ctx.log_dir = dir.path();
  Value out = s.eval(
      "to_cm <- function(d) {\n  d$height <- d$height * 2.54\n  d\n}\n"
      "women |> start_log(simple$new()) |> to_cm |> identity |> dump_log()");
  EXPECT_EQ(out.attr(ts::reserved::kLoggers), nullptr);
  EXPECT_EQ(s.err.str(), fmt::format("Dumped a log at {}\n", (dir.path() / "simple.csv").string()));
  EXPECT_EQ(ts::testing::read_text(dir / "simple.csv"),
            "step,time,expression,changed\n"
            "1,2019-08-09 11:29:06,to_cm,TRUE\n"
            "2,2019-08-09 11:29:06,identity,FALSE\n");
}

TEST(Pipe, LoggerSurvivesAttributeDroppingStage) {
  ts::testing::TempDir dir;
  Session s;
  s.ctx.log_dir = dir.path();
  Value out = s.eval("inc <- function(v) v + 1\nc(1, 2) |> start_log(simple$new()) |> inc |> sum |> dump_log()");
  EXPECT_EQ(num(out), 5);
  auto rows = ts::csv::parse(ts::testing::read_text(dir / "simple.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][2], "inc");
  EXPECT_EQ(rows[2][2], "sum");
}
