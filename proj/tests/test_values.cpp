#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

namespace ts = tapscript;
using ts::Value;

namespace {

Value nums(std::initializer_list<double> xs) { return Value(ts::NumericVector(xs)); }

Value with_attr(Value v, std::string_view name, Value a) {
  v.set_attr(name, std::move(a));
  return v;
}

}  // namespace

TEST(DeepEqual, Examples) {
  EXPECT_TRUE(ts::deep_equal(nums({1, 2, 3}), nums({1, 2, 3})));
  EXPECT_TRUE(ts::deep_equal(with_attr(nums({5}), ".n", nums({2})), nums({5})));
  EXPECT_FALSE(ts::deep_equal(with_attr(nums({5}), "unit", ts::string("cm")), nums({5})));
  EXPECT_FALSE(ts::deep_equal(nums({1, 2}), nums({1, 2, 3})));
  EXPECT_FALSE(ts::deep_equal(nums({1}), ts::logical(true)));
  EXPECT_TRUE(ts::deep_equal(nums({NAN}), nums({NAN})));
  EXPECT_FALSE(ts::deep_equal(nums({0.1 + 0.2}), nums({0.3})));
}

TEST(DeepEqual, WomenTableChangesWhenScaled) {
  ts::testing::Session s;
  Value before = s.eval("women");
  Value after = s.eval("w <- women\nw$height <- w$height * 2.54/100\nw");
  EXPECT_TRUE(ts::deep_equal(before, s.eval("women")));
  EXPECT_FALSE(ts::deep_equal(before, after));
}

TEST(DeepEqual, ReflexiveAndSymmetricOnGeneratedValues) {
  ts::testing::ValueGen gen = ts::testing::make_gen(3);
  for (int i = 0; i < 200; ++i) {
    Value a = gen.any(), b = gen.any();
    EXPECT_TRUE(ts::deep_equal(a, a));
    EXPECT_EQ(ts::deep_equal(a, b), ts::deep_equal(b, a));
  }
}

TEST(DeepEqual, ReservedAttributeRoundTrip) {
  ts::testing::ValueGen gen = ts::testing::make_gen(5);
  for (int i = 0; i < 100; ++i) {
    Value before = gen.any();
    Value after = before;
    after.set_attr(".n", ts::number(4));
    EXPECT_TRUE(ts::deep_equal(before, after));
    after.remove_attr(".n");
    EXPECT_TRUE(ts::deep_equal(before, after));
  }
}

TEST(Values, CopiesAreIndependent) {
  ts::testing::Session s;
  auto r = s.run("x <- c(1, 2, 3)\ny <- x\ny[2] <- 10\nw <- women\nw$height <- 0");
  ASSERT_FALSE(r.error);
  EXPECT_TRUE(ts::deep_equal(*r.runtime->lookup("x"), nums({1, 2, 3})));
  EXPECT_TRUE(ts::deep_equal(*r.runtime->lookup("y"), nums({1, 10, 3})));
  EXPECT_TRUE(ts::deep_equal(*r.runtime->lookup("women"), Value(ts::women_dataset())));
}

TEST(Values, LoggerReferencesAreShared) {
  ts::testing::Session s;
  auto r = s.run("a <- simple$new()\nb <- a\nx <- start_log(5, a)\ny <- x |> identity\n", {}, {});
  ASSERT_FALSE(r.error) << r.error->message;
  const auto* a = r.runtime->lookup("a")->loggers();
  const auto* b = r.runtime->lookup("b")->loggers();
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->items[0].get(), b->items[0].get());
  EXPECT_EQ(a->items[0]->row_count(), 1u);
}

TEST(CellCount, Examples) {
  EXPECT_EQ(ts::cell_count(Value()), 0u);
  EXPECT_EQ(ts::cell_count(Value(ts::women_dataset())), 30u);
  ts::NumericVector ten(10, 1.0);
  EXPECT_EQ(ts::cell_count(with_attr(Value(ten), ".n", ts::number(0))), 11u);
  EXPECT_EQ(ts::cell_count(ts::make_builtin("f", nullptr)), 0u);
  ts::testing::Session s;
  EXPECT_EQ(ts::cell_count(s.eval("function(x) x")), 1u);
}

TEST(CellCount, MatchesTraversalOracle) {
  ts::testing::ValueGen gen = ts::testing::make_gen(17);
  for (int i = 0; i < 100; ++i) {
    Value v = gen.any();
    EXPECT_EQ(ts::cell_count(v), ts::testing::oracle_cells(v)) << ts::format_value(v);
  }
}

TEST(Format, Scalars) {
  EXPECT_EQ(ts::format_value(ts::number(std::cos(std::sin(3.0)))), "[1] 0.9900591");
  EXPECT_EQ(ts::format_value(ts::logical(true)), "[1] TRUE");
  EXPECT_EQ(ts::format_value(ts::number(10)), "[1] 10");
  EXPECT_EQ(ts::format_value(ts::string("a\"b")), "[1] \"a\\\"b\"");
  EXPECT_EQ(ts::format_value(Value()), "NULL");
  EXPECT_EQ(ts::format_value(ts::number(123456)), "[1] 123456");
  EXPECT_EQ(ts::format_value(ts::number(1e10)), "[1] 1e+10");
  EXPECT_EQ(ts::format_value(ts::number(0.0001)), "[1] 1e-04");
  EXPECT_EQ(ts::format_value(ts::number(-2.5)), "[1] -2.5");
}

TEST(Format, Vectors) {
  EXPECT_EQ(ts::format_value(nums({1.5, 2, 3})), "[1] 1.5 2.0 3.0");
  EXPECT_EQ(ts::format_value(Value(ts::NumericVector{})), "numeric(0)");
  EXPECT_EQ(ts::format_value(Value(ts::LogicalVector{true, false})), "[1]  TRUE FALSE");
  ts::NumericVector many;
  for (int i = 1; i <= 30; ++i) many.push_back(i);
  const std::string text = ts::format_value(Value(many));
  EXPECT_EQ(text,
            " [1]  1  2  3  4  5  6  7  8  9 10 11 12 13 14 15 16 17 18 19 20 21 22 23 24 25\n"
            "[26] 26 27 28 29 30");
}

TEST(Format, TableRowsAndHiddenReservedAttributes) {
  ts::testing::Session s;
  auto r = s.run(ts::testing::read_text(ts::testing::scripts_dir() / "script2.ts"));
  ASSERT_FALSE(r.error);
  const std::string text = ts::format_value(*r.runtime->lookup("women"));
  EXPECT_NE(text.find("1.4732 52.16308 24.03476"), std::string::npos) << text;
  EXPECT_EQ(text.substr(0, text.find('\n')), "   height   weight      bmi");
  EXPECT_EQ(ts::format_value(with_attr(nums({1}), ".n", nums({3}))), "[1] 1");
  EXPECT_EQ(ts::format_value(with_attr(nums({1}), "unit", ts::string("cm"))), "[1] 1\nattr(,\"unit\")\n[1] \"cm\"");
}
