#pragma once

// Assertions and the test-file runner. Assertions are ordinary functions
// returning a logical result; a test run masks them with collectors so each
// outcome is captured with its call text and line span, while the values of
// all other expressions are discarded.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/core.h>

#include "eval.hpp"
#include "flow.hpp"
#include "test_result.hpp"
#include "values.hpp"

namespace tapscript {

inline Value expect_true_value(const Value& actual) {
  const LogicalVector* l = actual.logical();
  if (!l || l->size() != 1) return make_test_value(false, "not a length-1 logical");
  return (*l)[0] ? make_test_value(true) : make_test_value(false, "not TRUE");
}

inline Value expect_false_value(const Value& actual) {
  const LogicalVector* l = actual.logical();
  if (!l || l->size() != 1) return make_test_value(false, "not a length-1 logical");
  return !(*l)[0] ? make_test_value(true) : make_test_value(false, "not FALSE");
}

namespace detail {

inline std::string cell_text(const Value& v, std::size_t i) {
  return v.strings() ? quote((*v.strings())[i]) : format_scalar(v, i);
}

inline bool cell_equal(const Value& a, const Value& b, std::size_t i) {
  if (auto x = a.numeric()) return same_double((*x)[i], (*b.numeric())[i]);
  if (auto x = a.logical()) return (*x)[i] == (*b.logical())[i];
  return (*a.strings())[i] == (*b.strings())[i];
}

/// First difference between two values that are not deep_equal.
inline std::string describe_difference(const Value& current, const Value& target) {
  if (current.kind() != target.kind())
    return fmt::format("types differ: {} vs {}", type_name(current), type_name(target));
  if (const Table* a = current.table()) {
    const Table* b = target.table();
    if (a->names != b->names) return "column names differ";
    for (std::size_t c = 0; c < a->names.size(); ++c)
      if (!deep_equal(a->columns[c], b->columns[c]))
        return fmt::format("column '{}': {}", a->names[c], describe_difference(a->columns[c], b->columns[c]));
  }
  if (current.is_vector()) {
    if (current.length() != target.length())
      return fmt::format("lengths differ: {} vs {}", current.length(), target.length());
    for (std::size_t i = 0; i < current.length(); ++i)
      if (!cell_equal(current, target, i))
        return fmt::format("element {} differs: {} vs {}", i + 1, cell_text(current, i), cell_text(target, i));
    return "attributes differ";
  }
  return "values differ";
}

}  // namespace detail

inline Value expect_equal_value(const Value& current, const Value& target) {
  if (deep_equal(current, target)) return make_test_value(true);
  return make_test_value(false, detail::describe_difference(current, target));
}

inline void install_testkit_builtins(Environment& env) {
  register_builtin(env, "expect_true", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    detail::expect_arity(args, 1, "expect_true");
    return expect_true_value(args.positional.at(0));
  });
  register_builtin(env, "expect_false", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    detail::expect_arity(args, 1, "expect_false");
    return expect_false_value(args.positional.at(0));
  });
  register_builtin(env, "expect_equal", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    const Value* current = args.named_arg("current");
    const Value* target = args.named_arg("target");
    std::size_t next = 0;
    if (!current && next < args.positional.size()) current = &args.positional[next++];
    if (!target && next < args.positional.size()) target = &args.positional[next++];
    if (!current || !target || next != args.positional.size() || args.size() != 2)
      throw EvalError("expect_equal() takes arguments current and target");
    return expect_equal_value(*current, *target);
  });
}

/// Names the test runner masks, with the function each mask wraps.
class AssertionRegistry {
 public:
  /// The built-in assertions, taken from `builtins`.
  explicit AssertionRegistry(const EnvPtr& builtins) : builtins_(builtins) {
    for (const char* name : {"expect_true", "expect_false", "expect_equal"})
      if (const Value* fn = builtins->lookup_function(name)) entries_.emplace(name, *fn);
  }

  bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }
  const std::map<std::string, Value, std::less<>>& entries() const { return entries_; }

  /// Adds an assertion and binds it in the builtin environment so it also
  /// works outside test runs.
  void add(const std::string& name, Value fn) {
    if (!fn.is_function()) throw std::invalid_argument(fmt::format("assertion '{}' must be a function", name));
    if (contains(name) || builtins_->has_local(name))
      throw std::invalid_argument(fmt::format("assertion '{}' is already registered", name));
    builtins_->set(name, fn);
    entries_.emplace(name, std::move(fn));
  }

 private:
  EnvPtr builtins_;
  std::map<std::string, Value, std::less<>> entries_;
};

inline void register_assertion(AssertionRegistry& registry, const std::string& name, Value fn) {
  registry.add(name, std::move(fn));
}

/// Masks every registered assertion with a collector. Each captured entry
/// is the assertion's value plus its call location; the runner turns the
/// entries into TestResults after each step.
class TestingMasks : public MaskGroup {
 public:
  explicit TestingMasks(const AssertionRegistry& registry) : registry_(registry) {}

  std::string name() const override { return "testing"; }

  std::vector<std::pair<std::string, Value>> masks(const CaptureStore& store, const EvalContext&) override {
    std::vector<std::pair<std::string, Value>> out;
    for (const auto& [name, fn] : registry_.entries()) {
      out.emplace_back(name, make_builtin(name, [inner = fn, store](Evaluator& ev, CallArgs& args,
                                                                     const EnvPtr& env) {
                         const ExprNode* call = args.call_node;
                         Value out = ev.call(inner, args, env);
                         Value entry = out;
                         if (call) {
                           entry.set_attr("call", string(call->text));
                           entry.set_attr("file", string(call->span.file));
                           entry.set_attr("lines", Value(NumericVector{static_cast<double>(call->span.start_line),
                                                                       static_cast<double>(call->span.end_line)}));
                         }
                         store->set(fmt::format("r{:06}", store->bindings().size() + 1), std::move(entry));
                         return out;
                       }));
    }
    return out;
  }

  void after_step(const StepInfo& step, const CaptureStore& store, RunResult& result) override {
    flush(step, store, result);
  }

  void on_error(const StepInfo& step, const RunError& error, const CaptureStore& store, RunResult& result) override {
    flush(step, store, result);
    TestResult r;
    r.passed = false;
    r.call_text = std::string(step.text);
    // Reported at the top-level expression so the span contains call_text.
    const SourceSpan& span = step.node.span;
    r.file = span.file;
    r.first_line = static_cast<int>(span.start_line);
    r.last_line = static_cast<int>(span.end_line);
    r.info = error.message;
    result.test_results.push_back(std::move(r));
  }

 private:
  static void flush(const StepInfo& step, const CaptureStore& store, RunResult& result) {
    std::vector<std::string> keys;
    for (const auto& [key, entry] : store->bindings()) {
      keys.push_back(key);
      TestResult r = result_from_value(entry);
      const Value* call = entry.attr("call");
      const Value* file = entry.attr("file");
      const Value* lines = entry.attr("lines");
      if (call && file && lines) {
        r.call_text = call->strings()->front();
        r.file = file->strings()->front();
        r.first_line = static_cast<int>((*lines->numeric())[0]);
        r.last_line = static_cast<int>((*lines->numeric())[1]);
      } else {
        r.call_text = std::string(step.text);
        r.file = step.node.span.file;
        r.first_line = static_cast<int>(step.node.span.start_line);
        r.last_line = static_cast<int>(step.node.span.end_line);
      }
      result.test_results.push_back(std::move(r));
    }
    for (const auto& k : keys) store->erase(k);
  }

  const AssertionRegistry& registry_;
};

inline constexpr std::size_t kSummaryWidth = 38;

inline std::string summary_line(std::string_view basename, const std::vector<TestResult>& results) {
  std::size_t fails = 0;
  for (const auto& r : results) fails += !r.passed;
  std::string dots(basename.size() < kSummaryWidth ? kSummaryWidth - basename.size() : 1, '.');
  if (fails == 0) return fmt::format("Running {}{} {} tests OK", basename, dots, results.size());
  return fmt::format("Running {}{} {} fails / {} tests", basename, dots, fails, results.size());
}

inline std::string format_results(const std::vector<TestResult>& results, bool show_passes) {
  std::string out;
  for (const auto& r : results) {
    if (r.passed && !show_passes) continue;
    out += fmt::format("----- {:<12}: {}<{}--{}>\n", r.passed ? "PASSED" : "FAILED", r.file, r.first_line,
                       r.last_line);
    out += fmt::format(" call| {}\n", r.call_text);
    if (!r.passed) out += fmt::format(" info| {}\n", r.info.value_or(""));
  }
  return out;
}

/// Runs one test file with its directory as working directory, prints the
/// summary line and returns the results in execution order. Throws
/// ParseError when the file does not parse.
inline std::vector<TestResult> run_test_file(const std::filesystem::path& path, const EvalContext& ctx,
                                             const AssertionRegistry& registry) {
  const std::string basename = path.filename().string();
  Program program = load_program(path, basename);
  EvalContext local = ctx;
  local.working_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  MaskSet masks{std::make_shared<TestingMasks>(registry)};
  RunResult run = run_program(program, {}, masks, local, RunOptions{.echo = false});
  ctx.print(summary_line(basename, run.test_results));
  return std::move(run.test_results);
}

inline std::vector<TestResult> run_test_file(const std::filesystem::path& path, const EvalContext& ctx) {
  return run_test_file(path, ctx, AssertionRegistry(ctx.builtins));
}

}  // namespace tapscript
