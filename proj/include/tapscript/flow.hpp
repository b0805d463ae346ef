#pragma once

// File runner for secondary data flows.
//
// A script's top-level expressions e1..ek are the primary flow. Hooks are
// secondary expressions run between them, i.e. the script executes as
// ek o_h ... o_h e1 where a o_h b = a o h o b. Users steer secondary flows
// by calling ordinary functions that the runner masks locally with capture
// wrappers; captured values land in runner-owned stores that no script
// binding can reach.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/core.h>

#include "eval.hpp"
#include "syntax.hpp"
#include "test_result.hpp"
#include "values.hpp"

namespace tapscript {

// ---- expression composition ---------------------------------------------

/// A primary or secondary expression viewed as a state transformer.
template <class State>
using Expression = std::function<void(State&)>;

/// a o b: apply b, then a.
template <class State>
Expression<State> compose(Expression<State> a, Expression<State> b) {
  return [a = std::move(a), b = std::move(b)](State& s) {
    b(s);
    a(s);
  };
}

/// a o_h b = a o h o b.
template <class State>
Expression<State> compose_through(Expression<State> a, Expression<State> hook, Expression<State> b) {
  return compose<State>(std::move(a), compose<State>(std::move(hook), std::move(b)));
}

/// ek o_h ... o_h e1 grouped as ((ek o_h ek-1) o_h ...) o_h e1. `in_order`
/// lists e1 first.
template <class State>
Expression<State> chain_left(std::span<const Expression<State>> in_order, const Expression<State>& hook) {
  if (in_order.empty()) return [](State&) {};
  Expression<State> acc = in_order.back();
  for (std::size_t j = in_order.size() - 1; j-- > 0;) acc = compose_through<State>(acc, hook, in_order[j]);
  return acc;
}

/// ek o_h ... o_h e1 grouped as ek o_h (ek-1 o_h (... o_h e1)).
template <class State>
Expression<State> chain_right(std::span<const Expression<State>> in_order, const Expression<State>& hook) {
  if (in_order.empty()) return [](State&) {};
  Expression<State> acc = in_order.front();
  for (std::size_t j = 1; j < in_order.size(); ++j) acc = compose_through<State>(in_order[j], hook, acc);
  return acc;
}

/// h o ek o h o ek-1 o ... o h o e1: the hook inserted after every expression.
template <class State>
Expression<State> insert_after_each(std::span<const Expression<State>> in_order, const Expression<State>& hook) {
  Expression<State> acc = [](State&) {};
  for (const auto& e : in_order) acc = compose<State>(hook, compose<State>(e, acc));
  return acc;
}

// ---- stores -------------------------------------------------------------

/// Runner-owned environment without a parent.
using CaptureStore = EnvPtr;

inline CaptureStore new_capture_store() { return new_environment(nullptr); }

/// One capture store per mask group, created at run start.
class RunStores {
 public:
  const CaptureStore& open(const std::string& group) {
    auto it = stores_.find(group);
    if (it == stores_.end()) it = stores_.emplace(group, new_capture_store()).first;
    return it->second;
  }

  CaptureStore get(std::string_view group) const {
    auto it = stores_.find(group);
    return it == stores_.end() ? nullptr : it->second;
  }

  const Value* read(std::string_view group, std::string_view key) const {
    auto it = stores_.find(group);
    return it == stores_.end() ? nullptr : it->second->get_local(key);
  }

 private:
  std::map<std::string, CaptureStore, std::less<>> stores_;
};

/// Wraps `inner` so each successful call also copies its result to store[key].
inline Value make_capture(Value inner, CaptureStore store, std::string key) {
  if (!inner.is_function()) throw std::invalid_argument("make_capture needs a function");
  const Builtin* b = inner.builtin();
  std::string name = b ? b->name : "closure";
  unsigned consumes = b ? b->consumes : kConsumesNothing;
  return make_builtin(
      std::move(name),
      [inner, store = std::move(store), key = std::move(key)](Evaluator& ev, CallArgs& args, const EnvPtr& env) {
        Value out = ev.call(inner, args, env);
        store->set(key, out);
        return out;
      },
      consumes);
}

/// Like make_capture, but appends: results go to numbered keys key000001, ...
inline Value make_collector(Value inner, CaptureStore store, std::string key) {
  if (!inner.is_function()) throw std::invalid_argument("make_collector needs a function");
  const Builtin* b = inner.builtin();
  std::string name = b ? b->name : "closure";
  return make_builtin(std::move(name), [inner, store = std::move(store), key = std::move(key)](
                                           Evaluator& ev, CallArgs& args, const EnvPtr& env) {
    Value out = ev.call(inner, args, env);
    store->set(fmt::format("{}{:06}", key, store->bindings().size() + 1), out);
    return out;
  });
}

// ---- hooks --------------------------------------------------------------

struct StepInfo {
  std::size_t index = 0;  // 1-based
  const ExprNode& node;
  std::string_view text;
  const EnvPtr& runtime;
  const RunStores& stores;
  const EvalContext& ctx;
};

struct ReportRow {
  std::size_t step = 0;
  std::string metric;
  std::string value;
  bool operator==(const ReportRow&) const = default;
};

struct HookReport {
  std::string name;
  std::string message;
  std::vector<ReportRow> rows;
  bool operator==(const HookReport&) const = default;
};

/// A secondary expression. before_step may read stores; on_step reads the
/// runtime environment. Neither writes to the runtime: state lives in the
/// hook itself.
class Hook {
 public:
  virtual ~Hook() = default;
  virtual std::string name() const = 0;
  virtual void on_start(const RunStores&, Clock&) {}
  virtual void before_step(const StepInfo&) {}
  virtual void on_step(const StepInfo& step) = 0;
  virtual HookReport on_finish() = 0;
};

using HookList = std::vector<std::unique_ptr<Hook>>;

/// Counts expressions. When gated, expression i counts only if the counting
/// store held TRUE before it ran.
class CountingHook : public Hook {
 public:
  explicit CountingHook(bool gated) : gated_(gated) {}

  std::string name() const override { return gated_ ? "count-gated" : "count"; }
  void on_start(const RunStores&, Clock&) override {
    count_ = 0;
    rows_.clear();
  }
  void before_step(const StepInfo& step) override {
    const Value* flag = step.stores.read("counting", "counting");
    open_ = !gated_ || (flag && is_true(*flag));
  }
  void on_step(const StepInfo& step) override {
    if (!open_) return;
    ++count_;
    rows_.push_back({step.index, "count", std::to_string(count_)});
  }
  HookReport on_finish() override { return {name(), fmt::format("Counted {} expressions", count_), rows_}; }

  std::size_t count() const { return count_; }

 private:
  bool gated_;
  bool open_ = false;
  std::size_t count_ = 0;
  std::vector<ReportRow> rows_;
};

/// Per-expression durations: differences of monotonic readings taken once
/// before e1 and after every expression.
class TimingHook : public Hook {
 public:
  std::string name() const override { return "time"; }
  void on_start(const RunStores&, Clock& clock) override {
    clock_ = &clock;
    stamps_ = {clock.monotonic_seconds()};
  }
  void on_step(const StepInfo&) override { stamps_.push_back(clock_->monotonic_seconds()); }
  HookReport on_finish() override {
    HookReport r{name(), {}, {}};
    double total = 0;
    for (std::size_t i = 1; i < stamps_.size(); ++i) {
      double d = std::max(0.0, stamps_[i] - stamps_[i - 1]);
      total += d;
      r.rows.push_back({i, "seconds", fmt::format("{}", d)});
    }
    r.message = fmt::format("Timed {} expressions in {} seconds", r.rows.size(), total);
    return r;
  }

  std::vector<double> durations() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < stamps_.size(); ++i) out.push_back(std::max(0.0, stamps_[i] - stamps_[i - 1]));
    return out;
  }

 private:
  Clock* clock_ = nullptr;
  std::vector<double> stamps_;
};

/// Total interpreter cells held by the runtime's own bindings after each step.
class MemoryHook : public Hook {
 public:
  std::string name() const override { return "mem"; }
  void on_start(const RunStores&, Clock&) override { totals_.clear(); }
  void on_step(const StepInfo& step) override {
    std::size_t total = 0;
    for (const auto& [k, v] : step.runtime->bindings()) total += cell_count(v);
    totals_.push_back(total);
  }
  HookReport on_finish() override {
    HookReport r{name(), {}, {}};
    std::size_t peak = 0;
    for (std::size_t i = 0; i < totals_.size(); ++i) {
      r.rows.push_back({i + 1, "cells", std::to_string(totals_[i])});
      peak = std::max(peak, totals_[i]);
    }
    r.message = fmt::format("Peak {} cells over {} expressions", peak, totals_.size());
    return r;
  }

  const std::vector<std::size_t>& totals() const { return totals_; }

 private:
  std::vector<std::size_t> totals_;
};

/// Whether each expression changed one named variable. The first sighting
/// only takes a snapshot.
class ChangeHook : public Hook {
 public:
  explicit ChangeHook(std::string var) : var_(std::move(var)) {}

  std::string name() const override { return "track"; }
  void on_start(const RunStores&, Clock&) override {
    snapshot_.reset();
    flags_.clear();
  }
  void on_step(const StepInfo& step) override {
    const Value* current = step.runtime->lookup(var_);
    if (!current) return;
    if (snapshot_) flags_.emplace_back(step.index, !deep_equal(*snapshot_, *current));
    snapshot_ = *current;
  }
  HookReport on_finish() override {
    HookReport r{name(), {}, {}};
    std::size_t changed = 0;
    for (const auto& [step, flag] : flags_) {
      r.rows.push_back({step, var_, flag ? "TRUE" : "FALSE"});
      changed += flag;
    }
    r.message = fmt::format("{} changed in {} of {} expressions", var_, changed, flags_.size());
    return r;
  }

  const std::vector<std::pair<std::size_t, bool>>& flags() const { return flags_; }

 private:
  std::string var_;
  std::optional<Value> snapshot_;
  std::vector<std::pair<std::size_t, bool>> flags_;
};

inline std::unique_ptr<Hook> counting_hook(bool gated) { return std::make_unique<CountingHook>(gated); }
inline std::unique_ptr<Hook> timing_hook() { return std::make_unique<TimingHook>(); }
inline std::unique_ptr<Hook> memory_hook() { return std::make_unique<MemoryHook>(); }
inline std::unique_ptr<Hook> change_hook(std::string var) { return std::make_unique<ChangeHook>(std::move(var)); }

// ---- masks --------------------------------------------------------------

struct RunError {
  std::string message;
  std::optional<SourceSpan> span;
};

struct RunResult {
  EnvPtr runtime;
  std::vector<HookReport> reports;
  std::vector<TestResult> test_results;
  std::optional<RunError> error;
};

/// A family of masks sharing one capture store. Groups keep their per-run
/// state in that store, so one group instance can serve many runs.
class MaskGroup {
 public:
  virtual ~MaskGroup() = default;
  /// Name of the group's capture store.
  virtual std::string name() const = 0;
  /// Bindings to place in the runtime environment.
  virtual std::vector<std::pair<std::string, Value>> masks(const CaptureStore& store, const EvalContext& ctx) = 0;
  virtual void after_step(const StepInfo&, const CaptureStore&, RunResult&) {}
  virtual void on_error(const StepInfo&, const RunError&, const CaptureStore&, RunResult&) {}
  virtual void finish(const EnvPtr& /*runtime*/, const CaptureStore&, RunResult&, const EvalContext&) {}
};

using MaskSet = std::vector<std::shared_ptr<MaskGroup>>;

/// start_counting() captured into the "counting" store.
class CountingMasks : public MaskGroup {
 public:
  std::string name() const override { return "counting"; }
  std::vector<std::pair<std::string, Value>> masks(const CaptureStore& store, const EvalContext& ctx) override {
    const Value* inner = ctx.builtins ? ctx.builtins->lookup_function("start_counting") : nullptr;
    if (!inner) return {};
    return {{"start_counting", make_capture(*inner, store, "counting")}};
  }
};

/// Binds every group's masks in `runtime`; returns what was installed.
inline std::vector<std::pair<std::string, Value>> install_masks(const EnvPtr& runtime, const MaskSet& masks,
                                                                RunStores& stores, const EvalContext& ctx) {
  std::vector<std::pair<std::string, Value>> installed;
  for (const auto& group : masks) {
    for (auto& [name, fn] : group->masks(stores.open(group->name()), ctx)) {
      runtime->set(name, fn);
      installed.emplace_back(std::move(name), std::move(fn));
    }
  }
  return installed;
}

struct RunOptions {
  /// Auto-print visible non-NULL results of top-level expressions.
  bool echo = true;
};

/// Runs a parsed program: fresh runtime under ctx.builtins, masks
/// installed, hooks after every expression. Evaluation errors stop the run
/// but keep everything gathered so far.
inline RunResult run_program(const Program& program, const HookList& hooks, const MaskSet& masks,
                             const EvalContext& ctx, RunOptions options = {}) {
  RunResult result;
  result.runtime = new_environment(ctx.builtins);
  RunStores stores;
  auto installed = install_masks(result.runtime, masks, stores, ctx);
  for (const auto& h : hooks) h->on_start(stores, *ctx.clock);

  Evaluator ev(ctx);
  for (std::size_t i = 0; i < program.exprs.size(); ++i) {
    const ExprNode& expr = *program.exprs[i];
    const std::string text = source_slice(program, expr.span);
    StepInfo step{i + 1, expr, text, result.runtime, stores, ctx};

    for (const auto& h : hooks) h->before_step(step);
    std::optional<RunError> failure;
    try {
      Value v = ev.eval(expr, result.runtime);
      if (options.echo && ev.visible() && !v.is_null()) ctx.print(format_value(v));
    } catch (const EvalError& e) {
      failure = RunError{e.what(), e.span() ? e.span() : expr.span};
    } catch (const std::exception& e) {
      failure = RunError{e.what(), expr.span};
    }
    if (failure) {
      for (const auto& g : masks) g->on_error(step, *failure, stores.open(g->name()), result);
      result.error = std::move(failure);
      break;
    }
    for (const auto& g : masks) g->after_step(step, stores.open(g->name()), result);
    for (const auto& h : hooks) h->on_step(step);
  }

  for (const auto& g : masks) {
    try {
      g->finish(result.runtime, stores.open(g->name()), result, ctx);
    } catch (const std::exception& e) {
      if (!result.error) result.error = RunError{e.what(), std::nullopt};
    }
  }
  for (const auto& h : hooks) result.reports.push_back(h->on_finish());

  // Masks are local to the run; user rebindings of the same names stay.
  for (const auto& [name, fn] : installed) {
    const Value* bound = result.runtime->get_local(name);
    if (bound && bound->builtin() == fn.builtin()) result.runtime->erase(name);
  }
  return result;
}

inline Program load_program(const std::filesystem::path& path, const std::string& file_name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open file '{}'", path.string()));
  std::string source{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_program(std::move(source), file_name);
}

/// Parses and runs a script file. Throws when the file is unreadable or
/// does not parse.
inline RunResult run_file(const std::filesystem::path& path, const HookList& hooks, const MaskSet& masks,
                          const EvalContext& ctx, RunOptions options = {}) {
  return run_program(load_program(path, path.string()), hooks, masks, ctx, options);
}

}  // namespace tapscript
