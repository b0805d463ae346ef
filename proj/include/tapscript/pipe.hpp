#pragma once

// The `|>` operator. Secondary state travels with the data as reserved
// attributes: ".n" counts pipe stages, ".loggers" records each stage.

#include <optional>
#include <string>
#include <string_view>

#include <fmt/core.h>

#include "eval.hpp"

namespace tapscript {

inline Value start_counting_value(Value data) {
  data.set_attr(reserved::kCounter, number(0));
  return data;
}

inline Value end_counting_value(Value data, const EvalContext& ctx) {
  const Value* counter = data.attr(reserved::kCounter);
  const NumericVector* n = counter ? counter->numeric() : nullptr;
  if (!n || n->size() != 1) throw EvalError("not counting");
  ctx.message(fmt::format("Counted {} expressions", static_cast<long long>((*n)[0]) - 1));
  data.remove_attr(reserved::kCounter);
  return data;
}

/// Applies `rhs_fn` to `lhs`. The counter is incremented before the call,
/// reserved attributes dropped by the stage are re-attached afterwards, and
/// every logger on `lhs` records the stage. Stages that consume an attribute
/// (end_counting, dump_log) are exempt from re-attachment for that attribute.
inline Value pipe_apply(const Value& lhs, const Value& rhs_fn, std::string_view rhs_text, Evaluator& ev,
                        const EnvPtr& env) {
  Value fn = rhs_fn;
  if (!fn.is_function()) {
    const Value* stage = fn.attr(reserved::kStage);
    if (!stage || !stage->is_function())
      throw EvalError(fmt::format("right-hand side of |> must be a function, got a {}", type_name(rhs_fn)));
    fn = *stage;
  }
  if (const Closure* c = fn.closure(); c && c->params.size() != 1)
    throw EvalError(fmt::format("right-hand side of |> must take exactly one argument, not {}", c->params.size()));
  const unsigned consumes = fn.builtin() ? fn.builtin()->consumes : kConsumesNothing;

  Value arg = lhs;
  const Value* counter = lhs.attr(reserved::kCounter);
  if (counter) {
    const NumericVector* n = counter->numeric();
    if (!n || n->size() != 1) throw EvalError("malformed pipe counter");
    arg.set_attr(reserved::kCounter, number((*n)[0] + 1));
  }
  std::optional<Value> loggers;
  Value before;
  if (const Value* l = lhs.attr(reserved::kLoggers); l && l->loggers()) {
    loggers = *l;
    before = core(lhs);
  }

  Value out = ev.call(fn, {arg}, env);

  if (counter && !(consumes & kConsumesCounter) && !out.attr(reserved::kCounter))
    out.set_attr(reserved::kCounter, *arg.attr(reserved::kCounter));
  if (loggers && !(consumes & kConsumesLoggers)) {
    if (!out.attr(reserved::kLoggers)) out.set_attr(reserved::kLoggers, *loggers);
    const Value after = core(out);
    const std::string time = ev.context().clock->timestamp();
    for (const auto& logger : loggers->loggers()->items) {
      if (logger->dumped()) throw EvalError(fmt::format("{} logger was already dumped", logger->kind()));
      logger->add(time, rhs_text, logger->target_name(), before, after);
    }
  }
  return out;
}

inline void install_pipe_builtins(Environment& env) {
  auto start_stage = make_builtin("start_counting", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    detail::expect_arity(args, 1, "start_counting");
    return start_counting_value(args.positional.at(0));
  });
  // start_counting() returns TRUE for file runners that capture it, and
  // carries the pipe stage so `x |> start_counting()` works as well.
  register_builtin(env, "start_counting", [start_stage](Evaluator&, CallArgs& args, const EnvPtr&) {
    if (args.size() == 0) {
      Value marker = logical(true);
      marker.set_attr(reserved::kStage, start_stage);
      return marker;
    }
    detail::expect_arity(args, 1, "start_counting");
    return start_counting_value(args.positional.at(0));
  });

  auto end_stage = make_builtin(
      "end_counting",
      [](Evaluator& ev, CallArgs& args, const EnvPtr&) {
        detail::expect_arity(args, 1, "end_counting");
        return end_counting_value(args.positional.at(0), ev.context());
      },
      kConsumesCounter);
  register_builtin(
      env, "end_counting",
      [end_stage](Evaluator& ev, CallArgs& args, const EnvPtr&) {
        if (args.size() == 0) return end_stage;
        detail::expect_arity(args, 1, "end_counting");
        return end_counting_value(args.positional.at(0), ev.context());
      },
      kConsumesCounter);
}

}  // namespace tapscript
