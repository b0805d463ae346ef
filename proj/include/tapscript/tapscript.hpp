#pragma once

#include <memory>
#include <ostream>

#include "eval.hpp"
#include "flow.hpp"
#include "loggers.hpp"
#include "pipe.hpp"
#include "syntax.hpp"
#include "testkit.hpp"
#include "values.hpp"

namespace tapscript {

/// Root environment holding every builtin.
inline EnvPtr make_builtin_env() {
  EnvPtr env = new_environment();
  install_core_builtins(*env);
  install_pipe_builtins(*env);
  install_logger_builtins(*env);
  install_testkit_builtins(*env);
  return env;
}

inline EvalContext make_context(std::ostream* out = nullptr, std::ostream* messages = nullptr,
                                std::shared_ptr<Clock> clock = std::make_shared<FixedClock>()) {
  EvalContext ctx;
  ctx.clock = std::move(clock);
  ctx.out = out;
  ctx.messages = messages;
  ctx.builtins = make_builtin_env();
  return ctx;
}

/// Mask groups for script runs: counting and logging.
inline MaskSet default_masks() {
  return {std::make_shared<CountingMasks>(), std::make_shared<LoggingMasks>()};
}

}  // namespace tapscript
