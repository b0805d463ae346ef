#pragma once

// Change loggers. A logger is a shared audit object with add/dump: in a
// file run it follows a named object through every expression, in a pipe
// it rides along on the data's ".loggers" attribute. Dumps write CSV.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <fmt/core.h>

#include "eval.hpp"
#include "flow.hpp"
#include "values.hpp"

namespace tapscript {

namespace csv {

/// Quotes a field only when it holds a comma, quote or line break.
inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

inline std::string write(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) write_row(out, r);
  return out.str();
}

/// RFC 4180 reader; accepts "\n" or "\r\n" record separators.
inline std::vector<std::vector<std::string>> parse(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        field_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r': break;
      case '\n':
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
        field.clear();
        row.clear();
        field_started = false;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (field_started || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace csv

/// One row per add: whether the object changed.
class SimpleLogger : public Logger {
 public:
  struct Row {
    int step;
    std::string time;
    std::string expression;
    bool changed;
  };

  std::string_view kind() const override { return "simple"; }
  std::size_t row_count() const override { return rows_.size(); }
  const std::vector<Row>& rows() const { return rows_; }

  void write_csv(std::ostream& out) const override {
    csv::write_row(out, {"step", "time", "expression", "changed"});
    for (const auto& r : rows_)
      csv::write_row(out, {std::to_string(r.step), r.time, r.expression, r.changed ? "TRUE" : "FALSE"});
  }

 protected:
  void record(std::string_view time, std::string_view expression, std::string_view, const Value& before,
              const Value& after) override {
    rows_.push_back({steps(), std::string(time), std::string(expression), !deep_equal(before, after)});
  }

 private:
  std::vector<Row> rows_;
};

/// One row per changed table cell; other values get a single whole-object
/// row (row 0, empty column).
class CellwiseLogger : public Logger {
 public:
  struct Row {
    int step;
    std::string time;
    std::string expression;
    std::string variable;
    std::size_t row;
    std::string col;
    std::string old_value;
    std::string new_value;
  };

  std::string_view kind() const override { return "cellwise"; }
  std::size_t row_count() const override { return rows_.size(); }
  const std::vector<Row>& rows() const { return rows_; }

  void write_csv(std::ostream& out) const override {
    csv::write_row(out, {"step", "time", "expression", "variable", "row", "col", "old", "new"});
    for (const auto& r : rows_)
      csv::write_row(out, {std::to_string(r.step), r.time, r.expression, r.variable, std::to_string(r.row), r.col,
                           r.old_value, r.new_value});
  }

 protected:
  void record(std::string_view time, std::string_view expression, std::string_view variable, const Value& before,
              const Value& after) override {
    if (deep_equal(before, after)) return;
    Row base{steps(), std::string(time), std::string(expression), std::string(variable), 0, {}, {}, {}};
    const Table* old_t = before.table();
    const Table* new_t = after.table();
    if (!old_t || !new_t) {
      base.old_value = summary(before);
      base.new_value = summary(after);
      rows_.push_back(std::move(base));
      return;
    }
    std::vector<std::string> columns = new_t->names;
    for (const auto& n : old_t->names)
      if (!new_t->column(n)) columns.push_back(n);
    for (const auto& name : columns) {
      static const Value missing;
      const Value& a = old_t->column(name) ? *old_t->column(name) : missing;
      const Value& b = new_t->column(name) ? *new_t->column(name) : missing;
      const std::size_t n = std::max(a.length(), b.length());
      for (std::size_t i = 0; i < n; ++i) {
        std::string old_cell = i < a.length() ? format_scalar(a, i) : "";
        std::string new_cell = i < b.length() ? format_scalar(b, i) : "";
        if (i < a.length() && i < b.length() && cell_equal(a, b, i)) continue;
        Row r = base;
        r.row = i + 1;
        r.col = name;
        r.old_value = std::move(old_cell);
        r.new_value = std::move(new_cell);
        rows_.push_back(std::move(r));
      }
    }
  }

 private:
  static bool cell_equal(const Value& a, const Value& b, std::size_t i) {
    if (a.kind() != b.kind()) return false;
    if (auto x = a.numeric()) {
      double l = (*x)[i], r = (*b.numeric())[i];
      return l == r || (std::isnan(l) && std::isnan(r));
    }
    if (auto x = a.logical()) return (*x)[i] == (*b.logical())[i];
    return (*a.strings())[i] == (*b.strings())[i];
  }

  static std::string summary(const Value& v) {
    if (v.is_null()) return "NULL";
    if (!v.is_vector()) return std::string(type_name(v));
    std::string out;
    for (std::size_t i = 0; i < v.length(); ++i) {
      if (i) out.push_back(' ');
      out += format_scalar(v, i);
    }
    return out;
  }

  std::vector<Row> rows_;
};

inline std::shared_ptr<Logger> make_logger(std::string_view kind) {
  if (kind == "simple") return std::make_shared<SimpleLogger>();
  if (kind == "cellwise") return std::make_shared<CellwiseLogger>();
  throw std::invalid_argument(fmt::format("unknown logger kind '{}'", kind));
}

inline void logger_add(Logger& logger, std::string_view time, std::string_view expression, const Value& before,
                       const Value& after, std::string_view variable = {}) {
  if (logger.dumped()) throw EvalError(fmt::format("cannot add to a dumped {} logger", logger.kind()));
  logger.add(time, expression, variable, before, after);
}

/// Writes the logger's CSV to {dir}/{target}_{kind}.csv (or {dir}/{kind}.csv
/// without a target) and reports "Dumped a log at {path}". A logger dumps
/// once; later calls return an empty path and write nothing.
inline std::string logger_dump(Logger& logger, const std::filesystem::path& directory, const EvalContext& ctx) {
  if (logger.dumped()) return {};
  std::string stem = logger.target_name().empty() ? std::string(logger.kind())
                                                  : logger.target_name() + "_" + std::string(logger.kind());
  std::error_code ec;
  if (!directory.empty()) std::filesystem::create_directories(directory, ec);
  std::filesystem::path path = ctx.log_paths->claim(directory, stem);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw EvalError(fmt::format("cannot write log file '{}'", path.string()));
  logger.write_csv(out);
  out.close();
  if (!out) throw EvalError(fmt::format("failed writing log file '{}'", path.string()));
  logger.mark_dumped();
  ctx.message(fmt::format("Dumped a log at {}", path.string()));
  return path.string();
}

// ---- pipe-mode fallbacks --------------------------------------------------

namespace detail {

inline Value append_loggers(Value data, const Value& loggers) {
  LoggerRefs merged;
  if (const Value* existing = data.attr(reserved::kLoggers); existing && existing->loggers())
    merged = *existing->loggers();
  for (const auto& l : loggers.loggers()->items) merged.items.push_back(l);
  data.set_attr(reserved::kLoggers, Value(std::move(merged)));
  return data;
}

inline const Value& require_logger(const Value& v) {
  if (!v.loggers() || v.loggers()->items.empty())
    throw EvalError(fmt::format("start_log() needs a logger, got a {}", type_name(v)));
  return v;
}

}  // namespace detail

/// Attaches loggers to a value (pipe mode).
inline Value start_log_value(Value data, const Value& loggers) {
  return detail::append_loggers(std::move(data), detail::require_logger(loggers));
}

/// Dumps every logger carried by the value and strips them.
inline Value dump_log_value(Value data, const EvalContext& ctx) {
  if (const Value* l = data.attr(reserved::kLoggers); l && l->loggers())
    for (const auto& logger : l->loggers()->items) logger_dump(*logger, ctx.log_dir, ctx);
  data.remove_attr(reserved::kLoggers);
  return data;
}

inline Value logger_constructor(const std::string& kind) {
  auto obj = std::make_shared<Object>();
  obj->name = kind;
  obj->fields.emplace_back("new", make_builtin(kind + "$new", [kind](Evaluator&, CallArgs& args, const EnvPtr&) {
                             detail::expect_arity(args, 0, kind + "$new");
                             return Value(LoggerRefs{{make_logger(kind)}});
                           }));
  return Value(std::shared_ptr<const Object>(std::move(obj)));
}

inline void install_logger_builtins(Environment& env) {
  env.set("simple", logger_constructor("simple"));
  env.set("cellwise", logger_constructor("cellwise"));

  register_builtin(env, "start_log", [](Evaluator&, CallArgs& args, const EnvPtr&) -> Value {
    if (args.size() == 1) {
      Value loggers = detail::require_logger(args.positional.at(0));
      return make_builtin("start_log", [loggers](Evaluator&, CallArgs& inner, const EnvPtr&) {
        detail::expect_arity(inner, 1, "start_log");
        return start_log_value(inner.positional.at(0), loggers);
      });
    }
    detail::expect_arity(args, 2, "start_log");
    return start_log_value(args.positional.at(0), args.positional.at(1));
  });

  auto dump_stage = make_builtin(
      "dump_log",
      [](Evaluator& ev, CallArgs& args, const EnvPtr&) {
        detail::expect_arity(args, 1, "dump_log");
        return dump_log_value(args.positional.at(0), ev.context());
      },
      kConsumesLoggers);
  register_builtin(
      env, "dump_log",
      [dump_stage](Evaluator& ev, CallArgs& args, const EnvPtr&) {
        if (args.size() == 0) return dump_stage;
        detail::expect_arity(args, 1, "dump_log");
        return dump_log_value(args.positional.at(0), ev.context());
      },
      kConsumesLoggers);
}

// ---- file-runner masks ----------------------------------------------------

/// Masks start_log/dump_log for a file run. The "logging" store maps each
/// tracked object name to its latest snapshot, with the object's loggers on
/// the snapshot's ".loggers" attribute.
class LoggingMasks : public MaskGroup {
 public:
  std::string name() const override { return "logging"; }

  std::vector<std::pair<std::string, Value>> masks(const CaptureStore& store, const EvalContext& ctx) override {
    std::vector<std::pair<std::string, Value>> out;
    const Value* start = ctx.builtins ? ctx.builtins->lookup_function("start_log") : nullptr;
    const Value* dump = ctx.builtins ? ctx.builtins->lookup_function("dump_log") : nullptr;
    if (start) out.emplace_back("start_log", mask_start_log(store, *start));
    if (dump) out.emplace_back("dump_log", mask_dump_log(store, *dump));
    return out;
  }

  void after_step(const StepInfo& step, const CaptureStore& store, RunResult&) override {
    if (store->bindings().empty()) return;
    const std::string time = step.ctx.clock->timestamp();
    std::vector<std::pair<std::string, Value>> tracked(store->bindings().begin(), store->bindings().end());
    for (auto& [name, snapshot] : tracked) {
      const Value* found = step.runtime->lookup(name);
      Value current = found ? core(*found) : Value();
      const Value before = core(snapshot);
      for (const auto& logger : snapshot.attr(reserved::kLoggers)->loggers()->items)
        if (!logger->dumped()) logger->add(time, step.text, name, before, current);
      current.set_attr(reserved::kLoggers, *snapshot.attr(reserved::kLoggers));
      store->set(name, std::move(current));
    }
  }

  void finish(const EnvPtr& runtime, const CaptureStore& store, RunResult&, const EvalContext& ctx) override {
    dump_tracked(store, ctx, std::nullopt);
    // Pipe-mode loggers left on values in the runtime.
    for (const auto& [name, v] : runtime->bindings())
      if (const Value* l = v.attr(reserved::kLoggers); l && l->loggers())
        for (const auto& logger : l->loggers()->items) logger_dump(*logger, ctx.log_dir, ctx);
  }

 private:
  static void dump_tracked(const CaptureStore& store, const EvalContext& ctx, std::optional<std::string> only) {
    std::vector<std::string> names;
    for (const auto& [name, v] : store->bindings())
      if (!only || *only == name) names.push_back(name);
    for (const auto& name : names) {
      const Value* snapshot = store->get_local(name);
      for (const auto& logger : snapshot->attr(reserved::kLoggers)->loggers()->items)
        logger_dump(*logger, ctx.log_dir, ctx);
      store->erase(name);
    }
  }

  /// start_log(name, logger) tracks `name`; other call shapes fall back to
  /// the pipe-mode builtin.
  static Value mask_start_log(const CaptureStore& store, Value fallback) {
    return make_builtin("start_log", [store, fallback](Evaluator& ev, CallArgs& args, const EnvPtr& env) -> Value {
      const ExprNode* target = args.syntax(0);
      if (args.positional.size() != 2 || !args.named.empty() || !target || target->kind != NodeKind::Ident)
        return ev.call(fallback, args, env);
      const Value& loggers = detail::require_logger(args.positional[1]);
      for (const auto& l : loggers.loggers()->items) l->set_target_name(target->text);
      Value snapshot = core(args.positional[0]);
      if (const Value* existing = store->get_local(target->text))
        snapshot.set_attr(reserved::kLoggers, *existing->attr(reserved::kLoggers));
      store->set(target->text, detail::append_loggers(std::move(snapshot), loggers));
      ev.set_invisible();
      return args.positional[0];
    });
  }

  /// dump_log() dumps every tracked object, dump_log(name) one of them.
  /// The no-argument result also carries the pipe stage, so
  /// `x |> dump_log()` keeps working inside a file run.
  static Value mask_dump_log(const CaptureStore& store, Value fallback) {
    return make_builtin(
        "dump_log",
        [store, fallback](Evaluator& ev, CallArgs& args, const EnvPtr& env) -> Value {
          if (args.size() == 0) {
            dump_tracked(store, ev.context(), std::nullopt);
            Value result;
            result.set_attr(reserved::kStage, ev.call(fallback, args, env));
            ev.set_invisible();
            return result;
          }
          const ExprNode* target = args.syntax(0);
          if (args.positional.size() == 1 && target && target->kind == NodeKind::Ident &&
              store->has_local(target->text)) {
            dump_tracked(store, ev.context(), target->text);
            ev.set_invisible();
            return args.positional[0];
          }
          return ev.call(fallback, args, env);
        },
        kConsumesLoggers);
  }
};

}  // namespace tapscript
